"""Discretized Brownian and diffusion sample paths.

A :class:`Path` is a time grid plus d-dimensional values, the universal
carrier for inner clocks, outer processes, and their compositions.  Between
grid nodes paths are read by linear interpolation, which makes every path a
total function of time at the cost of an O(dt) bias quantified by the
refinement studies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, Optional

import numpy as np

from .errors import (
    InvalidInputError,
    NumericalDomainError,
    OutOfRangeError,
)
from .seeding import Seed, as_seed, rng_or_derive


@dataclass(frozen=True)
class TimeGrid:
    """Finite, strictly increasing times starting at 0."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if t.ndim != 1 or t.size == 0:
            raise InvalidInputError("time grid must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(t)):
            raise InvalidInputError("time grid entries must be finite")
        if t[0] != 0.0:
            raise InvalidInputError("time grid must start at 0")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise InvalidInputError("time grid must be strictly increasing")

    @classmethod
    def regular(cls, t_end: float, n_steps: int) -> "TimeGrid":
        if t_end <= 0 or n_steps < 1:
            raise InvalidInputError("regular grid needs t_end > 0 and n_steps >= 1")
        return cls(np.linspace(0.0, t_end, n_steps + 1))

    def __len__(self):
        return self.times.size


@dataclass(frozen=True)
class Path:
    """Values sampled on a time grid; shape ``(len(grid), dim)``."""

    grid: TimeGrid
    values: np.ndarray
    dim: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        object.__setattr__(self, "values", v)
        if self.dim < 1:
            raise InvalidInputError("dim must be positive")
        if v.shape != (len(self.grid), self.dim):
            raise InvalidInputError(
                f"values shape {v.shape} does not match (n_times, dim) = "
                f"({len(self.grid)}, {self.dim})"
            )

    @property
    def t_end(self) -> float:
        return float(self.grid.times[-1])


def _path_unchecked(grid: TimeGrid, values: np.ndarray, dim: int) -> Path:
    """Construct a Path without validation; values must already be (n, dim).

    Ensemble loops build hundreds of thousands of short-lived paths whose
    shapes are correct by construction; skipping __post_init__ there is a
    measurable win.
    """
    p = object.__new__(Path)
    object.__setattr__(p, "grid", grid)
    object.__setattr__(p, "values", values)
    object.__setattr__(p, "dim", dim)
    return p


def evaluate(path: Path, t: float) -> np.ndarray:
    """Path value at time t: exact at grid nodes, linear in between."""
    times = path.grid.times
    if t < 0 or t > times[-1]:
        raise OutOfRangeError(f"t = {t} outside path range [0, {times[-1]}]")
    return evaluate_many(path, np.asarray([t], dtype=float))[0]


def evaluate_many(path: Path, t: np.ndarray) -> np.ndarray:
    """Vectorized :func:`evaluate`; t must lie within the path range."""
    t = np.asarray(t, dtype=float)
    times = path.grid.times
    if t.size and (t.min() < 0 or t.max() > times[-1]):
        raise OutOfRangeError("some query times lie outside the path range")
    if path.dim == 1:
        return np.interp(t, times, path.values[:, 0])[:, None]
    out = np.empty((t.size, path.dim))
    for j in range(path.dim):
        out[:, j] = np.interp(t, times, path.values[:, j])
    return out


def sample_bm(grid: TimeGrid, dim: int, seed) -> Path:
    """Brownian motion from the origin: independent N(0, dt) increments.

    Coordinates are independent, so a ``dim = n`` path doubles as n
    independent one-dimensional replicates.
    """
    if dim < 1:
        raise InvalidInputError("dim must be positive")
    rng = rng_or_derive(seed, "sample_bm")
    n = len(grid)
    values = np.zeros((n, dim))
    if n > 1:
        dt = np.diff(grid.times)
        incs = rng.standard_normal((n - 1, dim)) * np.sqrt(dt)[:, None]
        np.cumsum(incs, axis=0, out=values[1:])
    return Path(grid, values, dim)


def _bridge_fill(times, values, insert_times, rng):
    """Insert conditionally drawn values at insert_times (sorted, strict interior).

    Sequential bridge sampling: within a host interval the inserts are drawn
    left to right, each conditioned on the previously inserted point and the
    right host node.  Returns (new_times, new_values).
    """
    n_new = times.size + insert_times.size
    dim = values.shape[1]
    out_t = np.empty(n_new)
    out_v = np.empty((n_new, dim))
    pos = np.searchsorted(times, insert_times)  # host right-node index
    # merged order: all original plus inserts; inserts within one interval stay sorted
    out_t[: times.size] = times
    out_t[times.size:] = insert_times
    order = np.argsort(out_t, kind="stable")
    out_t = out_t[order]
    is_insert = order >= times.size
    out_v[~is_insert] = values
    del pos

    left_t, left_v = None, None
    for i in range(n_new):
        if not is_insert[i]:
            left_t, left_v = out_t[i], out_v[i]
            continue
        # right anchor: next original node (inserts are interior, so one exists)
        j = i + 1
        while is_insert[j]:
            j += 1
        rt, rv = out_t[j], out_v[j]
        t = out_t[i]
        w = (t - left_t) / (rt - left_t)
        mean = left_v + w * (rv - left_v)
        var = (t - left_t) * (rt - t) / (rt - left_t)
        out_v[i] = mean + np.sqrt(var) * rng.standard_normal(dim)
        left_t, left_v = t, out_v[i]
    return out_t, out_v


def refine_bridge(path: Path, insert_times, seed) -> Path:
    """Insert Brownian-bridge draws at new interior times.

    Original nodes are preserved exactly; the marginal law at an inserted
    time matches sampling the finer grid directly.
    """
    ins = np.asarray(insert_times, dtype=float)
    if ins.size == 0:
        return path
    times = path.grid.times
    if np.any(ins <= times[0]) or np.any(ins >= times[-1]):
        raise InvalidInputError("insert times must lie strictly inside the path range")
    if np.any(np.isin(ins, times)):
        raise InvalidInputError("insert times must not coincide with existing nodes")
    ins = np.sort(ins)
    if np.any(np.diff(ins) == 0):
        raise InvalidInputError("insert times must be distinct")
    rng = rng_or_derive(seed, "refine_bridge")
    new_t, new_v = _bridge_fill(times, path.values, ins, rng)
    return Path(TimeGrid(new_t), new_v, path.dim)


@dataclass(frozen=True)
class GeneratorSpec:
    """Outer-process generator: half-Laplacian or isotropic divergence form.

    The divergence form is sum_i d/dx_i (g(x) d/dx_i f) with a scalar field
    g; the equivalent SDE has drift grad g and squared volatility 2 g, which
    is how :func:`sample_diffusion` simulates it.  ``c`` is the declared
    ellipticity constant: c <= g(x) <= 1/c.
    """

    variant: Literal["half_laplacian", "divergence_form"]
    g: Optional[Callable] = None
    grad_g: Optional[Callable] = None
    ellipticity: float = 1.0

    def __post_init__(self):
        if self.variant not in ("half_laplacian", "divergence_form"):
            raise InvalidInputError(f"unknown generator variant {self.variant!r}")
        if self.variant == "divergence_form":
            if self.g is None or self.grad_g is None:
                raise InvalidInputError("divergence form requires g and grad_g")
            if not 0 < self.ellipticity <= 1:
                raise InvalidInputError("ellipticity constant must lie in (0, 1]")

    def coefficient(self, x):
        """g(x); identically 1/2 for the half-Laplacian."""
        if self.variant == "half_laplacian":
            return np.full(np.shape(x), 0.5) if np.ndim(x) else 0.5
        return self.g(x)

    def drift(self, x):
        if self.variant == "half_laplacian":
            return np.zeros_like(np.asarray(x, dtype=float))
        return self.grad_g(x)

    def probe_ellipticity(self, points) -> bool:
        """Check the declared bounds c <= g <= 1/c on sample points."""
        g = np.asarray(self.coefficient(np.asarray(points, dtype=float)))
        c = self.ellipticity
        return bool(np.all(g >= c - 1e-12) and np.all(g <= 1.0 / c + 1e-12))


HALF_LAPLACIAN = GeneratorSpec("half_laplacian")


def sample_diffusion(spec: GeneratorSpec, x0, grid: TimeGrid, seed) -> Path:
    """Euler-Maruyama path of the generator's diffusion, started at x0.

    The step equals the grid step; no adaptive control.  For the
    half-Laplacian the scheme is exact and the law is Brownian motion
    shifted by x0.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    dim = x0.size
    rng = rng_or_derive(seed, "sample_diffusion")
    n = len(grid)
    values = np.empty((n, dim))
    values[0] = x0
    if n > 1:
        dt = np.diff(grid.times)
        noise = rng.standard_normal((n - 1, dim))
        if spec.variant == "half_laplacian":
            # exact: unit volatility, zero drift
            np.cumsum(noise * np.sqrt(dt)[:, None], axis=0, out=values[1:])
            values[1:] += x0
        else:
            for i in range(n - 1):
                x = values[i]
                g = np.asarray(spec.coefficient(x), dtype=float)
                b = np.asarray(spec.drift(x), dtype=float)
                if not (np.all(np.isfinite(g)) and np.all(np.isfinite(b))):
                    raise NumericalDomainError(f"non-finite coefficient at x = {x}")
                values[i + 1] = x + b * dt[i] + np.sqrt(2.0 * g * dt[i]) * noise[i]
    return Path(grid, values, dim)
