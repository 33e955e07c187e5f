"""Composition of an inner reflected clock with outer process paths.

The inner path is a one-dimensional Brownian motion; its modulus serves as
the random clock.  Excursions are the maximal grid-index runs on which the
unreflected inner value keeps a constant nonzero sign: exact zeros belong to
no excursion, and a sign change between adjacent nodes splits runs.  The
composed value at a node reads the outer path at the reflected inner value;
nodes outside every excursion take the common outer start point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CoverageError, InvalidInputError
from .paths import Path, TimeGrid, _path_unchecked, evaluate_many
from .seeding import as_seed, rng_or_derive


@dataclass(frozen=True)
class ExcursionDecomposition:
    """Ordered, disjoint index runs of constant nonzero sign.

    ``starts``/``stops`` are half-open index bounds into the source grid;
    ``labels[i]`` names the outer copy used on run i.
    """

    starts: np.ndarray
    stops: np.ndarray
    labels: np.ndarray
    source_grid: TimeGrid

    def __post_init__(self):
        s = np.asarray(self.starts, dtype=np.intp)
        e = np.asarray(self.stops, dtype=np.intp)
        lab = np.asarray(self.labels, dtype=np.intp)
        object.__setattr__(self, "starts", s)
        object.__setattr__(self, "stops", e)
        object.__setattr__(self, "labels", lab)
        if not (s.shape == e.shape == lab.shape):
            raise InvalidInputError("starts, stops, labels must have equal length")
        if np.any(e <= s):
            raise InvalidInputError("intervals must be non-empty")
        if np.any(s[1:] < e[:-1]):
            raise InvalidInputError("intervals must be ordered and disjoint")
        if np.any(lab < 0):
            raise InvalidInputError("copy labels must be non-negative")

    def __len__(self):
        return self.starts.size

    def covered_indices(self) -> np.ndarray:
        """All grid indices belonging to some excursion."""
        if len(self) == 0:
            return np.empty(0, dtype=np.intp)
        return np.concatenate([np.arange(a, b) for a, b in zip(self.starts, self.stops)])


@dataclass(frozen=True)
class ComposedPath:
    path: Path
    inner_max: float
    decomposition: ExcursionDecomposition

    def __post_init__(self):
        if self.inner_max < 0:
            raise InvalidInputError("inner_max must be non-negative")


def reflect(path: Path) -> Path:
    """Pointwise modulus of a one-dimensional path."""
    if path.dim != 1:
        raise InvalidInputError("reflect requires a one-dimensional path")
    return Path(path.grid, np.abs(path.values), 1)


def excursions(inner_unreflected: Path) -> ExcursionDecomposition:
    """Maximal constant-sign nonzero runs of the unreflected inner path.

    Labels are initialized to 0; compositions overwrite them.
    """
    if inner_unreflected.dim != 1:
        raise InvalidInputError("excursions requires a one-dimensional path")
    v = inner_unreflected.values[:, 0]
    sgn = np.sign(v)
    n = sgn.size
    nonzero = sgn != 0
    # run breaks: sign change between neighbours, or entering/leaving zero
    brk = np.empty(n, dtype=bool)
    brk[0] = True
    brk[1:] = sgn[1:] != sgn[:-1]
    run_start = np.flatnonzero(brk)
    run_stop = np.append(run_start[1:], n)
    keep = nonzero[run_start]
    starts = run_start[keep]
    stops = run_stop[keep]
    labels = np.zeros(starts.size, dtype=np.intp)
    return ExcursionDecomposition(starts, stops, labels, inner_unreflected.grid)


def _check_inner(inner: Path) -> np.ndarray:
    if inner.dim != 1:
        raise InvalidInputError("inner path must be one-dimensional")
    return np.abs(inner.values[:, 0])


def _check_cover(outer: Path, needed: float):
    if outer.t_end < needed:
        raise CoverageError(
            f"outer path covers [0, {outer.t_end}] but composition reads up to {needed}"
        )


def compose_btp(inner: Path, outer: Path) -> ComposedPath:
    """Outer path run on the reflected inner clock; a single copy throughout."""
    clock = _check_inner(inner)
    inner_max = float(clock.max())
    _check_cover(outer, inner_max)
    values = evaluate_many(outer, clock)
    dec = excursions(inner)
    return ComposedPath(Path(inner.grid, values, outer.dim), inner_max, dec)


def compose_kebtp(inner: Path, outers: list[Path], seed) -> ComposedPath:
    """Per excursion, read one of k fixed outer copies chosen uniformly.

    Copy choices are the successive draws of a stream derived from the seed,
    indexed by excursion ordinal, so they do not depend on evaluation order.
    Values at nodes outside every excursion equal the common start point.
    """
    if not outers:
        raise InvalidInputError("need at least one outer copy")
    clock = _check_inner(inner)
    inner_max = float(clock.max())
    start = outers[0].values[0]
    for p in outers:
        _check_cover(p, inner_max)
        if p.dim != outers[0].dim:
            raise InvalidInputError("outer copies must share dimension")
        if not np.array_equal(p.values[0], start):
            raise InvalidInputError("outer copies must share their start point")
    k = len(outers)
    dec = excursions(inner)
    rng = rng_or_derive(seed, "kebtp_labels")
    labels = rng.integers(0, k, size=len(dec)).astype(np.intp)
    dec = ExcursionDecomposition(dec.starts, dec.stops, labels, dec.source_grid)

    n = len(inner.grid)
    values = np.tile(start, (n, 1)).astype(float)
    node_label = np.full(n, -1, dtype=np.intp)
    for a, b, lab in zip(dec.starts, dec.stops, dec.labels):
        node_label[a:b] = lab
    for c in range(k):
        idx = np.flatnonzero(node_label == c)
        if idx.size:
            values[idx] = evaluate_many(outers[c], clock[idx])
    return ComposedPath(Path(inner.grid, values, outers[0].dim), inner_max, dec)


def compose_ebtp(inner: Path, outer_factory: Callable[[int, float], Path], seed) -> ComposedPath:
    """Fresh independent outer copy on every excursion.

    ``outer_factory(ordinal, y_max)`` must return a path from the common
    start point covering at least [0, y_max]; by composition measurability
    only the requested excursion-local range is ever read.  Labels are the
    excursion ordinals, hence strictly increasing.
    """
    clock = _check_inner(inner)
    inner_max = float(clock.max())
    dec = excursions(inner)
    labels = np.arange(len(dec), dtype=np.intp)
    dec = ExcursionDecomposition(dec.starts, dec.stops, labels, dec.source_grid)

    n = len(inner.grid)
    start = None
    values = None
    for j, (a, b) in enumerate(zip(dec.starts, dec.stops)):
        local = clock[a:b]
        local_max = float(local.max())
        outer = outer_factory(j, local_max)
        if start is None:
            start = outer.values[0]
            values = np.tile(start, (n, 1)).astype(float)
        elif not np.array_equal(outer.values[0], start):
            raise InvalidInputError("factory copies must share their start point")
        _check_cover(outer, local_max)
        values[a:b] = evaluate_many(outer, local)
    if values is None:  # no excursions at all: constant at the start point
        probe = outer_factory(0, 0.0)
        start = probe.values[0]
        values = np.tile(start, (n, 1)).astype(float)
        dim = probe.dim
    else:
        dim = values.shape[1]
    return ComposedPath(Path(inner.grid, values, dim), inner_max, dec)


def bm_outer_factory(x0, dy: float, seed, dim: int = 1) -> Callable[[int, float], Path]:
    """Factory of fresh Brownian outer copies from x0 on a step-dy grid.

    Given a Seed, copy ``j`` is a fixed function of (seed, j), independent
    of the order copies are requested in; given a Generator the copies are
    drawn sequentially from it (ordinal order equals request order inside
    the composition, so the result is still deterministic).
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    shared = seed if isinstance(seed, np.random.Generator) else None
    base = None if shared is not None else as_seed(seed)
    grid_cache: dict[int, TimeGrid] = {}

    def factory(ordinal: int, y_max: float) -> Path:
        m = max(int(np.ceil(y_max / dy)), 1)
        grid = grid_cache.get(m)
        if grid is None:
            grid = grid_cache.setdefault(m, TimeGrid(np.arange(m + 1) * dy))
        rng = shared if shared is not None else base.rng("ebtp_outer", ordinal)
        vals = np.empty((m + 1, dim))
        vals[0] = x0
        np.cumsum(rng.standard_normal((m, dim)) * np.sqrt(dy), axis=0, out=vals[1:])
        vals[1:] += x0
        return _path_unchecked(grid, vals, dim)

    return factory
