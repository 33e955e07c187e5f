"""Finite-difference residuals and elliptic solvers on intervals and balls.

The fourth-order elliptic problem for the iterated exit time factorizes into
nested Poisson solves: with m1 the mean outer exit time and m2 its second
moment, (1/2) lap m1 = -1 and (1/2) lap m2 = -2 m1, both with zero boundary
data; equivalently lap^2 m2 = 8 with m2 and lap m2 vanishing on the
boundary.  Intervals and balls admit closed polynomial solutions, which is
all the verification fixtures need.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from numpy.polynomial import Polynomial

from .errors import InvalidInputError
from .paths import GeneratorSpec
from .testfunctions import TestFunction


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise InvalidInputError("interval needs a < b")

    dim = 1

    def contains(self, x, closed=True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.a) & (x <= self.b) if closed else (x > self.a) & (x < self.b)

    def on_boundary(self, x, tol=0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (np.abs(x - self.a) <= tol) | (np.abs(x - self.b) <= tol)


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float
    dim: int

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", c)
        if self.radius <= 0:
            raise InvalidInputError("radius must be positive")
        if self.dim < 1 or c.size != self.dim:
            raise InvalidInputError("center must match the declared dimension")

    def rho(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.sqrt(np.sum((x - self.center) ** 2, axis=-1))

    def contains(self, x, closed=True) -> np.ndarray:
        r = self.rho(x)
        return r <= self.radius if closed else r < self.radius

    def on_boundary(self, x, tol=0.0) -> np.ndarray:
        return np.abs(self.rho(x) - self.radius) <= tol


Domain = Union[Interval, Ball]


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform space-time grid; the source term is singular at t = 0, so
    the first time node must be positive."""

    x_nodes: np.ndarray
    t_nodes: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_nodes, dtype=float)
        t = np.asarray(self.t_nodes, dtype=float)
        object.__setattr__(self, "x_nodes", x)
        object.__setattr__(self, "t_nodes", t)
        for name, nodes in (("x", x), ("t", t)):
            if nodes.ndim != 1 or nodes.size < 2:
                raise InvalidInputError(f"{name}_nodes must be a 1-d grid with >= 2 nodes")
            d = np.diff(nodes)
            if np.any(d <= 0):
                raise InvalidInputError(f"{name}_nodes must be strictly increasing")
            if np.max(np.abs(d - d[0])) > 1e-12:
                raise InvalidInputError(f"{name}_nodes must be uniform to 1e-12")
        if t[0] <= 0:
            raise InvalidInputError("first time node must be positive")

    @property
    def h(self) -> float:
        return float(self.x_nodes[1] - self.x_nodes[0])

    @property
    def dt(self) -> float:
        return float(self.t_nodes[1] - self.t_nodes[0])


def bilaplacian_fd(u: np.ndarray, h: float) -> np.ndarray:
    """Second-order discrete bi-Laplacian; NaN where the stencil lacks support.

    1-d arrays use the quintuple stencil (1, -4, 6, -4, 1) / h^4, which is
    exact on quartics; 2-d arrays use the equivalent 13-point stencil,
    realized as the discrete Laplacian applied twice.
    """
    u = np.asarray(u, dtype=float)
    if h <= 0:
        raise InvalidInputError("step must be positive")
    if u.ndim == 1:
        if u.size < 5:
            raise InvalidInputError("need at least 5 nodes for the 1-d stencil")
        out = np.full_like(u, np.nan)
        out[2:-2] = (u[:-4] - 4 * u[1:-3] + 6 * u[2:-2] - 4 * u[3:-1] + u[4:]) / h**4
        return out
    if u.ndim == 2:
        if u.shape[0] < 5 or u.shape[1] < 5:
            raise InvalidInputError("need at least 5 nodes per axis for the 2-d stencil")
        lap = np.full_like(u, np.nan)
        lap[1:-1, 1:-1] = (
            u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:] - 4 * u[1:-1, 1:-1]
        ) / h**2
        out = np.full_like(u, np.nan)
        out[2:-2, 2:-2] = (
            lap[1:-3, 2:-2] + lap[3:-1, 2:-2] + lap[2:-2, 1:-3] + lap[2:-2, 3:-1]
            - 4 * lap[2:-2, 2:-2]
        ) / h**2
        return out
    raise InvalidInputError("bilaplacian_fd supports 1-d and 2-d arrays")


def _apply_generator_1d(vals: np.ndarray, x: np.ndarray, h: float, spec: GeneratorSpec) -> np.ndarray:
    """Generator applied along the last axis by central differences; NaN edges."""
    out = np.full_like(vals, np.nan)
    d2 = (vals[..., :-2] - 2 * vals[..., 1:-1] + vals[..., 2:]) / h**2
    if spec.variant == "half_laplacian":
        out[..., 1:-1] = 0.5 * d2
        return out
    d1 = (vals[..., 2:] - vals[..., :-2]) / (2 * h)
    g = np.asarray(spec.coefficient(x[1:-1]), dtype=float)
    dg = np.asarray(spec.drift(x[1:-1]), dtype=float)
    out[..., 1:-1] = g * d2 + dg * d1
    return out


def parabolic_residual(u: np.ndarray, grid: SpaceTimeGrid, f: TestFunction,
                       spec: GeneratorSpec, dudt: Optional[np.ndarray] = None) -> np.ndarray:
    """Residual of du/dt = A f / sqrt(2 pi t) + (1/2) A^2 u on the grid.

    ``u`` has shape (n_t, n_x).  Spatial operators are second-order central
    differences (the generator applied twice reproduces the quintuple
    bi-Laplacian stencil for the half-Laplacian).  The time derivative is a
    second-order central difference unless ``dudt`` supplies exact values;
    the t^(-1/2) source makes the time-difference error the dominant term
    near small t, so tight-tolerance checks of exact solutions should pass
    the analytic derivative.
    Returns a full-shape residual array, NaN where stencils lack support.
    """
    u = np.asarray(u, dtype=float)
    nt, nx = grid.t_nodes.size, grid.x_nodes.size
    if u.shape != (nt, nx):
        raise InvalidInputError(f"u must have shape {(nt, nx)}, got {u.shape}")
    if nx < 5:
        raise InvalidInputError("need at least 5 space nodes")
    if f.dim != 1:
        raise InvalidInputError("parabolic_residual handles one-dimensional fields")

    if dudt is None:
        if nt < 3:
            raise InvalidInputError("need at least 3 time nodes for the time stencil")
        ut = np.full_like(u, np.nan)
        ut[1:-1] = (u[2:] - u[:-2]) / (2 * grid.dt)
    else:
        ut = np.asarray(dudt, dtype=float)
        if ut.shape != u.shape:
            raise InvalidInputError("dudt must match u's shape")

    af = np.asarray(_generator_of_f(f, spec, grid.x_nodes), dtype=float)
    source = af[None, :] / np.sqrt(2 * np.pi * grid.t_nodes)[:, None]
    a_u = _apply_generator_1d(u, grid.x_nodes, grid.h, spec)
    a2_u = _apply_generator_1d(a_u, grid.x_nodes, grid.h, spec)
    return ut - source - 0.5 * a2_u


def _generator_of_f(f: TestFunction, spec: GeneratorSpec, x: np.ndarray) -> np.ndarray:
    lap = np.asarray(f.laplacian(x), dtype=float)
    if spec.variant == "half_laplacian":
        return 0.5 * lap
    g = np.asarray(spec.coefficient(x), dtype=float)
    dg = np.asarray(spec.drift(x), dtype=float)
    grad = np.asarray(f.grad(x), dtype=float)
    return g * lap + dg * grad


@dataclass(frozen=True)
class ExitMoments:
    """First and second moments of the outer exit time, with derivatives.

    m1 solves (1/2) lap m1 = -1 and m2 solves (1/2) lap m2 = -2 m1, both
    vanishing on the boundary; consequently lap^2 m2 = 8.  The derivative
    accessors feed the elliptic identity candidates.
    """

    domain: Domain
    m1: Callable
    m2: Callable
    grad_m2: Callable
    lap_m2: Callable
    grad_lap_m2: Callable
    hess_m2: Callable


def solve_exit_moments(domain: Domain) -> ExitMoments:
    if isinstance(domain, Interval):
        return _interval_moments(domain)
    if isinstance(domain, Ball):
        return _ball_moments(domain)
    raise InvalidInputError(f"unsupported domain shape {type(domain).__name__}")


def _interval_moments(domain: Interval) -> ExitMoments:
    a, b = domain.a, domain.b
    # m1'' = -2 with zero boundary values
    m1 = Polynomial([-a * b, a + b, -1.0])
    # m2'' = -4 m1, twice integrated, then the affine part from the BCs
    p = (-4.0 * m1).integ(2)
    slope = (p(b) - p(a)) / (b - a)
    m2 = p - Polynomial([p(a) - slope * a, slope])
    d1, d2, d3 = m2.deriv(1), m2.deriv(2), m2.deriv(3)

    return ExitMoments(
        domain=domain,
        m1=lambda x: m1(np.asarray(x, dtype=float)),
        m2=lambda x: m2(np.asarray(x, dtype=float)),
        grad_m2=lambda x: d1(np.asarray(x, dtype=float)),
        lap_m2=lambda x: d2(np.asarray(x, dtype=float)),
        grad_lap_m2=lambda x: d3(np.asarray(x, dtype=float)),
        hess_m2=lambda x: d2(np.asarray(x, dtype=float)),
    )


def _ball_moments(domain: Ball) -> ExitMoments:
    d, r, c = domain.dim, domain.radius, domain.center
    # radial ansatz m2 = A + B rho^2 + C rho^4 solving lap m2 = -4 m1
    C = 1.0 / (d * (d + 2.0))
    B = -2.0 * r**2 / d**2
    A = r**4 * (d + 4.0) / (d**2 * (d + 2.0))

    def rho2(x):
        x = np.asarray(x, dtype=float)
        return np.sum((x - c) ** 2, axis=-1)

    def m1(x):
        return (r**2 - rho2(x)) / d

    def m2(x):
        q = rho2(x)
        return A + B * q + C * q * q

    def grad_m2(x):
        x = np.asarray(x, dtype=float)
        q = rho2(x)
        return (2.0 * B + 4.0 * C * q)[..., None] * (x - c)

    def lap_m2(x):
        return 2.0 * d * B + 4.0 * (d + 2.0) * C * rho2(x)

    def grad_lap_m2(x):
        x = np.asarray(x, dtype=float)
        return 8.0 * (d + 2.0) * C * (x - c)

    def hess_m2(x):
        x = np.asarray(x, dtype=float)
        q = rho2(x)
        xc = x - c
        eye = np.eye(d)
        return (2.0 * B + 4.0 * C * q)[..., None, None] * eye + \
            8.0 * C * xc[..., :, None] * xc[..., None, :]

    return ExitMoments(domain, m1, m2, grad_m2, lap_m2, grad_lap_m2, hess_m2)


def dirichlet_solution(domain: Domain, f: Callable, n_theta: int = 512) -> Callable:
    """Harmonic extension of boundary data f into the domain.

    Intervals interpolate their endpoint values; 2-d balls integrate the
    Poisson kernel with the trapezoid rule (spectrally accurate for smooth
    boundary data).  ``f`` is a callable on boundary points.
    """
    if isinstance(domain, Interval):
        a, b = domain.a, domain.b
        fa, fb = float(f(a)), float(f(b))

        def u_interval(x):
            x = np.asarray(x, dtype=float)
            if np.any(~domain.contains(x)):
                raise InvalidInputError("query point outside the closed domain")
            return fa + (x - a) / (b - a) * (fb - fa)

        return u_interval

    if isinstance(domain, Ball) and domain.dim == 2:
        r, c = domain.radius, domain.center
        theta = 2 * np.pi * np.arange(n_theta) / n_theta
        bpts = c + r * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        fvals = np.asarray(f(bpts), dtype=float)

        def u_ball(x):
            x = np.asarray(x, dtype=float)
            single = x.ndim == 1
            pts = x[None, :] if single else x
            if np.any(~domain.contains(pts)):
                raise InvalidInputError("query point outside the closed domain")
            rel = pts - c
            rho2 = np.sum(rel**2, axis=-1)
            diff = pts[:, None, :] - bpts[None, :, :]
            denom = np.sum(diff**2, axis=-1)
            on_bd = rho2 >= r**2 * (1 - 1e-12)
            kern = (r**2 - rho2)[:, None] / np.where(denom == 0, 1.0, denom)
            vals = (kern @ fvals) / n_theta
            if np.any(on_bd):
                vals = np.where(on_bd, np.asarray(f(pts), dtype=float), vals)
            return vals[0] if single else vals

        return u_ball

    raise InvalidInputError(
        "dirichlet_solution supports Interval and 2-d Ball domains"
    )
