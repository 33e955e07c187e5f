"""Closed-form transition kernels and the marginal-representation quadrature.

The one-dimensional marginal of a Brownian-time Brownian motion is the
half-line integral

    u(t, x) = 2 * int_0^inf p_t(0, s) T_s f(x) ds,

where p_t(0, s) is the Gaussian density of the inner Brownian motion at s
(the factor 2 folds the reflection) and T_s is the outer heat semigroup.
Adaptive Gauss-Kronrod quadrature evaluates single points to tolerance;
fixed-order tensor rules evaluate whole space-time grids for the PDE
residual studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import AccuracyError, InvalidInputError
from .testfunctions import TestFunction

_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class QuadratureSettings:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_subdivisions: int = 200
    truncation_radius_multiplier: float = 8.0  # in standard deviations

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise InvalidInputError("tolerances must be positive")
        if self.max_subdivisions < 1:
            raise InvalidInputError("max_subdivisions must be positive")
        if self.truncation_radius_multiplier < 6:
            raise InvalidInputError("truncation radius must be at least 6 standard deviations")


DEFAULT_SETTINGS = QuadratureSettings()


def _quad(fn, lo, hi, settings: QuadratureSettings, what: str) -> float:
    val, err = integrate.quad(
        fn, lo, hi,
        epsabs=settings.abs_tol, epsrel=settings.rel_tol,
        limit=settings.max_subdivisions,
    )
    tol = max(settings.abs_tol, settings.rel_tol * abs(val))
    if err > 10.0 * tol:
        raise AccuracyError(
            f"{what}: quadrature error estimate {err:.3g} exceeds tolerance {tol:.3g}",
            achieved=err, requested=tol,
        )
    return val


def heat_kernel(s: float, t: float, x, y, dim: int = 1) -> float:
    """Gaussian transition density from x at time s to y at time t."""
    if t <= s:
        raise InvalidInputError("heat kernel requires t > s")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.size != dim or y.size != dim:
        raise InvalidInputError("points must have the declared dimension")
    dt = t - s
    q = float(np.sum((x - y) ** 2))
    return math.exp(-q / (2.0 * dt)) / (2.0 * math.pi * dt) ** (dim / 2.0)


def reflected_kernel(s: float, t: float, y: float, z: float) -> float:
    """Transition density of reflected Brownian motion, by two Gaussian images."""
    if t <= s:
        raise InvalidInputError("reflected kernel requires t > s")
    if y < 0 or z < 0:
        raise InvalidInputError("reflected kernel arguments must be non-negative")
    dt = t - s
    a = math.exp(-((y - z) ** 2) / (2.0 * dt))
    b = math.exp(-((y + z) ** 2) / (2.0 * dt))
    return (a + b) / math.sqrt(2.0 * math.pi * dt)


def gauss_semigroup(f: TestFunction, s: float, x: float,
                    settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """Heat semigroup of a Brownian outer process: E f(x + sqrt(s) Z).

    s = 0 returns f(x).  The convolution integral is truncated at the
    settings' radius multiplier in standard deviations.
    """
    if f.dim != 1:
        raise InvalidInputError("gauss_semigroup handles one-dimensional test functions")
    if s < 0:
        raise InvalidInputError("time must be non-negative")
    if s == 0.0:
        return float(f.fn(x))
    sd = math.sqrt(s)
    r = settings.truncation_radius_multiplier * sd
    inv = 1.0 / (_SQRT2PI * sd)

    def integrand(y):
        return float(f.fn(y)) * math.exp(-((y - x) ** 2) / (2.0 * s)) * inv

    return _quad(integrand, x - r, x + r, settings, "gauss_semigroup")


def btp_marginal(f: TestFunction, x: float, t: float,
                 settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """Marginal expectation of a composed path at time t by nested quadrature."""
    if t <= 0:
        raise InvalidInputError("time must be positive")
    sd = math.sqrt(t)
    r = settings.truncation_radius_multiplier * sd
    inner = QuadratureSettings(
        abs_tol=settings.abs_tol / 10.0,
        rel_tol=settings.rel_tol / 10.0,
        max_subdivisions=settings.max_subdivisions,
        truncation_radius_multiplier=settings.truncation_radius_multiplier,
    )

    def integrand(s):
        p = math.exp(-(s * s) / (2.0 * t)) / (_SQRT2PI * sd)
        return 2.0 * p * gauss_semigroup(f, s, x, inner)

    return _quad(integrand, 0.0, r, settings, "btp_marginal")


def btp_marginal_dt(f: TestFunction, x: float, t: float,
                    settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """Time derivative of :func:`btp_marginal`, differentiated under the integral."""
    if t <= 0:
        raise InvalidInputError("time must be positive")
    sd = math.sqrt(t)
    r = settings.truncation_radius_multiplier * sd
    inner = QuadratureSettings(
        abs_tol=settings.abs_tol / 10.0,
        rel_tol=settings.rel_tol / 10.0,
        max_subdivisions=settings.max_subdivisions,
        truncation_radius_multiplier=settings.truncation_radius_multiplier,
    )

    def integrand(s):
        p = math.exp(-(s * s) / (2.0 * t)) / (_SQRT2PI * sd)
        dp = p * (s * s - t) / (2.0 * t * t)
        return 2.0 * dp * gauss_semigroup(f, s, x, inner)

    return _quad(integrand, 0.0, r, settings, "btp_marginal_dt")


# -- fixed-order tensor rules for whole grids ------------------------------
#
# The residual studies evaluate u(t, x) on thousands of nodes; per-node
# adaptive quadrature would dominate the runtime.  A Gauss-Legendre rule in
# the (substituted) half-line variable crossed with Gauss-Hermite in the
# convolution variable reproduces the same integral; a doubled-order
# self-check guards the accuracy.

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}
_GH_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _gh(n):
    if n not in _GH_CACHE:
        _GH_CACHE[n] = np.polynomial.hermite.hermgauss(n)
    return _GH_CACHE[n]


def _marginal_grid_once(f, x_nodes, t_nodes, n_gl, n_gh, radius, derivative):
    # substituting s = sqrt(t) r turns the half-line integral into
    #   u = 2 int_0^inf phi(r) T_{sqrt(t) r} f(x) dr,
    # and differentiating under the integral,
    #   du/dt = int_0^inf phi(r) (r / sqrt(t)) T_{sqrt(t) r} (lap f)(x) / 2 dr,
    # since dT_s/ds = T_s (lap f) / 2 for the Brownian semigroup.
    x_nodes = np.asarray(x_nodes, dtype=float)
    t_nodes = np.asarray(t_nodes, dtype=float)
    gl_x, gl_w = _gl(n_gl)
    gh_x, gh_w = _gh(n_gh)
    r_nodes = 0.5 * (gl_x + 1.0) * radius
    r_w = 0.5 * radius * gl_w
    phi = np.exp(-0.5 * r_nodes**2) / _SQRT2PI
    field = f.laplacian if derivative else f.fn
    out = np.empty((t_nodes.size, x_nodes.size))
    for it, t in enumerate(t_nodes):
        s_nodes = np.sqrt(t) * r_nodes
        if derivative:
            w = phi * r_w * r_nodes / (2.0 * math.sqrt(t))
        else:
            w = 2.0 * phi * r_w
        acc = np.zeros(x_nodes.size)
        for j, s in enumerate(s_nodes):
            pts = x_nodes[:, None] + math.sqrt(2.0 * s) * gh_x[None, :]
            acc += w[j] * (field(pts) @ gh_w) / math.sqrt(math.pi)
        out[it] = acc
    return out


def marginal_grid(f: TestFunction, x_nodes, t_nodes,
                  settings: QuadratureSettings = DEFAULT_SETTINGS,
                  n_gl: int = 160, n_gh: int = 64,
                  derivative: bool = False) -> np.ndarray:
    """Marginal u (or du/dt) on a tensor grid, shape (n_t, n_x).

    Runs the tensor rule at order n and 3n/2; if the two disagree beyond the
    settings tolerance an :class:`AccuracyError` reports the gap.
    """
    if f.dim != 1:
        raise InvalidInputError("marginal_grid handles one-dimensional test functions")
    radius = settings.truncation_radius_multiplier
    a = _marginal_grid_once(f, x_nodes, t_nodes, n_gl, n_gh, radius, derivative)
    b = _marginal_grid_once(f, x_nodes, t_nodes, (3 * n_gl) // 2, n_gh + 16, radius, derivative)
    gap = float(np.max(np.abs(a - b)))
    tol = max(settings.abs_tol, settings.rel_tol * float(np.max(np.abs(b))))
    if gap > 10.0 * tol:
        raise AccuracyError(
            f"marginal_grid self-check gap {gap:.3g} exceeds tolerance {tol:.3g}",
            achieved=gap, requested=tol,
        )
    return b
