"""The half-derivative generator: quadrature formula and a Monte Carlo
difference-quotient estimator.

A composed process is not Markovian, but the conditional increment scaled by
sqrt(t - s) has a limit: at an observed value xi at time s,

    (1/sqrt(2 pi)) [ A f(xi) + N/D ],
    N = int_0^inf p(0,s;0,y) h(0,y;x0,xi) A*_y f(xi) dy,
    D = int_0^inf p(0,s;0,y) h(0,y;x0,xi) dy,

with p the reflected-Brownian density of the inner clock, h the outer
transition density (implemented for the Brownian outer case, where it is
closed-form), and A*_y the time-reversed generator (1/2) f'' +
((x0 - xi)/y) f'.  The Monte Carlo route simulates exact value pairs at
times s and s + delta, estimates the conditional expectation at xi by
Nadaraya-Watson kernel regression, and extrapolates the sqrt(delta)-scaled
quotient to delta -> 0, affine in sqrt(delta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, InvalidInputError
from .kernels import DEFAULT_SETTINGS, QuadratureSettings, _quad, heat_kernel, reflected_kernel
from .reporting import Estimate
from .seeding import as_seed
from .testfunctions import TestFunction

_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class HalfGenQuery:
    s: float          # conditioning time
    xi: float         # observed composed value at time s
    x0: float         # outer start point
    f: TestFunction

    def __post_init__(self):
        if self.s <= 0:
            raise InvalidInputError("conditioning time must be positive")
        if self.f.dim != 1:
            raise InvalidInputError("half-generator queries are one-dimensional")


def reversed_generator(f: TestFunction, y: float, xi: float, x0: float) -> float:
    """Time-reversed Brownian generator at backward time y:
    (1/2) f''(xi) + ((x0 - xi)/y) f'(xi)."""
    if y <= 0:
        raise InvalidInputError("backward time must be positive")
    return float(0.5 * np.asarray(f.laplacian(xi))
                 + ((x0 - xi) / y) * np.asarray(f.grad(xi)))


def halfgen_quadrature(q: HalfGenQuery,
                       settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """Evaluate the half-derivative generator by adaptive quadrature.

    The substitution y = u**2 removes the 1/sqrt(y) endpoint behaviour of
    the weight; when xi = x0 the drift coefficient is exactly zero, so the
    1/y factor never meets a nonzero numerator at the origin.
    """
    s, xi, x0, f = q.s, q.xi, q.x0, q.f
    a_f = 0.5 * float(np.asarray(f.laplacian(xi)))
    fp = float(np.asarray(f.grad(xi)))
    dx = x0 - xi

    def weight(y):
        return reflected_kernel(0.0, s, 0.0, y) * heat_kernel(0.0, y, x0, xi)

    def den(u):
        y = u * u
        return weight(y) * 2.0 * u

    def num(u):
        y = u * u
        drift = 0.0 if dx == 0.0 else (dx / y) * fp
        return weight(y) * (a_f + drift) * 2.0 * u

    hi = math.sqrt(settings.truncation_radius_multiplier * math.sqrt(s)) * 2.0
    d_val = _quad(den, 0.0, hi, settings, "halfgen denominator")
    n_val = _quad(num, 0.0, hi, settings, "halfgen numerator")
    return (a_f + n_val / d_val) / _SQRT2PI


def sample_composed_pairs(x0: float, s: float, delta: float, n: int, rng):
    """Exact joint draws (value at s, value at s + delta) of a composed
    Brownian-on-Brownian path.

    The inner clock values y1 = |B(s)|, y2 = |B(s + delta)| and the outer
    Brownian motion read at the two clock values have jointly Gaussian
    structure, so no grid is involved: the outer increment between the
    ordered clock times is N(0, |y2 - y1|).
    """
    b1 = math.sqrt(s) * rng.standard_normal(n)
    b2 = b1 + math.sqrt(delta) * rng.standard_normal(n)
    y1, y2 = np.abs(b1), np.abs(b2)
    lo = np.minimum(y1, y2)
    gap = np.abs(y2 - y1)
    x_lo = x0 + np.sqrt(lo) * rng.standard_normal(n)
    x_hi = x_lo + np.sqrt(gap) * rng.standard_normal(n)
    v1 = np.where(y1 <= y2, x_lo, x_hi)
    v2 = np.where(y1 <= y2, x_hi, x_lo)
    return v1, v2


def _fit_affine_sqrt(sq_deltas: np.ndarray, quotients: np.ndarray) -> float:
    """Intercept of the least-squares affine fit q = a + b sqrt(delta)."""
    x = sq_deltas
    y = quotients
    xb, yb = x.mean(), y.mean()
    b = np.sum((x - xb) * (y - yb)) / np.sum((x - xb) ** 2)
    return float(yb - b * xb)


def halfgen_mc(q: HalfGenQuery, deltas, n: int, bandwidth: float, seed,
               n_bootstrap: int = 200) -> Estimate:
    """Monte Carlo half-derivative estimate with bootstrap standard error.

    For each delta, n fresh pairs are drawn; the conditional increment of f
    at the observed value xi is estimated by Gaussian-kernel regression and
    divided by sqrt(delta); an affine fit in sqrt(delta) extrapolates to
    zero.  The bootstrap reweights replicates with Poisson(1) counts.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 1 or deltas.size < 3:
        raise InvalidInputError("need at least 3 deltas for the extrapolation")
    if np.any(np.diff(deltas) >= 0):
        raise InvalidInputError("deltas must be strictly decreasing")
    if np.any(deltas >= q.s / 2):
        raise InvalidInputError("deltas must be small against the conditioning time")
    if bandwidth <= 0:
        raise InvalidInputError("bandwidth must be positive")
    seed = as_seed(seed)

    weights = []
    weighted = []
    for i, d in enumerate(deltas):
        rng = seed.rng("halfgen_mc", i)
        v1, v2 = sample_composed_pairs(q.x0, q.s, d, n, rng)
        w = np.exp(-0.5 * ((v1 - q.xi) / bandwidth) ** 2)
        eff = float(w.sum() ** 2 / np.sum(w**2))
        if eff < 100:
            raise InsufficientDataError(
                f"only {eff:.1f} effective samples in the kernel window at delta={d}",
                effective_n=eff,
            )
        g = np.asarray(q.f.fn(v2), dtype=float) - np.asarray(q.f.fn(v1), dtype=float)
        weights.append(w)
        weighted.append(w * g)

    sq = np.sqrt(deltas)

    def pipeline(count_sets):
        quot = np.empty(deltas.size)
        for i in range(deltas.size):
            c = count_sets[i]
            quot[i] = (c @ weighted[i]) / (c @ weights[i]) / sq[i]
        return _fit_affine_sqrt(sq, quot)

    ones = [np.ones(n) for _ in deltas]
    value = pipeline(ones)

    boot_rng = seed.rng("halfgen_bootstrap")
    boot = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        counts = [boot_rng.poisson(1.0, n).astype(float) for _ in deltas]
        boot[b] = pipeline(counts)
    stderr = float(np.std(boot, ddof=1))
    return Estimate(float(value), stderr, n * deltas.size)
