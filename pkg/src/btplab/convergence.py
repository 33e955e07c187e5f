"""Statistical tests for the excursion-variant convergence claims.

Three instruments: a two-sample Kolmogorov-Smirnov test of the one-time
marginal (which is exactly shared between the single-copy composition and
the k-copy excursion variant), a bivariate distribution distance on a fixed
quantile grid for the two-time joint law (where the variants genuinely
differ, and the k-copy law approaches the fresh-copy law as k grows), and a
log-log moment regression for the Holder scaling of composed increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .compose import bm_outer_factory, compose_btp, compose_ebtp, compose_kebtp
from .errors import InvalidInputError
from .halfgen import sample_composed_pairs
from .paths import Path, TimeGrid, _path_unchecked
from .reporting import Estimate, estimate_from_samples
from .seeding import as_seed

DEFAULT_N_STEPS = 256
DEFAULT_DY = 1.0 / 512.0


def _grid_for(times, n_steps):
    t_max = float(max(times))
    grid = TimeGrid.regular(t_max, n_steps)
    idx = []
    for t in times:
        j = int(round(t / t_max * n_steps))
        if not math.isclose(grid.times[j], t, rel_tol=0, abs_tol=1e-12):
            raise InvalidInputError(f"query time {t} is not a node of the {n_steps}-step grid")
        idx.append(j)
    return grid, np.asarray(idx)


def _bm_path(rng, grid, sq_dt, n_nodes) -> Path:
    vals = np.empty((n_nodes, 1))
    vals[0, 0] = 0.0
    np.cumsum(rng.standard_normal(n_nodes - 1) * sq_dt, out=vals[1:, 0])
    return _path_unchecked(grid, vals, 1)


class _OuterGridCache:
    """Outer Brownian copies on step-dy grids, one grid object per length."""

    def __init__(self, x0, dy):
        self.x0 = float(x0)
        self.dy = dy
        self.grids: dict[int, TimeGrid] = {}

    def grid(self, y_max) -> TimeGrid:
        m = max(int(np.ceil(y_max / self.dy)), 1)
        g = self.grids.get(m)
        if g is None:
            g = self.grids.setdefault(m, TimeGrid(np.arange(m + 1) * self.dy))
        return g

    def draw(self, rng, y_max) -> Path:
        g = self.grid(y_max)
        n = len(g)
        vals = np.empty((n, 1))
        vals[0, 0] = self.x0
        np.cumsum(rng.standard_normal(n - 1) * math.sqrt(self.dy), out=vals[1:, 0])
        vals[1:, 0] += self.x0
        return _path_unchecked(g, vals, 1)


def btp_values_at(x0, times, n, seed, n_steps=DEFAULT_N_STEPS, dy=DEFAULT_DY) -> np.ndarray:
    """n single-copy composed replicates read at the given times, shape (n, len(times))."""
    grid, idx = _grid_for(times, n_steps)
    sq_dt = math.sqrt(grid.times[-1] / n_steps)
    cache = _OuterGridCache(x0, dy)
    base = as_seed(seed)
    out = np.empty((n, idx.size))
    for i in range(n):
        rng = base.rng("btp", i)
        inner = _bm_path(rng, grid, sq_dt, n_steps + 1)
        outer = cache.draw(rng, float(np.abs(inner.values).max()))
        comp = compose_btp(inner, outer)
        out[i] = comp.path.values[idx, 0]
    return out


def kebtp_values_at(k, x0, times, n, seed, n_steps=DEFAULT_N_STEPS, dy=DEFAULT_DY) -> np.ndarray:
    """n k-copy excursion-composed replicates read at the given times."""
    if k < 1:
        raise InvalidInputError("k must be at least 1")
    grid, idx = _grid_for(times, n_steps)
    sq_dt = math.sqrt(grid.times[-1] / n_steps)
    cache = _OuterGridCache(x0, dy)
    base = as_seed(seed)
    out = np.empty((n, idx.size))
    for i in range(n):
        rng = base.rng("kebtp", i)
        inner = _bm_path(rng, grid, sq_dt, n_steps + 1)
        y_max = float(np.abs(inner.values).max())
        outers = [cache.draw(rng, y_max) for _ in range(k)]
        comp = compose_kebtp(inner, outers, rng)
        out[i] = comp.path.values[idx, 0]
    return out


def ebtp_values_at(x0, times, n, seed, n_steps=DEFAULT_N_STEPS, dy=DEFAULT_DY) -> np.ndarray:
    """n fresh-copy excursion-composed replicates read at the given times."""
    grid, idx = _grid_for(times, n_steps)
    sq_dt = math.sqrt(grid.times[-1] / n_steps)
    base = as_seed(seed)
    out = np.empty((n, idx.size))
    for i in range(n):
        rng = base.rng("ebtp", i)
        inner = _bm_path(rng, grid, sq_dt, n_steps + 1)
        factory = bm_outer_factory(x0, dy, rng)
        comp = compose_ebtp(inner, factory, rng)
        out[i] = comp.path.values[idx, 0]
    return out


def marginal_match_test(k, t, n, seed, n_steps=DEFAULT_N_STEPS, dy=DEFAULT_DY) -> float:
    """Two-sample KS p-value: k-copy terminal values vs single-copy terminal values."""
    seed = as_seed(seed)
    a = btp_values_at(0.0, [t], n, seed.child("baseline"), n_steps, dy)[:, 0]
    b = kebtp_values_at(k, 0.0, [t], n, seed.child("variant"), n_steps, dy)[:, 0]
    return float(stats.ks_2samp(a, b).pvalue)


def _grid_cdf_codes(sample: np.ndarray, q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    i1 = np.searchsorted(q1, sample[:, 0], side="left")
    i2 = np.searchsorted(q2, sample[:, 1], side="left")
    return i1 * (q2.size + 1) + i2


def _grid_cdf(codes: np.ndarray, nq: int, n: int) -> np.ndarray:
    cnt = np.bincount(codes, minlength=(nq + 1) ** 2).reshape(nq + 1, nq + 1)
    cum = cnt.cumsum(axis=0).cumsum(axis=1)
    return cum[:nq, :nq] / n


def joint_law_distance(k, times, n, seed, n_steps=DEFAULT_N_STEPS, dy=DEFAULT_DY,
                       n_quantiles=20, n_bootstrap=100) -> Estimate:
    """Bivariate distribution distance between the k-copy and fresh-copy laws.

    Max absolute difference of the empirical joint CDFs on a fixed
    n_quantiles x n_quantiles grid of pooled marginal quantiles, with a
    resampling bootstrap standard error.
    """
    s, t = times
    if not s < t:
        raise InvalidInputError("need times s < t")
    seed = as_seed(seed)
    a = kebtp_values_at(k, 0.0, [s, t], n, seed.child("kebtp"), n_steps, dy)
    b = ebtp_values_at(0.0, [s, t], n, seed.child("ebtp"), n_steps, dy)
    return _grid_distance(a, b, n_quantiles, n_bootstrap, seed.rng("bootstrap"))


def ebtp_self_distance(times, n, seed, n_steps=DEFAULT_N_STEPS, dy=DEFAULT_DY,
                       n_quantiles=20, n_bootstrap=100) -> Estimate:
    """Distance between two independent fresh-copy samples: the noise floor."""
    s, t = times
    if not s < t:
        raise InvalidInputError("need times s < t")
    seed = as_seed(seed)
    a = ebtp_values_at(0.0, [s, t], n, seed.child("ebtp_a"), n_steps, dy)
    b = ebtp_values_at(0.0, [s, t], n, seed.child("ebtp_b"), n_steps, dy)
    return _grid_distance(a, b, n_quantiles, n_bootstrap, seed.rng("bootstrap"))


def joint_law_profile(ks, times, n, seed, n_steps=DEFAULT_N_STEPS, dy=DEFAULT_DY,
                      n_quantiles=20, n_bootstrap=100) -> dict:
    """Distances to the fresh-copy law for each k, sharing one fresh-copy
    sample, plus the self-distance noise floor.

    Returns {"distances": {k: Estimate}, "floor": Estimate}.  Sharing the
    reference sample across k makes successive distances positively
    correlated, which sharpens the monotonicity comparison.
    """
    s, t = times
    if not s < t:
        raise InvalidInputError("need times s < t")
    seed = as_seed(seed)
    ref = ebtp_values_at(0.0, [s, t], n, seed.child("ebtp_ref"), n_steps, dy)
    ref2 = ebtp_values_at(0.0, [s, t], n, seed.child("ebtp_floor"), n_steps, dy)
    rng = seed.rng("bootstrap")
    out = {}
    for k in ks:
        a = kebtp_values_at(k, 0.0, [s, t], n, seed.child("kebtp", int(k)), n_steps, dy)
        out[int(k)] = _grid_distance(a, ref, n_quantiles, n_bootstrap, rng)
    floor = _grid_distance(ref2, ref, n_quantiles, n_bootstrap, rng)
    return {"distances": out, "floor": floor}


def _grid_distance(a, b, nq, n_bootstrap, rng) -> Estimate:
    probs = (np.arange(nq) + 0.5) / nq
    pooled = np.concatenate([a, b], axis=0)
    q1 = np.quantile(pooled[:, 0], probs)
    q2 = np.quantile(pooled[:, 1], probs)
    ca = _grid_cdf_codes(a, q1, q2)
    cb = _grid_cdf_codes(b, q1, q2)
    na, nb = a.shape[0], b.shape[0]
    d = float(np.max(np.abs(_grid_cdf(ca, nq, na) - _grid_cdf(cb, nq, nb))))
    boot = np.empty(n_bootstrap)
    for i in range(n_bootstrap):
        ra = ca[rng.integers(0, na, na)]
        rb = cb[rng.integers(0, nb, nb)]
        boot[i] = np.max(np.abs(_grid_cdf(ra, nq, na) - _grid_cdf(rb, nq, nb)))
    return Estimate(d, float(np.std(boot, ddof=1)), na + nb)


@dataclass(frozen=True)
class ScalingReport:
    """Log-log moment regression of composed increments."""

    p: float
    lags: np.ndarray
    log_moments: np.ndarray
    slope: float
    slope_stderr: float
    moment_estimates: tuple

    def __post_init__(self):
        if self.slope_stderr <= 0:
            raise InvalidInputError("slope stderr must be positive")


def holder_scaling(p, lags, n, seed) -> ScalingReport:
    """Moment scaling E |value(1 + lag) - value(1)|^p across lags.

    Pairs are drawn exactly (no grid; the composed increment given the
    clock values is Gaussian), the p-th absolute moments are estimated per
    lag, and the slope of log-moment vs log-lag comes from a weighted
    least-squares fit with delta-method weights.
    """
    lags = np.asarray(lags, dtype=float)
    if lags.ndim != 1 or lags.size < 3:
        raise InvalidInputError("regression needs at least 3 lags")
    if np.any(np.diff(lags) >= 0):
        raise InvalidInputError("lags must be strictly decreasing")
    if np.any(lags <= 0) or np.any(lags > 0.5):
        raise InvalidInputError("lags must lie in (0, 0.5]")
    if p <= 0:
        raise InvalidInputError("moment order must be positive")
    base = as_seed(seed)
    ests = []
    for i, lag in enumerate(lags):
        rng = base.rng("holder", i)
        v1, v2 = sample_composed_pairs(0.0, 1.0, float(lag), n, rng)
        ests.append(estimate_from_samples(np.abs(v2 - v1) ** p))
    log_m = np.array([math.log(e.value) for e in ests])
    var_log = np.array([(e.stderr / e.value) ** 2 for e in ests])
    x = np.log(lags)
    w = 1.0 / var_log
    xb = np.sum(w * x) / np.sum(w)
    yb = np.sum(w * log_m) / np.sum(w)
    sxx = np.sum(w * (x - xb) ** 2)
    slope = float(np.sum(w * (x - xb) * (log_m - yb)) / sxx)
    slope_se = float(math.sqrt(1.0 / sxx))
    return ScalingReport(float(p), lags, log_m, slope, slope_se, tuple(ests))
