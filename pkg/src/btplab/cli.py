"""Command-line front end: experiment registry, config, CSV reports.

Config files are plain ``key = value`` lines with ``#`` comments; explicit
command-line flags override file values.  Every run writes a CSV whose
comment header records the experiment, the full parameter set, the seed,
the bit-generator identifier, and module versions; data rows are
byte-identical across re-runs of the same configuration.  The process exits
0 only if every check in the produced reports passes.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__
from .convergence import holder_scaling, joint_law_distance, marginal_match_test
from .convergence import btp_values_at
from .errors import InvalidInputError
from .exitlab import ito_truncation_check, verify_thm2, verify_thm3, verify_thm4
from .halfgen import HalfGenQuery, halfgen_mc, halfgen_quadrature
from .kernels import btp_marginal, marginal_grid
from .paths import HALF_LAPLACIAN
from .pde import Ball, Interval, SpaceTimeGrid, parabolic_residual
from .reporting import CheckRow, Estimate, VerificationReport, estimate_from_samples, write_csv
from .seeding import Seed
from .testfunctions import get as get_f, names as f_names

EXPERIMENTS = ("marginal", "pde-residual", "exit", "thm4", "halfgen", "converge")


class UsageError(Exception):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


@dataclass
class RunConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    seed: Seed = Seed(0)
    output_path: str = ""

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise UsageError(
                f"unknown experiment {self.experiment!r}; known: {', '.join(EXPERIMENTS)}",
                key="experiment",
            )


def parse_domain(text):
    try:
        kind, rest = text.split(":", 1)
        parts = [p for p in rest.split(",") if p]
        if kind == "interval":
            a, b = float(parts[0]), float(parts[1])
            return Interval(a, b)
        if kind == "ball":
            r = float(parts[0])
            d = int(parts[1]) if len(parts) > 1 else 2
            return Ball(np.zeros(d), r, d)
    except (ValueError, IndexError, InvalidInputError) as exc:
        raise UsageError(f"cannot parse domain {text!r}: {exc}", key="domain") from exc
    raise UsageError(f"unknown domain kind in {text!r}; use interval:a,b or ball:r,d", key="domain")


def parse_reals(text):
    try:
        return [float(p) for p in str(text).split(",") if p != ""]
    except ValueError as exc:
        raise UsageError(f"cannot parse real list {text!r}", key="value") from exc


def read_config_file(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'", key="config")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


_DEFAULTS = {
    "marginal": {"t": "1.0", "x": "0.0", "f": "square", "n": "20000", "step": "0.00390625"},
    "pde-residual": {"f": "gauss"},
    "exit": {"domain": "interval:-1,1", "x": "0.0", "n": "100000", "step": "0.001"},
    "thm4": {"domain": "interval:-1,1", "f": "cube", "step": "0.02"},
    "halfgen": {"f": "square", "x": "0.0,0.0", "t": "1.0", "n": "150000", "step": "0.1"},
    "converge": {"k": "2", "t": "1.0", "n": "20000", "p": "2.0",
                 "lags": "0.2,0.1,0.05,0.025"},
}

_KNOWN_KEYS = {"seed", "n", "t", "x", "domain", "f", "k", "p", "lags", "step", "out"}


def build_config(experiment, cli_values: dict, config_path=None) -> RunConfig:
    merged = dict(_DEFAULTS.get(experiment, {}))
    if config_path:
        file_values = read_config_file(config_path)
        for key in file_values:
            if key not in _KNOWN_KEYS:
                raise UsageError(f"unknown config key {key!r}", key=key)
        merged.update(file_values)
    for key, value in cli_values.items():
        if value is not None:
            merged[key] = value

    params = {}
    try:
        seed = Seed(int(merged.get("seed", 42)))
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid seed {merged.get('seed')!r}", key="seed") from exc
    for key in ("n", "k"):
        if key in merged:
            try:
                params[key] = int(float(merged[key]))
            except ValueError as exc:
                raise UsageError(f"invalid integer for {key!r}: {merged[key]!r}", key=key) from exc
            if params[key] < 1:
                raise UsageError(f"{key} must be positive", key=key)
    for key in ("t", "p", "step"):
        if key in merged:
            try:
                params[key] = float(merged[key])
            except ValueError as exc:
                raise UsageError(f"invalid real for {key!r}: {merged[key]!r}", key=key) from exc
            if params[key] <= 0:
                raise UsageError(f"{key} must be positive", key=key)
    if "x" in merged:
        params["x"] = parse_reals(merged["x"])
    if "lags" in merged:
        params["lags"] = parse_reals(merged["lags"])
    if "domain" in merged:
        params["domain"] = parse_domain(merged["domain"]) if isinstance(merged["domain"], str) \
            else merged["domain"]
        params["domain_text"] = merged["domain"]
    if "f" in merged:
        if merged["f"] not in f_names():
            raise UsageError(f"unknown test function {merged['f']!r}; known: {f_names()}", key="f")
        params["f"] = merged["f"]
    out = merged.get("out") or f"btp-{experiment}.csv"
    return RunConfig(experiment, params, seed, out)


# -- experiment implementations --------------------------------------------

def _run_marginal(cfg: RunConfig):
    t, x = cfg.params["t"], cfg.params["x"][0]
    f = get_f(cfg.params["f"])
    n = cfg.params["n"]
    quad = btp_marginal(f, x, t)
    rep = VerificationReport("marginal representation",
                             metadata={"f": f.name, "t": t, "x": x, "n": n})
    if f.name == "square":
        closed = x * x + np.sqrt(2.0 * t / np.pi)
        rep.add_deterministic("quadrature vs closed form", closed, quad, 1e-8)
    vals = btp_values_at(x, [t], n, cfg.seed.child("marginal_mc"))[:, 0]
    rep.add_statistical("composed-path Monte Carlo vs quadrature", quad,
                        estimate_from_samples(np.asarray(f.fn(vals))))
    return [rep]


def _run_pde_residual(cfg: RunConfig):
    f_sq = get_f("square")
    rep = VerificationReport("fourth-order parabolic residual", metadata={})
    # exact solution x^2 + sqrt(2 t / pi): analytic time derivative, FD in space
    grid = SpaceTimeGrid(np.arange(-2.0, 2.0 + 1e-12, 1e-2),
                         np.arange(0.1, 1.0 + 1e-12, 1e-2))
    tt = grid.t_nodes[:, None]
    xx = grid.x_nodes[None, :]
    u = xx**2 + np.sqrt(2.0 * tt / np.pi)
    dudt = 1.0 / np.sqrt(2.0 * np.pi * tt) * np.ones_like(xx)
    res = parabolic_residual(u, grid, f_sq, HALF_LAPLACIAN, dudt=dudt)
    rep.add_deterministic("exact solution max residual", 0.0,
                          float(np.nanmax(np.abs(res))), 1e-6)

    f = get_f(cfg.params["f"])
    factor = residual_halving_factor(f)
    rep.add_deterministic(f"residual halving factor for f={f.name}", 4.0, factor, 1.0)
    rep.metadata["halving_factor"] = factor
    return [rep]


def residual_halving_factor(f, t0=0.25, t1=0.75, x0=-1.0, x1=1.0, h=0.05):
    """Max residual ratio between an (h, dt) grid and its halved refinement."""
    out = []
    for step in (h, h / 2):
        grid = SpaceTimeGrid(np.arange(x0, x1 + 1e-12, step),
                             np.arange(t0, t1 + 1e-12, step))
        u = marginal_grid(f, grid.x_nodes, grid.t_nodes)
        res = parabolic_residual(u, grid, f, HALF_LAPLACIAN)
        out.append(float(np.nanmax(np.abs(res))))
    return out[0] / out[1]


def _run_exit(cfg: RunConfig):
    domain = cfg.params["domain"]
    xs = cfg.params["x"]
    if isinstance(domain, Ball):
        xs = [np.full(domain.dim, x) for x in xs]
    reports = [verify_thm3(domain, xs, cfg.params["n"], cfg.seed.child("thm3"),
                           step=cfg.params["step"])]
    if "f" in cfg.params:
        f = get_f(cfg.params["f"])
        reports.append(verify_thm2(domain, f.fn, xs, cfg.params["n"],
                                   cfg.seed.child("thm2"), step=cfg.params["step"]))
    return reports


def _run_thm4(cfg: RunConfig):
    domain = cfg.params["domain"]
    f = get_f(cfg.params["f"])
    reports = [verify_thm4(domain, f, h=cfg.params["step"])]
    for name in ("linear", "square", "cube"):
        reports.append(ito_truncation_check(get_f(name), t=0.7, x=0.2))
    return reports


def _run_halfgen(cfg: RunConfig):
    xs = cfg.params["x"]
    xi = xs[0]
    x0 = xs[1] if len(xs) > 1 else 0.0
    f = get_f(cfg.params["f"])
    q = HalfGenQuery(s=cfg.params["t"], xi=xi, x0=x0, f=f)
    quad = halfgen_quadrature(q)
    rep = VerificationReport("half-derivative generator",
                             metadata={"f": f.name, "s": q.s, "xi": xi, "x0": x0})
    if xi == x0:
        symmetric = np.sqrt(2.0 / np.pi) * 0.5 * float(np.asarray(f.laplacian(xi)))
        rep.add_deterministic("quadrature vs symmetric-case value", symmetric, quad, 1e-8)
    mc = halfgen_mc(q, deltas=(0.08, 0.04, 0.02, 0.01), n=cfg.params["n"],
                    bandwidth=cfg.params["step"], seed=cfg.seed.child("halfgen_mc"))
    gap = abs(mc.value - quad)
    allowed = max(3.0 * mc.stderr, 0.1 * abs(quad))
    z = (mc.value - quad) / mc.stderr if mc.stderr > 0 else float("nan")
    rep.rows.append(CheckRow("Monte Carlo vs quadrature", quad, mc, z, bool(gap <= allowed)))
    return [rep]


def _run_converge(cfg: RunConfig):
    k, t, n = cfg.params["k"], cfg.params["t"], cfg.params["n"]
    seed = cfg.seed
    rep = VerificationReport("excursion-variant convergence",
                             metadata={"k": k, "t": t, "n": n})
    p_val = marginal_match_test(k, t, n, seed.child("marginal_match"))
    rep.rows.append(CheckRow(f"marginal KS p-value (k={k})", 0.01,
                             Estimate(p_val, 0.0, 1), float("nan"), bool(p_val > 0.01)))
    times = (t / 2, t)
    d1 = joint_law_distance(1, times, n, seed.child("joint", 1))
    dk = joint_law_distance(k, times, n, seed.child("joint", k))
    comb = float(np.hypot(d1.stderr, dk.stderr))
    diff = dk.value - d1.value
    rep.rows.append(CheckRow(f"joint distance k={k} minus k=1", 0.0,
                             Estimate(diff, comb, 2 * n),
                             diff / comb if comb else float("nan"),
                             bool(diff <= 2.0 * comb)))
    sc = holder_scaling(cfg.params["p"], cfg.params["lags"], n, seed.child("holder"))
    rep.rows.append(CheckRow(f"increment scaling slope (p={cfg.params['p']})",
                             cfg.params["p"] / 4.0,
                             Estimate(sc.slope, sc.slope_stderr, n * len(sc.lags)),
                             (sc.slope - cfg.params["p"] / 4.0) / sc.slope_stderr,
                             bool(0.43 <= sc.slope <= 0.57) if cfg.params["p"] == 2.0
                             else bool(abs(sc.slope - cfg.params["p"] / 4.0)
                                       <= 3 * sc.slope_stderr)))
    return [rep]


_RUNNERS = {
    "marginal": _run_marginal,
    "pde-residual": _run_pde_residual,
    "exit": _run_exit,
    "thm4": _run_thm4,
    "halfgen": _run_halfgen,
    "converge": _run_converge,
}


def run(cfg: RunConfig) -> int:
    """Execute an experiment: write its CSV, print the summary, return status."""
    reports = _RUNNERS[cfg.experiment](cfg)
    versions = {"btplab": __version__, "numpy": np.__version__, "scipy": scipy.__version__}
    params = {k: v for k, v in cfg.params.items() if k != "domain"}
    write_csv(cfg.output_path, cfg.experiment, params, cfg.seed, reports, versions)
    for rep in reports:
        print(rep)
    ok = all(rep.passed for rep in reports)
    print(f"wrote {cfg.output_path}")
    print("ALL CHECKS PASSED" if ok else "SOME CHECKS FAILED")
    return 0 if ok else 1


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="btp",
        description="Run verification experiments for Brownian-time processes.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--seed", type=int, default=None, help="64-bit master seed")
    parser.add_argument("--n", type=int, default=None, help="replicate count")
    parser.add_argument("--t", type=float, default=None, help="time parameter")
    parser.add_argument("--x", type=str, default=None,
                        help="comma-separated evaluation points (halfgen: xi[,x0])")
    parser.add_argument("--domain", type=str, default=None,
                        help="interval:a,b or ball:r,d (ball centered at the origin)")
    parser.add_argument("--f", type=str, default=None, help=f"test function, one of {f_names()}")
    parser.add_argument("--k", type=int, default=None, help="number of outer copies")
    parser.add_argument("--p", type=float, default=None, help="moment order")
    parser.add_argument("--lags", type=str, default=None, help="comma-separated lags")
    parser.add_argument("--step", type=float, default=None,
                        help="simulation step (halfgen: regression bandwidth; thm4: grid step)")
    parser.add_argument("--out", type=str, default=None, help="CSV output path")
    parser.add_argument("--config", type=str, default=None, help="key = value config file")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    cli_values = {key: getattr(args, key) for key in
                  ("seed", "n", "t", "x", "domain", "f", "k", "p", "lags", "step", "out")}
    cli_values = {k: (str(v) if v is not None else None) for k, v in cli_values.items()}
    try:
        cfg = build_config(args.experiment, cli_values, args.config)
        return run(cfg)
    except UsageError as exc:
        key = f" (offending key: {exc.key})" if exc.key else ""
        print(f"error: {exc}{key}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
