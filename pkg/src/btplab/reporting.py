"""Estimates, pass/fail summaries, and CSV emission.

Statistical sums use numpy's pairwise (tree) reduction, so aggregate values
do not depend on the order replicates were produced in.  CSV files carry all
run metadata in ``#`` comment lines; data rows contain no timestamps and are
byte-identical across re-runs with the same configuration and seed.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateStatisticsError, InvalidInputError

Z_PASS = 3.0


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo value with its standard error and replicate count."""

    value: float
    stderr: float
    n: int

    def __post_init__(self):
        if self.stderr < 0:
            raise InvalidInputError("stderr must be non-negative")
        if self.n < 2 and self.stderr > 0:
            raise InvalidInputError("nonzero stderr requires n >= 2")


def estimate_from_samples(samples) -> Estimate:
    """Mean, stderr = sample standard deviation / sqrt(n).

    ``numpy.mean``/``numpy.std`` use pairwise summation, keeping the result
    order-insensitive to double precision.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n == 0:
        raise InvalidInputError("cannot estimate from an empty sample")
    if n == 1:
        return Estimate(float(x[0]), 0.0, 1)
    return Estimate(float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(n)), n)


@dataclass(frozen=True)
class Summary:
    z_score: float
    passed: bool


def summarize(estimates, theoretical: float):
    """z-score(s) against a theoretical value; pass means ``|z| <= 3``.

    Accepts a single :class:`Estimate` or a list.  A zero-stderr estimate is
    a deterministic quantity: it passes with ``z = 0`` when it hits the
    target exactly and is otherwise a :class:`DegenerateStatisticsError`.
    """
    if isinstance(estimates, Estimate):
        return _summarize_one(estimates, theoretical)
    return [_summarize_one(e, theoretical) for e in estimates]


def _summarize_one(est: Estimate, theoretical: float) -> Summary:
    if est.stderr == 0.0:
        if est.value == theoretical:
            return Summary(0.0, True)
        raise DegenerateStatisticsError(
            f"zero stderr but value {est.value!r} != theoretical {theoretical!r}"
        )
    z = (est.value - theoretical) / est.stderr
    return Summary(float(z), bool(abs(z) <= Z_PASS))


@dataclass
class CheckRow:
    """One verified quantity inside a report."""

    label: str
    theoretical: float
    estimate: Estimate
    z_score: float
    passed: bool

    @classmethod
    def statistical(cls, label, theoretical, estimate: Estimate) -> "CheckRow":
        s = _summarize_one(estimate, theoretical)
        return cls(label, float(theoretical), estimate, s.z_score, s.passed)

    @classmethod
    def deterministic(cls, label, theoretical, value, tol) -> "CheckRow":
        err = abs(value - theoretical)
        return cls(label, float(theoretical), Estimate(float(value), 0.0, 1),
                   float("nan"), bool(err <= tol))


@dataclass
class VerificationReport:
    """A named bundle of checks plus the metadata needed to re-run them."""

    quantity: str
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def add_statistical(self, label, theoretical, estimate):
        self.rows.append(CheckRow.statistical(label, theoretical, estimate))

    def add_deterministic(self, label, theoretical, value, tol):
        self.rows.append(CheckRow.deterministic(label, theoretical, value, tol))

    def __str__(self):
        lines = [f"[{'PASS' if self.passed else 'FAIL'}] {self.quantity}"]
        for r in self.rows:
            status = "pass" if r.passed else "FAIL"
            z = "" if np.isnan(r.z_score) else f" z={r.z_score:+.2f}"
            err = "" if r.estimate.stderr == 0 else f" +/- {r.estimate.stderr:.3g}"
            lines.append(
                f"  {status}  {r.label}: {r.estimate.value:.10g}{err}"
                f" (theoretical {r.theoretical:.10g}{z})"
            )
        return "\n".join(lines)


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def render_csv(experiment: str, params: dict, seed, reports, versions: dict) -> tuple[str, str]:
    """Render reports as (comment_block, data_block).

    The comment block holds everything needed to re-run: experiment name,
    the full parameter set, the seed, the bit-generator identifier, and
    module versions.  The timestamp lives here and only here.
    """
    buf = io.StringIO()
    buf.write(f"# experiment = {experiment}\n")
    for key in sorted(params):
        buf.write(f"# param {key} = {_fmt(params[key])}\n")
    buf.write(f"# seed = {int(seed.master) if hasattr(seed, 'master') else int(seed)}\n")
    buf.write("# generator = PCG64\n")
    for key in sorted(versions):
        buf.write(f"# version {key} = {versions[key]}\n")
    buf.write(f"# written = {time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
    comments = buf.getvalue()

    data = io.StringIO()
    data.write("quantity,check,theoretical,estimate,stderr,n,z_score,pass\n")
    for rep in reports:
        for r in rep.rows:
            z = "" if np.isnan(r.z_score) else _fmt(r.z_score)
            data.write(
                f"{rep.quantity},{r.label},{_fmt(r.theoretical)},"
                f"{_fmt(r.estimate.value)},{_fmt(r.estimate.stderr)},"
                f"{r.estimate.n},{z},{int(r.passed)}\n"
            )
    return comments, data.getvalue()


def write_csv(path, experiment, params, seed, reports, versions) -> str:
    comments, data = render_csv(experiment, params, seed, reports, versions)
    with open(path, "w") as fh:
        fh.write(comments)
        fh.write(data)
    return data
