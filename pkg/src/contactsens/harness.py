"""Sweeps over parameter grids, CSV output, and the two scans that locate the
survival transition and the sign change of the sensitivity variation."""

from __future__ import annotations

import csv
import io
import math
import os
import subprocess
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__, oracle
from .estimators import (
    EstimateWithCI,
    check_estimator_densities,
    conditional_occupation,
    delta_sensitivity,
    occupation_probability,
    sensitivity_dual,
    survival_profile,
)
from .lattice import ModelParams, ValidationError, WindowLambdaR, check_theorem1

CSV_VERSION = 1
HEADER = ["mode", "lambda1", "lambda2", "p", "q", "r", "t", "n", "mean", "stderr", "seed",
          "estimator", "wall_s", "build"]
SENTINEL = "# complete"
MODES = ("sensitivity", "delta", "survival", "conditional", "oracle-check")

# sign-reversal preset; grid points calibrated by pilot runs at n = 2e4
THEOREM1 = {
    "p": 0.7,
    "q": 0.9,
    "r": 5,
    "t": 30.0,
    "n": 200_000,
    "pairs": [(1.0, 1.4), (6.0, 8.0)],
}


class Inconclusive(RuntimeError):
    """A sign call could not be made at the budgeted number of replicas."""


def build_id() -> str:
    """Package version plus the git commit of the source tree when available."""
    here = Path(__file__).resolve().parent
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=here,
                             capture_output=True, text=True, timeout=5, check=True)
        return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        return __version__


def parse_grid(text: str) -> list[float]:
    """``a:b:step`` (inclusive of ``b`` up to rounding) or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(f"grid must look like a:b:step, got {text!r}")
        a, b, step = map(float, parts)
        if step <= 0 or b < a:
            raise ValidationError(f"bad grid {text!r}")
        k = int(math.floor((b - a) / step + 1e-9))
        return [round(a + i * step, 12) for i in range(k + 1)]
    return [float(x) for x in text.split(",") if x.strip()]


@dataclass
class SweepSpec:
    """A grid of experiment points sharing ``(p, q, r, t, n)`` and a master seed.

    ``points`` holds ``lambda`` values (one-rate modes) or ``(lambda1, lambda2)``
    pairs (``delta``).  Every point uses the same master seed, so any row can be
    re-run on its own.
    """

    mode: str
    points: list
    p: float = 0.7
    q: float = 0.9
    r: int = 5
    t: float = 30.0
    n: int = 10_000
    seed: int = 1
    workers: int = 1
    out: str | None = None
    preset: str | None = None
    ring: int | None = None
    record_wall: bool = False
    options: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")
        if not self.points:
            raise ValidationError("empty grid")
        if self.n < 1:
            raise ValidationError(f"need n >= 1, got {self.n}")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if self.mode == "delta":
            pairs = [tuple(pt) for pt in self.points]
            if any(len(pt) != 2 or not pt[0] < pt[1] for pt in pairs):
                raise ValidationError("delta points must be pairs with lambda1 < lambda2")
            if pairs != sorted(pairs):
                raise ValidationError("grid must be sorted")
            check_estimator_densities(self.p, self.q)
            lams = [x for pt in pairs for x in pt]
        else:
            lams = [float(x) for x in self.points]
            if lams != sorted(lams):
                raise ValidationError("grid must be sorted")
        for lam in lams:
            if self.mode in ("sensitivity", "delta"):
                ModelParams(lam, self.p, self.q, self.r, self.t)
            elif not lam >= 0:
                raise ValidationError(f"infection rate must be >= 0, got {lam}")
        if not self.t > 0:
            raise ValidationError("time horizon must be positive")
        if self.mode in ("conditional", "oracle-check"):
            WindowLambdaR(self.r)
        if self.preset == "theorem1":
            check_theorem1(self.p, self.q)


def theorem1_spec(**overrides) -> SweepSpec:
    base = dict(mode="delta", points=list(THEOREM1["pairs"]), p=THEOREM1["p"],
                q=THEOREM1["q"], r=THEOREM1["r"], t=THEOREM1["t"], n=THEOREM1["n"],
                preset="theorem1")
    base.update(overrides)
    return SweepSpec(**base)


@dataclass(frozen=True)
class ResultRow:
    mode: str
    lambda1: float
    lambda2: float | None
    p: float | None
    q: float | None
    r: int | None
    t: float
    n: int
    mean: float
    stderr: float
    seed: int
    estimator: str
    wall_s: float | None
    build: str

    def cells(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return [fmt(getattr(self, k)) for k in HEADER]

    @property
    def estimate(self) -> EstimateWithCI:
        return EstimateWithCI(self.mean, self.stderr, self.n, self.seed)


def _evaluate(spec: SweepSpec, point) -> tuple[EstimateWithCI, float, float | None, str]:
    kw = dict(ring=spec.ring, workers=spec.workers)
    if spec.mode == "sensitivity":
        lam = float(point)
        sp = sensitivity_dual(ModelParams(lam, spec.p, spec.q, spec.r, spec.t), spec.n,
                              spec.seed, **kw)
        return sp.estimate, lam, None, "dual"
    if spec.mode == "delta":
        l1, l2 = map(float, point)
        coupled = spec.options.get("coupled", True)
        est = delta_sensitivity(l1, l2, spec.p, spec.q, spec.r, spec.t, spec.n, spec.seed,
                                coupled=coupled, **kw)
        return est, l1, l2, "coupled" if coupled else "independent"
    if spec.mode == "survival":
        lam = float(point)
        est = survival_profile(lam, [spec.t], spec.n, spec.seed, **kw)[0]
        return est, lam, None, "survival"
    if spec.mode == "conditional":
        lam = float(point)
        first, _ = conditional_occupation(lam, spec.r, spec.t, spec.n, spec.seed, **kw)
        return first, lam, None, "conditional"
    # oracle-check: the row's mean is the Monte Carlo occupation minus the exact one
    lam = float(point)
    N = spec.ring or 10
    est = occupation_probability([0], lam, spec.t, spec.n, spec.seed, ring=N,
                                 workers=spec.workers)
    exact = oracle.exact_occupation(oracle.RingChain(N, lam), [0], spec.t)
    return (replace(est, mean=est.mean - exact), lam, None, f"oracle-ring{N}")


def run_sweep(spec: SweepSpec, *, stream=None) -> list[ResultRow]:
    """Evaluate every grid point in order and write the CSV.

    Output goes to ``spec.out`` (or ``stream``).  The trailing sentinel line is
    written last, so an interrupted file is recognisably incomplete.  The
    ``wall_s`` column is left empty unless ``record_wall`` is set, keeping the
    file a pure function of the spec.
    """
    spec.validate()
    build = build_id()
    rows = []
    fh = None
    if stream is None and spec.out:
        fh = open(spec.out, "w", newline="")
        stream = fh
    try:
        writer = csv.writer(stream, lineterminator="\n") if stream is not None else None
        if writer:
            writer.writerow(HEADER)
        for point in spec.points:
            est, l1, l2, kind = _evaluate(spec, point)
            row = ResultRow(
                spec.mode, l1, l2,
                None if spec.mode in ("survival", "oracle-check") else spec.p,
                None if spec.mode in ("survival", "oracle-check") else spec.q,
                None if spec.mode in ("survival", "oracle-check") else spec.r,
                spec.t, spec.n, est.mean, est.stderr, spec.seed, kind,
                round(est.wall_time, 3) if spec.record_wall else None, build)
            rows.append(row)
            if writer:
                writer.writerow(row.cells())
                stream.flush()
        if writer:
            stream.write(SENTINEL + "\n")
    finally:
        if fh is not None:
            fh.close()
    return rows


def read_csv(path: str | Path) -> tuple[list[dict], bool]:
    """Rows of a sweep file and whether it ends with the completion sentinel."""
    text = Path(path).read_text()
    lines = text.splitlines()
    complete = bool(lines) and lines[-1] == SENTINEL
    body = [ln for ln in lines if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body)))), complete


# transition scans ---------------------------------------------------------


@dataclass(frozen=True)
class SurvivalCall:
    lam: float
    early: EstimateWithCI
    late: EstimateWithCI

    @property
    def retention(self) -> float:
        """Fraction of runs alive at ``T`` that are still alive at ``2T``."""
        return self.late.mean / self.early.mean if self.early.mean > 0 else 0.0


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float
    calls: tuple

    def __contains__(self, lam: float) -> bool:
        return self.lo <= lam <= self.hi


# At criticality survival decays like a power of t with exponent near 0.16,
# so the alive fraction keeps ~0.9 of its mass from T to 2T.  Below that the
# decay is exponential (retention -> 0), above it retention -> 1.
RETENTION_THRESHOLD = 0.9


def critical_bracket(grid, horizon: float, n: int, seed: int, *,
                     threshold: float = RETENTION_THRESHOLD, workers: int = 1) -> Bracket:
    """Bracket the extinction/survival transition from survival at ``T`` and ``2T``.

    A rate counts as dying when its retention ``P(alive 2T) / P(alive T)`` is
    below ``threshold``.  The bracket runs from the largest dying grid rate to
    the next grid rate.
    """
    grid = sorted(float(x) for x in grid)
    if len(grid) < 2:
        raise ValidationError("need at least two grid rates")
    calls = []
    for lam in grid:
        early, late = survival_profile(lam, [horizon, 2 * horizon], n, seed, workers=workers)
        calls.append(SurvivalCall(lam, early, late))
    dying = [i for i, c in enumerate(calls) if c.retention < threshold]
    if not dying:
        raise Inconclusive("every grid rate looks supercritical")
    i = max(dying)
    if i == len(grid) - 1:
        raise Inconclusive("every grid rate looks subcritical")
    return Bracket(grid[i], grid[i + 1], tuple(calls))


@dataclass(frozen=True)
class SignCall:
    lam: float
    estimate: EstimateWithCI

    @property
    def sign(self) -> int:
        return self.estimate.sign


@dataclass(frozen=True)
class Transition:
    """Rates where the sensitivity variation was last seen positive and first
    seen negative; the sign change lies in ``[lo, hi + width]``."""

    lo: float
    hi: float
    width: float
    calls: tuple

    @property
    def interval(self) -> tuple[float, float]:
        return self.lo, self.hi + self.width


def locate_transition(p: float, q: float, r: int, t: float, lam_range: tuple[float, float],
                      n: int, seed: int, *, width: float = 0.5, tolerance: float = 0.5,
                      workers: int = 1) -> Transition:
    """Bisection on the sign of ``Delta(lam, lam + width)`` over ``lam_range``.

    Endpoints must carry opposite, statistically resolved signs.  When the
    midpoint is inconclusive the search probes halfway towards each end and
    continues from whichever resolves; if none does, the current bracket is
    returned.  Raises :class:`Inconclusive` when no sign change is detected.
    """
    a, b = map(float, lam_range)
    if not a < b:
        raise ValidationError("range must have lo < hi")
    if not tolerance > 0 or not width > 0:
        raise ValidationError("tolerance and width must be positive")
    check_estimator_densities(p, q)
    cache: dict[float, SignCall] = {}

    def call(lam: float) -> SignCall:
        lam = round(lam, 9)
        if lam not in cache:
            cache[lam] = SignCall(lam, delta_sensitivity(lam, lam + width, p, q, r, t, n, seed,
                                                         workers=workers))
        return cache[lam]

    sa, sb = call(a).sign, call(b).sign
    if not (sa > 0 and sb < 0):
        raise Inconclusive(f"no sign change detected: sign at {a} is {sa:+d}, at {b} is {sb:+d}")
    while b - a > tolerance:
        m = (a + b) / 2
        s = call(m).sign
        if s == 0:
            s_left, s_right = call((a + m) / 2).sign, call((m + b) / 2).sign
            if s_left < 0:
                b = (a + m) / 2
            elif s_right > 0:
                a = (m + b) / 2
            else:
                if s_left > 0:
                    a = (a + m) / 2
                if s_right < 0:
                    b = (m + b) / 2
                break
        elif s > 0:
            a = m
        else:
            b = m
    calls = tuple(sorted(cache.values(), key=lambda c: c.lam))
    return Transition(a, b, width, calls)


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


__all__ = [
    "Bracket", "HEADER", "Inconclusive", "ResultRow", "SENTINEL", "SweepSpec", "THEOREM1",
    "Transition", "critical_bracket", "locate_transition", "parse_grid", "read_csv",
    "run_sweep", "theorem1_spec",
]
