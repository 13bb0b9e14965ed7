"""Monte Carlo estimators built on batched replica runs.

Every estimator is a deterministic function of ``(seed, n, parameters)``:
replica ``k`` always uses the random streams keyed by ``(seed, k)``, whatever
the worker count.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2_contingency

from .engine import run_batch
from .lattice import ModelParams, ValidationError, WindowLambdaR, check_densities, f_table
from .rng import STREAM_DYNAMICS, STREAM_INDEPENDENT

Z95 = 1.959963984540054


class DegenerateConditioning(RuntimeError):
    """No replica satisfied the conditioning event."""


@dataclass(frozen=True)
class EstimateWithCI:
    """Sample mean with its plain standard error.

    ``horizon`` is set by estimators that use a finite-time proxy.
    """

    mean: float
    stderr: float
    n: int
    seed: int
    wall_time: float = 0.0
    horizon: float | None = None

    @classmethod
    def from_samples(cls, values: np.ndarray, seed: int, wall_time: float = 0.0,
                     horizon: float | None = None) -> EstimateWithCI:
        values = np.asarray(values, dtype=np.float64)
        n = values.size
        if n == 0:
            raise ValueError("no samples")
        mean = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean, stderr, n, seed, wall_time, horizon)

    @property
    def ci95(self) -> tuple[float, float]:
        h = Z95 * self.stderr
        return self.mean - h, self.mean + h

    @property
    def excludes_zero(self) -> bool:
        lo, hi = self.ci95
        return lo > 0 or hi < 0

    @property
    def sign(self) -> int:
        """+1 or -1 when the 95% interval excludes zero, else 0."""
        if not self.excludes_zero:
            return 0
        return 1 if self.mean > 0 else -1

    def within(self, value: float, k: float = 3.0, extra_stderr: float = 0.0) -> bool:
        """Whether ``value`` lies within ``k`` combined standard errors of the mean."""
        return abs(self.mean - value) <= k * math.hypot(self.stderr, extra_stderr)


@dataclass(frozen=True)
class SensitivityPoint:
    params: ModelParams
    estimate: EstimateWithCI
    estimator_kind: str  # "dual" or "direct"


def _f_of_counts(counts: np.ndarray, p: float, q: float) -> np.ndarray:
    return np.asarray(f_table(p, q, 3))[counts]


def sensitivity_dual(params: ModelParams, n: int, seed: int, *, ring: int | None = None,
                     workers: int = 1) -> SensitivityPoint:
    """Mean of ``f(|eta_t ∩ {-r, r}|)`` over runs started from the single site 0."""
    t0 = time.perf_counter()
    r = params.r
    res = run_batch((0,), (0,), params.lam, params.lam, params.t, n, seed,
                    probes=(-r, r), ring=ring, workers=workers)
    vals = _f_of_counts(res.upper.sum(axis=1), params.p, params.q)
    est = EstimateWithCI.from_samples(vals, seed, time.perf_counter() - t0)
    return SensitivityPoint(params, est, "dual")


def sensitivity_direct(params: ModelParams, n: int, seed: int, *, ring: int | None = None,
                       workers: int = 1) -> SensitivityPoint:
    """Frequency of ``{lower(0) = 0, upper(0) = 1}`` for the monotone pair started
    from maximally coupled Bernoulli(p) <= Bernoulli(q) marks on the window."""
    t0 = time.perf_counter()
    res = run_batch((), (), params.lam, params.lam, params.t, n, seed, probes=(0,),
                    window=params.window.sites, p=params.p, q=params.q, ring=ring,
                    workers=workers)
    vals = res.upper[:, 0] - res.lower[:, 0]
    est = EstimateWithCI.from_samples(vals, seed, time.perf_counter() - t0)
    return SensitivityPoint(params, est, "direct")


def delta_sensitivity(lam1: float, lam2: float, p: float, q: float, r: int, t: float, n: int,
                      seed: int, *, coupled: bool = True, ring: int | None = None,
                      workers: int = 1) -> EstimateWithCI:
    """Estimate ``S(lam2, t) - S(lam1, t)``.

    With ``coupled=True`` each replica evaluates both rates on one monotone
    pair (common random numbers).  ``coupled=False`` runs the two rates on
    independent streams and exists for variance comparisons.
    """
    if not lam1 < lam2:
        raise ValidationError(f"need lambda1 < lambda2, got {lam1} >= {lam2}")
    ModelParams(lam2, p, q, r, t)
    t0 = time.perf_counter()
    probes = (-r, r)
    if coupled:
        res = run_batch((0,), (0,), lam1, lam2, t, n, seed, probes=probes, ring=ring,
                        workers=workers)
        lo_counts, up_counts = res.lower.sum(axis=1), res.upper.sum(axis=1)
    else:
        a = run_batch((0,), (0,), lam1, lam1, t, n, seed, probes=probes, ring=ring,
                      workers=workers, stream=STREAM_DYNAMICS)
        b = run_batch((0,), (0,), lam2, lam2, t, n, seed, probes=probes, ring=ring,
                      workers=workers, stream=STREAM_INDEPENDENT)
        lo_counts, up_counts = a.upper.sum(axis=1), b.upper.sum(axis=1)
    vals = _f_of_counts(up_counts, p, q) - _f_of_counts(lo_counts, p, q)
    return EstimateWithCI.from_samples(vals, seed, time.perf_counter() - t0)


def survival_profile(lam: float, horizons, n: int, seed: int, *, ring: int | None = None,
                     workers: int = 1) -> list[EstimateWithCI]:
    """``P(eta_h != ∅)`` from a single infected site, for each horizon ``h``.

    One set of runs to ``max(horizons)`` serves every horizon, so the
    estimates are paired (and hence non-increasing in ``h``).
    """
    horizons = [float(h) for h in horizons]
    if not horizons or min(horizons) <= 0:
        raise ValidationError("horizons must be positive")
    t0 = time.perf_counter()
    res = run_batch((0,), (0,), lam, lam, max(horizons), n, seed, ring=ring, workers=workers)
    wall = time.perf_counter() - t0
    return [EstimateWithCI.from_samples(res.ext_upper > h, seed, wall, h) for h in horizons]


def survival_probability(lam: float, t_max: float, n: int, seed: int, *,
                         ring: int | None = None, workers: int = 1) -> EstimateWithCI:
    """Finite-horizon proxy for the survival probability; biased upwards."""
    return survival_profile(lam, [t_max], n, seed, ring=ring, workers=workers)[0]


def occupation_probability(A, lam: float, t: float, n: int, seed: int, *, site: int = 0,
                           ring: int | None = None, workers: int = 1) -> EstimateWithCI:
    """``P(eta_t(site) = 1)`` for the process started from ``A``."""
    t0 = time.perf_counter()
    res = run_batch(A, A, lam, lam, t, n, seed, probes=(site,), ring=ring, workers=workers)
    return EstimateWithCI.from_samples(res.upper[:, 0], seed, time.perf_counter() - t0)


def conditional_occupation(lam: float, r: int, t: float, n: int, seed: int, *,
                           ring: int | None = None,
                           workers: int = 1) -> tuple[EstimateWithCI, EstimateWithCI]:
    """``P(eta_t(r) = 1 | eta_t(-r) = 0)`` and its complement, from runs started at 0.

    Both come from the same conditioned subsample; the second mean is
    ``1 - first`` exactly.
    """
    WindowLambdaR(r)
    if not t > 0:
        raise ValidationError(f"time horizon must be positive, got {t}")
    t0 = time.perf_counter()
    res = run_batch((0,), (0,), lam, lam, t, n, seed, probes=(-r, r), ring=ring,
                    workers=workers)
    keep = res.upper[:, 0] == 0
    if not keep.any():
        raise DegenerateConditioning(f"no replica had eta_t({-r}) = 0")
    wall = time.perf_counter() - t0
    first = EstimateWithCI.from_samples(res.upper[keep, 1], seed, wall, t)
    second = EstimateWithCI(1.0 - first.mean, first.stderr, first.n, seed, wall, t)
    return first, second


def product_approximation(rho: float) -> float:
    """Large-time, large-window value of ``P(eta(r) = 1 | eta(-r) = 0)``.

    The run survives with probability ``rho`` and then looks like the upper
    invariant measure, whose sites far apart are nearly independent with
    density ``rho``.
    """
    if not 0 <= rho <= 1:
        raise ValidationError(f"rho must lie in [0, 1], got {rho}")
    den = (1 - rho) + rho * (1 - rho)
    return rho * rho * (1 - rho) / den if den > 0 else 0.0


@dataclass(frozen=True)
class IndependenceTest:
    """Chi-square test of independence on a 2x2 table.

    ``table[a][b]`` counts conditioned replicas with ``lower(r) = a`` and
    ``upper(-r) = b``.
    """

    table: np.ndarray
    statistic: float
    pvalue: float
    n_conditioned: int
    n: int
    seed: int
    extras: dict = field(default_factory=dict)

    def passes(self, alpha: float = 0.01) -> bool:
        return self.pvalue >= alpha


def conditional_independence_test(lam1: float, lam2: float, r: int, t: float, n: int,
                                  seed: int, *, ring: int | None = None,
                                  workers: int = 1) -> IndependenceTest:
    """Test whether ``{lower_t(r) = 1}`` and ``{upper_t(-r) = 1}`` are independent
    given ``{lower_t(-r) = 0}`` for the rate-coupled pair started at 0."""
    if not lam1 < lam2:
        raise ValidationError(f"need lambda1 < lambda2, got {lam1} >= {lam2}")
    WindowLambdaR(r)
    res = run_batch((0,), (0,), lam1, lam2, t, n, seed, probes=(-r, r), ring=ring,
                    workers=workers)
    keep = res.lower[:, 0] == 0
    a = res.lower[keep, 1].astype(np.int64)
    b = res.upper[keep, 0].astype(np.int64)
    table = np.zeros((2, 2), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    m = int(keep.sum())
    if (table.sum(axis=0) == 0).any() or (table.sum(axis=1) == 0).any():
        # a constant margin carries no evidence against independence
        return IndependenceTest(table, 0.0, 1.0, m, n, seed)
    stat, pvalue, _, expected = chi2_contingency(table, correction=False)
    extras = {"expected": expected,
              "p_a": table[1].sum() / m,
              "p_b": table[:, 1].sum() / m,
              "p_ab": table[1, 1] / m}
    return IndependenceTest(table, float(stat), float(pvalue), m, n, seed, extras)


def check_estimator_densities(p: float, q: float) -> None:
    """Densities for which the sign argument of the estimators applies (``p + q > 1``)."""
    check_densities(p, q)
    if not p + q > 1:
        raise ValidationError(f"need p + q > 1, got p={p}, q={q}")
