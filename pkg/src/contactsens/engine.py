"""Simulation entry points: single runs, the two monotone couplings, and
batched replica runs used by the estimators.

Two engines sample the same processes:

``"jump"``
    the compiled jump-chain kernel (default; fast, used for estimation);
``"harris"``
    the per-site clock construction in :mod:`contactsens.harris`, where two
    runs with the same :class:`~contactsens.rng.ReplicaKey` share every clock.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernel
from .harris import CoupledTrajectory, CouplingViolation, HarrisEngine
from .lattice import Configuration, ValidationError, WindowLambdaR
from .rng import STREAM_DYNAMICS, STREAM_INITIAL, ReplicaKey, draw, to_unit

BLOCK = 4096  # replicas per work unit; fixed so results do not depend on workers

__all__ = [
    "BLOCK",
    "BatchResult",
    "CoupledTrajectory",
    "CouplingViolation",
    "Geometry",
    "run_batch",
    "run_coupled_initial",
    "run_coupled_lambda",
    "run_single",
    "sample_bernoulli_window",
]


@dataclass(frozen=True)
class Geometry:
    """Maps coordinates to kernel cells: the line (``ring=None``) or a ring."""

    ring: int | None = None
    width: int = 0

    @classmethod
    def line(cls, extent: int, lam: float, t: float) -> Geometry:
        # An edge moves right only through an arrow from the rightmost infected
        # site, so its displacement is dominated by Poisson(lam * t); the margin
        # sits far in that tail and an overflow triggers an exact replay.
        mu = lam * t
        margin = int(math.ceil(mu + 6.0 * math.sqrt(mu) + 10))
        return cls(None, 2 * (extent + margin) + 3)

    @classmethod
    def on_ring(cls, n: int) -> Geometry:
        if n < 2:
            raise ValidationError(f"ring needs at least 2 sites, got {n}")
        return cls(n, n)

    def widened(self) -> Geometry:
        return Geometry(None, 2 * self.width + 1)

    @property
    def is_ring(self) -> bool:
        return self.ring is not None

    def cell(self, x: int) -> int:
        if self.ring is not None:
            return (x + self.ring // 2) % self.ring
        c = x + self.width // 2
        if not 0 < c < self.width - 1:
            raise ValidationError(f"site {x} outside the simulation window")
        return c

    def cells(self, sites) -> np.ndarray:
        return np.array(sorted({self.cell(x) for x in sites}), dtype=np.int64)

    def site(self, c: int) -> int:
        if self.ring is not None:
            return c - self.ring // 2
        return c - self.width // 2


def _geometry(sites, lam: float, t: float, ring: int | None) -> Geometry:
    if ring is not None:
        return Geometry.on_ring(ring)
    extent = max((abs(x) for x in sites), default=0)
    return Geometry.line(extent, lam, t)


def _check_rates(lam1: float, lam2: float) -> None:
    if not lam1 >= 0:
        raise ValidationError(f"infection rate must be >= 0, got {lam1}")
    if not lam2 >= lam1:
        raise ValidationError(f"need lambda1 <= lambda2, got {lam1} > {lam2}")


def _run_jump(lower, upper, lam1, lam2, t, rng: ReplicaKey, ring, check) -> CoupledTrajectory:
    geo = _geometry(list(upper), lam2, t, ring)
    while True:
        lo_cells = geo.cells(lower)
        up_cells = geo.cells(upper)
        lo, up, *rest = _kernel.make_workspace(geo.width)
        stats = np.zeros(_kernel.N_STAT)
        state = np.array([rng.key(STREAM_DYNAMICS)], dtype=np.uint64)
        _kernel.evolve(lo, up, *rest, lo_cells, up_cells, float(lam1), float(lam2), float(t),
                       geo.is_ring, state, check, stats)
        if stats[_kernel.COL_STATUS] == _kernel.OVERFLOW:
            geo = geo.widened()
            continue
        break
    lower_out = Configuration(geo.site(c) for c in np.flatnonzero(lo))
    upper_out = Configuration(geo.site(c) for c in np.flatnonzero(up))
    ext = stats[_kernel.COL_EXT_UP]
    traj = CoupledTrajectory(lower_out, upper_out, t, t if math.isinf(ext) else ext,
                             int(stats[_kernel.COL_EVENTS]), int(stats[_kernel.COL_VIOLATIONS]))
    if traj.violations:
        raise CouplingViolation(f"{traj.violations} domination violations in replica {rng.replica}")
    return traj


def _run(lower, upper, lam1, lam2, t, rng, ring, engine, check=1) -> CoupledTrajectory:
    if t < 0:
        raise ValidationError(f"time horizon must be >= 0, got {t}")
    lower = Configuration(lower)
    upper = Configuration(upper)
    if engine == "jump":
        return _run_jump(lower, upper, lam1, lam2, t, rng, ring, check)
    if engine == "harris":
        return HarrisEngine(rng, lam1, lam2, ring).run(lower, upper, t)
    raise ValidationError(f"unknown engine {engine!r}")


def run_single(A, lam: float, t: float, rng: ReplicaKey, *, ring: int | None = None,
               engine: str = "jump") -> Configuration:
    """Support of the contact process started from ``A`` at time ``t``.

    Uses the coupled machinery with both copies equal and no extra arrows.
    """
    _check_rates(lam, lam)
    return _run(A, A, lam, lam, t, rng, ring, engine).upper


def run_coupled_lambda(A, lam1: float, lam2: float, t: float, rng: ReplicaKey, *,
                       ring: int | None = None, engine: str = "jump",
                       check: int = 1) -> CoupledTrajectory:
    """Processes at rates ``lam1 <= lam2`` from the same ``A`` under shared clocks."""
    _check_rates(lam1, lam2)
    return _run(A, A, lam1, lam2, t, rng, ring, engine, check)


def run_coupled_initial(xi_lower, xi_upper, lam: float, t: float, rng: ReplicaKey, *,
                        ring: int | None = None, engine: str = "jump") -> CoupledTrajectory:
    """Processes from nested initial sets under identical clocks (same rate)."""
    _check_rates(lam, lam)
    xi_lower = Configuration(xi_lower)
    xi_upper = Configuration(xi_upper)
    if not xi_lower.issubset(xi_upper):
        raise ValidationError("xi_lower must be contained in xi_upper")
    return _run(xi_lower, xi_upper, lam, lam, t, rng, ring, engine)


def sample_bernoulli_window(p: float, q: float, window: WindowLambdaR,
                            rng: ReplicaKey) -> tuple[Configuration, Configuration]:
    """Nested Bernoulli(p) and Bernoulli(q) marks on the window from one uniform per site.

    Draws match the ones the compiled batch driver uses for the same replica.
    """
    if not 0 <= p <= q <= 1:
        raise ValidationError(f"need 0 <= p <= q <= 1, got p={p}, q={q}")
    key = rng.key(STREAM_INITIAL)
    lower, upper = Configuration(), Configuration()
    for k, x in enumerate(sorted(window.sites)):
        u = 1.0 - to_unit(draw(key, k))
        if u < q:
            upper.add(x)
            if u < p:
                lower.add(x)
    return lower, upper


# batches -----------------------------------------------------------------


@dataclass
class BatchResult:
    """Per-replica observations from ``run_batch``.

    ``lower[k, j]`` / ``upper[k, j]`` are the occupations of probe ``j`` at the
    horizon; ``ext_lower`` / ``ext_upper`` are extinction times (``inf`` when
    alive at the horizon).
    """

    lower: np.ndarray
    upper: np.ndarray
    ext_lower: np.ndarray
    ext_upper: np.ndarray
    events: int
    violations: int
    seed: int
    first: int

    @property
    def n(self) -> int:
        return self.lower.shape[0]


@dataclass(frozen=True)
class _Job:
    geo: Geometry
    lower: tuple[int, ...]
    upper: tuple[int, ...]
    window: tuple[int, ...]
    p: float
    q: float
    lam1: float
    lam2: float
    t: float
    seed: int
    stream: int
    probes: tuple[int, ...]
    check: int


def _run_block(job: _Job, first: int, n: int):
    geo = job.geo
    while True:
        occ, stats = _kernel.batch(
            geo.width, geo.is_ring, geo.cells(job.lower), geo.cells(job.upper),
            np.array([geo.cell(x) for x in job.window], dtype=np.int64), job.p, job.q,
            job.lam1, job.lam2, job.t, job.seed, first, n, job.stream,
            np.array([geo.cell(x) for x in job.probes], dtype=np.int64), job.check)
        over = np.flatnonzero(stats[:, _kernel.COL_STATUS] == _kernel.OVERFLOW)
        if over.size == 0:
            return occ, stats
        # replay the offending replicas exactly in a wider window
        for k in over:
            o, s = _run_block(_Job(**{**job.__dict__, "geo": geo.widened()}), first + int(k), 1)
            occ[k] = o[0]
            stats[k] = s[0]
        return occ, stats


def _run_block_star(args):
    return _run_block(*args)


def run_batch(lower, upper, lam1: float, lam2: float, t: float, n: int, seed: int, *,
              probes=(0,), window=(), p: float = 0.0, q: float = 0.0,
              ring: int | None = None, stream: int = STREAM_DYNAMICS, workers: int = 1,
              check: int = 1) -> BatchResult:
    """Run replicas ``0 .. n-1`` of a nested pair and observe ``probes`` at time ``t``.

    With a non-empty ``window`` each replica starts from fresh nested
    Bernoulli(p) / Bernoulli(q) marks on those sites (``lower``/``upper`` are
    then ignored).  Replicas are cut into fixed blocks; with ``workers > 1``
    the blocks run in a process pool and are reassembled in block order, so
    the output does not depend on the worker count.
    """
    _check_rates(lam1, lam2)
    if n < 1:
        raise ValidationError(f"need at least one replica, got n={n}")
    if not t >= 0:
        raise ValidationError(f"time horizon must be >= 0, got {t}")
    lower = tuple(sorted(set(lower)))
    upper = tuple(sorted(set(upper)))
    if window:
        lower = upper = ()
    elif not set(lower) <= set(upper):
        raise ValidationError("lower initial set must be contained in the upper one")
    window = tuple(sorted(set(window)))
    sites = list(upper) + list(window) + list(probes)
    geo = _geometry(sites, lam2, t, ring)
    job = _Job(geo, lower, upper, window, float(p), float(q), float(lam1), float(lam2),
               float(t), int(seed), int(stream), tuple(probes), int(check))
    blocks = [(job, s, min(BLOCK, n - s)) for s in range(0, n, BLOCK)]
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block_star, blocks))
    else:
        parts = [_run_block(*b) for b in blocks]
    occ = np.concatenate([o for o, _ in parts])
    stats = np.concatenate([s for _, s in parts])
    res = BatchResult(
        lower=(occ & 1).astype(np.int8),
        upper=(occ >> 1).astype(np.int8),
        ext_lower=stats[:, _kernel.COL_EXT_LO],
        ext_upper=stats[:, _kernel.COL_EXT_UP],
        events=int(stats[:, _kernel.COL_EVENTS].sum()),
        violations=int(stats[:, _kernel.COL_VIOLATIONS].sum()),
        seed=int(seed),
        first=0,
    )
    if res.violations:
        raise CouplingViolation(f"{res.violations} domination violations in batch seed={seed}")
    return res
