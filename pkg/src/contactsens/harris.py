"""Graphical (Harris) construction with lazily generated per-site clocks.

Each site carries up to five independent Poisson clocks: a death mark, two
base arrows of rate ``lam1`` and two extra arrows of rate ``lam2 - lam1``.
A clock's event times are a deterministic function of
``(seed, replica, site, kind)``, generated on demand and memoized, so the
construction is defined on the whole line while only the visited region is
ever materialized.  Running two initial sets with the same ``ReplicaKey``
uses literally the same clocks.

This engine is the reference implementation; the compiled kernel in
``_kernel`` samples the same coupled chain much faster and is what the
estimators use by default.
"""

from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass, field
from enum import IntEnum

from .lattice import Configuration
from .rng import STREAM_CLOCK, ReplicaKey, draw, to_unit, zigzag


class CouplingViolation(AssertionError):
    """The lower copy left the upper one; the coupling is broken."""


class ClockKind(IntEnum):
    DEATH = 0
    INFECT_RIGHT = 1
    INFECT_LEFT = 2
    EXTRA_RIGHT = 3
    EXTRA_LEFT = 4

    def rate(self, lam1: float, lam2: float) -> float:
        if self is ClockKind.DEATH:
            return 1.0
        if self in (ClockKind.INFECT_RIGHT, ClockKind.INFECT_LEFT):
            return lam1
        return lam2 - lam1

    @property
    def step(self) -> int:
        """Direction of the arrow (+1 right, -1 left, 0 for deaths)."""
        return {0: 0, 1: 1, 2: -1, 3: 1, 4: -1}[int(self)]

    @property
    def extra(self) -> bool:
        return self >= ClockKind.EXTRA_RIGHT


@dataclass
class ClockStream:
    """Poisson event times of one clock, generated lazily and memoized."""

    site: int
    kind: ClockKind
    rate: float
    key: int
    times: list[float] = field(default_factory=list)

    @classmethod
    def for_site(cls, rng: ReplicaKey, site: int, kind: ClockKind, rate: float) -> ClockStream:
        return cls(site, kind, rate, rng.key(STREAM_CLOCK, zigzag(site), int(kind)))

    def time(self, k: int) -> float:
        """The ``k``-th event time (0-based); ``inf`` for a silent clock."""
        if self.rate <= 0:
            return math.inf
        times = self.times
        while len(times) <= k:
            last = times[-1] if times else 0.0
            gap = -math.log(to_unit(draw(self.key, len(times)))) / self.rate
            times.append(last + gap)
        return times[k]

    def first_index_after(self, s: float) -> int:
        if self.rate <= 0:
            return 0
        while not self.times or self.times[-1] <= s:
            self.time(len(self.times))
        return bisect.bisect_right(self.times, s)


@dataclass
class CoupledTrajectory:
    """Two nested copies driven by shared clocks, and how far they were run."""

    lower: Configuration
    upper: Configuration
    horizon: float
    time: float
    events: int = 0
    violations: int = 0


class HarrisEngine:
    """Event-driven simulation of a nested pair ``lower <= upper``.

    ``ring`` is ``None`` for the integer line, or the number of sites of a
    ring labelled ``-(N // 2) .. N - N // 2 - 1``.
    """

    def __init__(self, rng: ReplicaKey, lam1: float, lam2: float, ring: int | None = None):
        if lam1 < 0 or lam2 < lam1:
            raise ValueError(f"need 0 <= lam1 <= lam2, got {lam1}, {lam2}")
        self.rng = rng
        self.lam1 = lam1
        self.lam2 = lam2
        self.ring = ring
        self.kinds = [k for k in ClockKind if k.rate(lam1, lam2) > 0]
        self._streams: dict[tuple[int, ClockKind], ClockStream] = {}

    def wrap(self, x: int) -> int:
        if self.ring is None:
            return x
        n = self.ring
        return (x + n // 2) % n - n // 2

    def stream(self, site: int, kind: ClockKind) -> ClockStream:
        s = self._streams.get((site, kind))
        if s is None:
            s = ClockStream.for_site(self.rng, site, kind, kind.rate(self.lam1, self.lam2))
            self._streams[(site, kind)] = s
        return s

    def run(self, lower: Configuration, upper: Configuration, horizon: float) -> CoupledTrajectory:
        lower = Configuration(self.wrap(x) for x in lower)
        upper = Configuration(self.wrap(x) for x in upper)
        if not lower.issubset(upper):
            raise ValueError("initial configurations are not nested")
        traj = CoupledTrajectory(lower, upper, horizon, 0.0)
        queue: list[tuple[float, int, int, int]] = []
        pending: dict[tuple[int, ClockKind], int] = {}

        def active(x: int) -> bool:
            return x in upper or self.wrap(x - 1) in upper or self.wrap(x + 1) in upper

        def activate(x: int, now: float) -> None:
            for kind in self.kinds:
                if (x, kind) in pending:
                    continue
                s = self.stream(x, kind)
                k = s.first_index_after(now)
                pending[(x, kind)] = k
                heapq.heappush(queue, (s.time(k), x, int(kind), k))

        for x in upper:
            for y in (x, self.wrap(x - 1), self.wrap(x + 1)):
                activate(y, 0.0)

        while queue and upper:
            now, x, kind_i, k = heapq.heappop(queue)
            kind = ClockKind(kind_i)
            if now > horizon:
                break
            del pending[(x, kind)]
            if not active(x):
                continue  # re-armed on activation
            traj.time = now
            traj.events += 1
            changed = self._apply(lower, upper, x, kind)
            # (x, kind) keeps ticking while x stays active
            if active(x):
                s = self.stream(x, kind)
                pending[(x, kind)] = k + 1
                heapq.heappush(queue, (s.time(k + 1), x, kind_i, k + 1))
            if changed is not None:
                if changed in lower and changed not in upper:
                    traj.violations += 1
                    raise CouplingViolation(f"site {changed} in lower but not upper at t={now}")
                for y in (changed, self.wrap(changed - 1), self.wrap(changed + 1)):
                    if active(y):
                        activate(y, now)
        if upper:
            traj.time = horizon
        return traj

    def _apply(self, lower: Configuration, upper: Configuration, x: int, kind: ClockKind) -> int | None:
        if kind is ClockKind.DEATH:
            if x in upper:
                upper.discard(x)
                lower.discard(x)
                return x
            return None
        y = self.wrap(x + kind.step)
        changed = None
        targets = (upper,) if kind.extra else (lower, upper)
        for conf in targets:
            # no-op unless the source is infected and the target is healthy
            if x in conf and y not in conf:
                conf.add(y)
                changed = y
        return changed
