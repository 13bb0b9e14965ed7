"""Domain types and closed-form helpers shared by every other module."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

from scipy.optimize import bisect

# coordinates stay well inside this range at any desk-scale horizon
COORD_MIN = -(2**63)
COORD_MAX = 2**63 - 1

THEOREM1_MIN_DENSITY = 2.0 / 3.0


class ValidationError(ValueError):
    """Raised when parameters violate a documented precondition."""


class Configuration:
    """Finite set of infected sites of the line (or ring).

    Stored as a hash set with a cached bounding interval.  Instances are
    single-writer: mutate from one place, hand out copies otherwise.
    """

    __slots__ = ("_sites", "_lo", "_hi")

    def __init__(self, sites: Iterable[int] = ()) -> None:
        self._sites: set[int] = set()
        self._lo: int | None = None
        self._hi: int | None = None
        for x in sites:
            self.add(x)

    def add(self, x: int) -> None:
        x = int(x)
        if not COORD_MIN <= x <= COORD_MAX:
            raise OverflowError(f"coordinate {x} outside the 64-bit range")
        self._sites.add(x)
        if self._lo is None or x < self._lo:
            self._lo = x
        if self._hi is None or x > self._hi:
            self._hi = x

    def discard(self, x: int) -> None:
        if x not in self._sites:
            return
        self._sites.remove(x)
        if not self._sites:
            self._lo = self._hi = None
        elif x == self._lo or x == self._hi:
            self._lo = min(self._sites)
            self._hi = max(self._sites)

    def __contains__(self, x: object) -> bool:
        return x in self._sites

    def __len__(self) -> int:
        return len(self._sites)

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self._sites))

    def __bool__(self) -> bool:
        return bool(self._sites)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Configuration):
            return self._sites == other._sites
        if isinstance(other, (set, frozenset)):
            return self._sites == other
        return NotImplemented

    __hash__ = None  # mutable

    def __repr__(self) -> str:
        return f"Configuration({sorted(self._sites)})"

    @property
    def bounds(self) -> tuple[int, int] | None:
        """Smallest and largest infected site, or ``None`` when empty."""
        if self._lo is None:
            return None
        return self._lo, self._hi

    def issubset(self, other: Configuration) -> bool:
        return self._sites <= other._sites

    def symmetric_difference(self, other: Configuration) -> set[int]:
        return self._sites ^ other._sites

    def count_in(self, sites: Iterable[int]) -> int:
        """Number of infected sites among ``sites``."""
        return sum(1 for x in sites if x in self._sites)

    def copy(self) -> Configuration:
        c = Configuration()
        c._sites = set(self._sites)
        c._lo, c._hi = self._lo, self._hi
        return c

    def frozen(self) -> frozenset[int]:
        return frozenset(self._sites)


@dataclass(frozen=True)
class WindowLambdaR:
    """The two-site window ``{-r, r}`` holding the random initial marks."""

    r: int

    def __post_init__(self) -> None:
        if int(self.r) != self.r or self.r < 1:
            raise ValidationError(f"window half-position must be an integer >= 1, got {self.r}")

    @property
    def sites(self) -> tuple[int, int]:
        return (-self.r, self.r)


@dataclass(frozen=True)
class ModelParams:
    """Infection rate, initial densities, window position and horizon."""

    lam: float
    p: float
    q: float
    r: int
    t: float

    def __post_init__(self) -> None:
        if not self.lam >= 0:
            raise ValidationError(f"infection rate must be >= 0, got {self.lam}")
        check_densities(self.p, self.q)
        WindowLambdaR(self.r)
        if not self.t > 0:
            raise ValidationError(f"time horizon must be positive, got {self.t}")

    @property
    def window(self) -> WindowLambdaR:
        return WindowLambdaR(self.r)

    def with_lambda(self, lam: float) -> ModelParams:
        return ModelParams(lam, self.p, self.q, self.r, self.t)


def check_densities(p: float, q: float) -> None:
    if not (0 < p < 1 and 0 < q < 1):
        raise ValidationError(f"densities must lie in (0, 1), got p={p}, q={q}")
    if not p < q:
        raise ValidationError(f"need p < q, got p={p}, q={q}")


def check_theorem1(p: float, q: float) -> None:
    """The density regime in which the sign reversal of Delta is guaranteed."""
    check_densities(p, q)
    if not p > THEOREM1_MIN_DENSITY:
        raise ValidationError(f"theorem1 preset needs q > p > 2/3, got p={p}, q={q}")


def f_sensitivity(x: int, p: float, q: float) -> float:
    """``(1 - p)**x - (1 - q)**x``: the chance that exactly the denser of two
    nested Bernoulli marks hits a set of ``x`` sites."""
    check_densities(p, q)
    if x < 0 or int(x) != x:
        raise ValidationError(f"x must be a non-negative integer, got {x}")
    return (1.0 - p) ** x - (1.0 - q) ** x


def f_table(p: float, q: float, size: int = 3) -> list[float]:
    return [f_sensitivity(x, p, q) for x in range(size)]


def imp_margin(epsilon: float, delta: float) -> float:
    """Margin of the large-rate inequality; positive means it holds at ``(epsilon, delta)``.

    ``epsilon = 2 - p - q`` and ``1 - delta`` is a lower bound on the survival
    probability at both rates.
    """
    if not 0 < epsilon < 2.0 / 3.0:
        raise ValidationError(f"epsilon must lie in (0, 2/3), got {epsilon}")
    if not 0 <= delta < 1:
        raise ValidationError(f"delta must lie in [0, 1), got {delta}")
    u = 1.0 - delta
    return 2 * (1 - epsilon) * u * u - epsilon * u * delta - 4 * delta - epsilon * u * u


def imp_threshold(epsilon: float, xtol: float = 1e-14) -> float:
    """Largest ``delta`` in ``[0, 1)`` with ``imp_margin(epsilon, delta) >= 0``.

    The margin is strictly decreasing in ``delta``, positive at 0 and tends to
    -4 as ``delta -> 1``, so the root is unique and bisection finds it.
    """
    imp_margin(epsilon, 0.0)
    hi = math.nextafter(1.0, 0.0)
    root = bisect(lambda d: imp_margin(epsilon, d), 0.0, hi, xtol=xtol)
    while root > 0.0 and imp_margin(epsilon, root) < 0:
        root = math.nextafter(root, 0.0)
    return root
