"""Exact transient laws of the contact process on small rings (and segments).

Configurations are ``N``-bit integers; bit ``(x + N // 2) % N`` holds site
``x`` so sites are labelled ``-(N // 2) .. N - N // 2 - 1`` and ``0``, ``±r``
keep their meaning on the line.  Transient distributions come from
uniformization; :func:`transient_dense` is an independent second method based
on the matrix exponential.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm
from scipy.sparse.linalg import expm_multiply
from scipy.stats import poisson

from .lattice import Configuration, ValidationError, WindowLambdaR, f_table

MAX_SITES = 14
MAX_COUPLED_SITES = 10
TAIL = 1e-13
TERM_CAP = 200_000

FIXTURE_VERSION = 1


class ConvergenceError(RuntimeError):
    """Uniformization would need more terms than the configured cap."""


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.uint32)
    a = a - ((a >> 1) & 0x55555555)
    a = (a & 0x33333333) + ((a >> 2) & 0x33333333)
    a = (a + (a >> 4)) & 0x0F0F0F0F
    return ((a * 0x01010101) & 0xFFFFFFFF) >> 24


@dataclass
class RingChain:
    """Generator of the contact process on ``N`` sites.

    ``boundary="ring"`` joins the two ends; ``"segment"`` leaves them closed
    (the end sites have one neighbour).
    """

    N: int
    lam: float
    boundary: str = "ring"
    generator: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 2 <= self.N <= MAX_SITES:
            raise ValidationError(f"N must lie in [2, {MAX_SITES}], got {self.N}")
        if not self.lam >= 0:
            raise ValidationError(f"infection rate must be >= 0, got {self.lam}")
        if self.boundary not in ("ring", "segment"):
            raise ValidationError(f"unknown boundary {self.boundary!r}")
        self.generator = self._build()

    @property
    def size(self) -> int:
        return 1 << self.N

    def bit(self, x: int) -> int:
        n = self.N
        b = x + n // 2
        if self.boundary == "ring":
            return b % n
        if not 0 <= b < n:
            raise ValidationError(f"site {x} outside the segment")
        return b

    def encode(self, conf) -> int:
        s = 0
        for x in conf:
            s |= 1 << self.bit(x)
        return s

    def decode(self, s: int) -> Configuration:
        return Configuration(b - self.N // 2 for b in range(self.N) if s >> b & 1)

    def mask(self, sites) -> int:
        return self.encode(sites)

    def neighbours(self, b: int) -> list[int]:
        n = self.N
        if self.boundary == "ring":
            return sorted({(b - 1) % n, (b + 1) % n} - {b})
        return [c for c in (b - 1, b + 1) if 0 <= c < n]

    def _build(self) -> sp.csr_matrix:
        n, lam = self.N, self.lam
        states = np.arange(1 << n, dtype=np.int64)
        rows, cols, vals = [], [], []
        for b in range(n):
            occ = (states >> b) & 1
            nb = np.zeros_like(states)
            for c in self.neighbours(b):
                nb += (states >> c) & 1
            dead = occ == 1
            rows.append(states[dead])
            cols.append(states[dead] ^ (1 << b))
            vals.append(np.ones(int(dead.sum())))
            born = (occ == 0) & (nb > 0)
            if lam > 0:
                rows.append(states[born])
                cols.append(states[born] | (1 << b))
                vals.append(lam * nb[born].astype(np.float64))
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
        off = sp.csr_matrix((v, (r, c)), shape=(1 << n, 1 << n))
        exit_rate = np.asarray(off.sum(axis=1)).ravel()
        return (off - sp.diags(exit_rate)).tocsr()


@dataclass(frozen=True)
class DistributionVector:
    """Probabilities over the ``2**N`` configurations of ``chain``."""

    chain: RingChain
    probs: np.ndarray
    terms: int = 0
    residual: float = 0.0

    def prob_hits(self, sites) -> float:
        """``P(eta ∩ sites != ∅)``."""
        m = self.chain.mask(sites)
        idx = np.arange(self.probs.size)
        return float(self.probs[(idx & m) != 0].sum())

    def occupation(self, x: int) -> float:
        return self.prob_hits([x])

    def count_law(self, sites) -> np.ndarray:
        """Law of ``|eta ∩ sites|``."""
        m = self.chain.mask(sites)
        k = _popcount(np.arange(self.probs.size) & m)
        return np.bincount(k, weights=self.probs, minlength=len(set(sites)) + 1)

    def survival(self) -> float:
        return float(self.probs[1:].sum())


def _point_mass(chain: RingChain, initial) -> np.ndarray:
    v = np.zeros(chain.size)
    v[chain.encode(initial)] = 1.0
    return v


def uniformize(Q: sp.csr_matrix, v0: np.ndarray, t: float, *, tail: float = TAIL,
               term_cap: int = TERM_CAP) -> tuple[np.ndarray, int]:
    """``v0 @ expm(t Q)`` for a (sub)generator ``Q`` by uniformization.

    The Poisson series is cut where its remaining mass drops below ``tail``.
    """
    if t < 0:
        raise ValidationError(f"time must be >= 0, got {t}")
    if t == 0:
        return v0.copy(), 0
    rate = float(-Q.diagonal().min())
    if rate <= 0:
        return v0.copy(), 0
    mu = rate * t
    K = int(poisson.isf(tail, mu)) + 1
    if K > term_cap:
        raise ConvergenceError(f"uniformization needs {K} terms (cap {term_cap})")
    QT = Q.T.tocsr()
    weights = poisson.pmf(np.arange(K + 1), mu)
    v = v0.astype(np.float64).copy()
    out = weights[0] * v
    for k in range(1, K + 1):
        v = v + (QT @ v) / rate
        out += weights[k] * v
    return out, K


def transient_distribution(chain: RingChain, initial, t: float, *, tail: float = TAIL,
                           term_cap: int = TERM_CAP) -> DistributionVector:
    """Law at time ``t`` of the chain started from the configuration ``initial``."""
    probs, K = uniformize(chain.generator, _point_mass(chain, initial), t, tail=tail,
                          term_cap=term_cap)
    probs = np.clip(probs, 0.0, None)
    return DistributionVector(chain, probs, K, abs(1.0 - probs.sum()))


def transient_dense(chain: RingChain, initial, t: float) -> DistributionVector:
    """Second method: scaling-and-squaring ``expm`` (``N <= 10``) or the
    truncated-Taylor ``expm_multiply`` for larger rings."""
    v0 = _point_mass(chain, initial)
    if chain.N <= 10:
        probs = v0 @ expm(t * chain.generator.toarray())
    else:
        probs = expm_multiply(t * chain.generator.T.tocsc(), v0)
    return DistributionVector(chain, np.asarray(probs), 0, abs(1.0 - probs.sum()))


def check_duality(chain: RingChain, xi, A, t: float) -> float:
    """``|P(eta^xi_t ∩ A != ∅) - P(eta^A_t ∩ xi != ∅)|``."""
    xi, A = list(xi), list(A)
    if not xi or not A:
        raise ValidationError("xi and A must be non-empty")
    lhs = transient_distribution(chain, xi, t).prob_hits(A)
    rhs = transient_distribution(chain, A, t).prob_hits(xi)
    return abs(lhs - rhs)


def _check_window(chain: RingChain, window: WindowLambdaR) -> None:
    if not window.r < chain.N / 2:
        raise ValidationError(f"window +-{window.r} does not fit a ring of {chain.N} sites")


def exact_sensitivity(chain: RingChain, p: float, q: float, window: WindowLambdaR,
                      t: float) -> float:
    """``E f(|eta^{0}_t ∩ window|)`` under the exact law."""
    _check_window(chain, window)
    law = transient_distribution(chain, [0], t).count_law(window.sites)
    return float(np.dot(law, f_table(p, q, 3)))


def exact_occupation(chain: RingChain, initial, t: float, site: int = 0) -> float:
    return transient_distribution(chain, initial, t).occupation(site)


def exact_disagreement(chain: RingChain, xi_lower, xi_upper, t: float, site: int = 0) -> float:
    """``P(lower_t(site) = 0, upper_t(site) = 1)`` for the monotone pair; by
    domination this is the difference of the two marginal occupations."""
    return exact_occupation(chain, xi_upper, t, site) - exact_occupation(chain, xi_lower, t, site)


def escape_probability(N: int, lam: float, t: float, start=(0,)) -> float:
    """Probability that the process on the line from ``start`` infects a site
    outside the open arc ``-(N // 2) + 1 .. N - N // 2 - 2`` by time ``t``.

    Until that happens the line and the ``N``-ring processes built from the
    same clocks coincide, so this bounds the ring-vs-line discrepancy of any
    event at time ``t``.
    """
    if N < 4:
        raise ValidationError("need N >= 4")
    inner = RingChain(N - 2, lam, "segment")
    # inner site x is line site x + shift
    shift = (-(N // 2) + 1) - (-((N - 2) // 2))
    states = np.arange(inner.size, dtype=np.int64)
    kill = lam * (((states >> 0) & 1) + ((states >> (N - 3)) & 1))
    Q = (inner.generator - sp.diags(kill.astype(np.float64))).tocsr()
    v0 = np.zeros(inner.size)
    v0[inner.encode([x - shift for x in start])] = 1.0
    v, _ = uniformize(Q, v0, t)
    return float(max(0.0, 1.0 - v.sum()))


# rate-coupled pair --------------------------------------------------------


@dataclass
class CoupledRingChain:
    """Exact generator of the rate-coupled pair ``lower <= upper`` on a ring.

    Site states are 0 (healthy in both), 1 (infected in the upper copy only)
    and 2 (infected in both); configurations are base-3 integers with digit
    ``(x + N // 2) % N`` for site ``x``.
    """

    N: int
    lam1: float
    lam2: float
    generator: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 3 <= self.N <= MAX_COUPLED_SITES:
            raise ValidationError(f"N must lie in [3, {MAX_COUPLED_SITES}], got {self.N}")
        if not 0 <= self.lam1 <= self.lam2:
            raise ValidationError(f"need 0 <= lam1 <= lam2, got {self.lam1}, {self.lam2}")
        self.generator = self._build()

    @property
    def size(self) -> int:
        return 3 ** self.N

    def digit(self, x: int) -> int:
        return (x + self.N // 2) % self.N

    def encode(self, lower, upper) -> int:
        lower, upper = set(lower), set(upper)
        if not lower <= upper:
            raise ValidationError("lower must be contained in upper")
        s = 0
        for x in upper:
            s += (2 if x in lower else 1) * 3 ** self.digit(x)
        return s

    def digits(self) -> np.ndarray:
        states = np.arange(self.size, dtype=np.int64)
        d = np.empty((self.N, self.size), dtype=np.int64)
        for b in range(self.N):
            d[b] = (states // 3 ** b) % 3
        return d

    def _build(self) -> sp.csr_matrix:
        n, l1, l2 = self.N, self.lam1, self.lam2
        d = self.digits()
        states = np.arange(self.size, dtype=np.int64)
        rows, cols, vals = [], [], []

        def add(mask, delta, rate):
            rate = np.broadcast_to(rate, mask.shape)
            keep = mask & (rate > 0)
            rows.append(states[keep])
            cols.append(states[keep] + delta)
            vals.append(rate[keep].astype(np.float64))

        for b in range(n):
            w = 3 ** b
            n1 = (d[(b - 1) % n] == 1).astype(np.int64) + (d[(b + 1) % n] == 1)
            n2 = (d[(b - 1) % n] == 2).astype(np.int64) + (d[(b + 1) % n] == 2)
            own = d[b]
            add(own == 1, -w, np.ones(self.size))
            add(own == 2, -2 * w, np.ones(self.size))
            add(own == 0, w, l2 * n1 + (l2 - l1) * n2)
            add(own == 0, 2 * w, l1 * n2)
            add(own == 1, w, l1 * n2)
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
        off = sp.csr_matrix((v, (r, c)), shape=(self.size, self.size))
        exit_rate = np.asarray(off.sum(axis=1)).ravel()
        return (off - sp.diags(exit_rate)).tocsr()

    def transient(self, lower, upper, t: float) -> np.ndarray:
        v0 = np.zeros(self.size)
        v0[self.encode(lower, upper)] = 1.0
        probs, _ = uniformize(self.generator, v0, t)
        return np.clip(probs, 0.0, None)


@dataclass(frozen=True)
class ConditionalJoint:
    """Exact law of ``(lower(r), upper(-r))`` given ``lower(-r) = 0``."""

    p_condition: float
    p_a: float  # P(lower(r) = 1 | C)
    p_b: float  # P(upper(-r) = 1 | C)
    p_ab: float  # P(both | C)

    @property
    def covariance(self) -> float:
        return self.p_ab - self.p_a * self.p_b


def exact_conditional_joint(N: int, lam1: float, lam2: float, r: int, t: float) -> ConditionalJoint:
    """Exact conditional joint of the rate-coupled pair started from ``{0}``."""
    chain = CoupledRingChain(N, lam1, lam2)
    if not r < N / 2:
        raise ValidationError(f"r={r} does not fit a ring of {N} sites")
    probs = chain.transient([0], [0], t)
    d = chain.digits()
    minus, plus = d[chain.digit(-r)], d[chain.digit(r)]
    cond = minus != 2
    a = plus == 2
    b = minus == 1  # upper(-r) = 1 while lower(-r) = 0
    pc = float(probs[cond].sum())
    return ConditionalJoint(pc, float(probs[cond & a].sum()) / pc,
                            float(probs[cond & b].sum()) / pc,
                            float(probs[cond & a & b].sum()) / pc)


# fixtures -------------------------------------------------------------------


def fixture_records() -> list[dict]:
    """The exact values the test-suite pins, each with a second-method residual."""
    records = []

    def rec(name, value, check, **params):
        records.append({"name": name, **params, "value": value, "residual": abs(value - check)})

    ch = RingChain(10, 1.0)
    u = transient_distribution(ch, [0], 1.5).occupation(0)
    d = transient_dense(ch, [0], 1.5).occupation(0)
    rec("occupation", u, d, N=10, lam=1.0, t=1.5, start="0", site=0)

    ch = RingChain(12, 1.0)
    s = exact_sensitivity(ch, 0.7, 0.9, WindowLambdaR(2), 3.0)
    law = transient_dense(ch, [0], 3.0).count_law((-2, 2))
    rec("sensitivity", s, float(np.dot(law, f_table(0.7, 0.9, 3))),
        N=12, lam=1.0, p=0.7, q=0.9, r=2, t=3.0)

    v = exact_disagreement(ch, [-2], [-2, 2], 3.0)
    hi = transient_dense(ch, [-2, 2], 3.0).occupation(0)
    lo = transient_dense(ch, [-2], 3.0).occupation(0)
    rec("disagreement", v, hi - lo, N=12, lam=1.0, t=3.0, lower="-2", upper="-2;2", site=0)
    return records


def format_record(r: dict) -> str:
    return " ".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items())


def write_fixtures(path: str | Path) -> list[dict]:
    records = fixture_records()
    lines = [f"# oracle fixtures v{FIXTURE_VERSION}: key=value records, value from "
             "uniformization, residual against the matrix-exponential method"]
    lines += [format_record(r) for r in records]
    Path(path).write_text("\n".join(lines) + "\n")
    return records


def read_fixtures(path: str | Path) -> dict[str, dict]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        fields = dict(tok.split("=", 1) for tok in line.split())
        for k in ("value", "residual"):
            fields[k] = float(fields[k])
        out[fields["name"]] = fields
    return out


__all__ = [
    "ConditionalJoint", "ConvergenceError", "CoupledRingChain", "DistributionVector",
    "RingChain", "check_duality", "escape_probability", "exact_conditional_joint",
    "exact_disagreement", "exact_occupation", "exact_sensitivity", "read_fixtures",
    "transient_dense", "transient_distribution", "uniformize", "write_fixtures",
]
