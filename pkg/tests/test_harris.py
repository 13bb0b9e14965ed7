import math

import numpy as np
import pytest

from contactsens.harris import ClockKind, ClockStream, CouplingViolation, HarrisEngine
from contactsens.lattice import Configuration
from contactsens.rng import ReplicaKey


def test_clock_stream_is_reproducible_and_increasing():
    key = ReplicaKey(3, 7)
    a = ClockStream.for_site(key, -4, ClockKind.DEATH, 1.0)
    b = ClockStream.for_site(key, -4, ClockKind.DEATH, 1.0)
    ta = [a.time(k) for k in range(50)]
    assert ta == [b.time(k) for k in range(49, -1, -1)][::-1]
    assert all(x < y for x, y in zip(ta, ta[1:]))
    assert a.first_index_after(ta[10]) == 11


def test_clock_stream_rate():
    s = ClockStream.for_site(ReplicaKey(1), 0, ClockKind.INFECT_RIGHT, 2.5)
    n = 20_000
    mean_gap = s.time(n - 1) / n
    assert abs(mean_gap - 1 / 2.5) < 4 * (1 / 2.5) / math.sqrt(n)


def test_silent_clock():
    s = ClockStream.for_site(ReplicaKey(1), 0, ClockKind.EXTRA_LEFT, 0.0)
    assert s.time(0) == math.inf


def test_clock_kind_rates():
    assert [k.rate(1.5, 4.0) for k in ClockKind] == [1.0, 1.5, 1.5, 2.5, 2.5]
    assert [k.step for k in ClockKind] == [0, 1, -1, 1, -1]


def run(A, B, lam1, lam2, t, seed, rep=0, ring=None):
    eng = HarrisEngine(ReplicaKey(seed, rep), lam1, lam2, ring)
    return eng.run(Configuration(A), Configuration(B), t)


def test_empty_is_absorbing():
    tr = run([], [], 2.0, 2.0, 5.0, 1)
    assert not tr.upper and tr.events == 0


def test_zero_horizon():
    tr = run([0, 3], [0, 3], 2.0, 2.0, 0.0, 1)
    assert tr.upper == {0, 3}


def test_equal_rates_give_identical_copies():
    for rep in range(30):
        tr = run([0], [0], 1.7, 1.7, 4.0, 2, rep)
        assert tr.lower == tr.upper


def test_domination_holds_pathwise():
    for rep in range(100):
        tr = run([0], [0], 0.5, 4.0, 5.0, 3, rep)
        assert tr.violations == 0
        assert tr.lower.issubset(tr.upper)


def test_additivity_under_shared_clocks():
    for rep in range(60):
        small = run([0], [0], 1.5, 1.5, 3.0, 4, rep).upper
        big = run([0, 2], [0, 2], 1.5, 1.5, 3.0, 4, rep).upper
        assert small.issubset(big)


def test_initial_coupling_is_monotone():
    for rep in range(60):
        tr = run([-2], [-2, 2], 1.0, 1.0, 3.0, 5, rep)
        assert tr.lower.issubset(tr.upper)
        alone = run([-2], [-2], 1.0, 1.0, 3.0, 5, rep)
        assert alone.upper == tr.lower


def test_pure_death_lifetime():
    n = 3000
    alive = sum(bool(run([0], [0], 0.0, 0.0, 1.0, 6, rep).upper) for rep in range(n))
    p = math.exp(-1.0)
    assert abs(alive / n - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_determinism():
    a = run([0], [0], 1.0, 2.0, 3.0, 9, 4)
    b = run([0], [0], 1.0, 2.0, 3.0, 9, 4)
    assert a.upper == b.upper and a.lower == b.lower and a.events == b.events


def test_ring_wraps():
    tr = run([0], [0], 3.0, 3.0, 4.0, 1, 0, ring=6)
    assert all(-3 <= x <= 2 for x in tr.upper)


def test_rejects_non_nested():
    with pytest.raises(ValueError):
        run([1], [0], 1.0, 1.0, 1.0, 1)


def test_violation_is_reported(monkeypatch):
    eng = HarrisEngine(ReplicaKey(1), 1.0, 2.0)
    orig = eng._apply

    def broken(lower, upper, x, kind):
        changed = orig(lower, upper, x, kind)
        if changed is not None and kind is not ClockKind.DEATH and changed in upper:
            upper.discard(changed)
            lower.add(changed)
        return changed

    monkeypatch.setattr(eng, "_apply", broken)
    with pytest.raises(CouplingViolation):
        eng.run(Configuration([0]), Configuration([0]), 5.0)


def test_matches_exact_law_on_small_ring():
    from contactsens.oracle import RingChain, exact_occupation

    n = 4000
    occ = np.array([0 in run([0], [0], 1.0, 1.0, 1.5, 11, rep, ring=10).upper
                    for rep in range(n)])
    exact = exact_occupation(RingChain(10, 1.0), [0], 1.5)
    assert abs(occ.mean() - exact) < 3.5 * math.sqrt(exact * (1 - exact) / n)
