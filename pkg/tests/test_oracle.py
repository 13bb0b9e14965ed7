import math

import numpy as np
import pytest

from contactsens.lattice import ValidationError, WindowLambdaR
from contactsens.oracle import (
    ConvergenceError,
    CoupledRingChain,
    RingChain,
    check_duality,
    escape_probability,
    exact_conditional_joint,
    exact_disagreement,
    exact_occupation,
    exact_sensitivity,
    fixture_records,
    transient_dense,
    transient_distribution,
    uniformize,
)


@pytest.mark.parametrize("N,lam,boundary", [(2, 1.0, "ring"), (6, 0.7, "ring"),
                                            (9, 2.5, "segment"), (12, 1.3, "ring")])
def test_generator_structure(N, lam, boundary):
    ch = RingChain(N, lam, boundary)
    Q = ch.generator
    assert np.abs(np.asarray(Q.sum(axis=1)).ravel()).max() < 1e-12
    coo = Q.tocoo()
    mask = coo.row != coo.col
    assert (coo.data[mask] > 0).all()
    assert all(bin(r ^ c).count("1") == 1 for r, c in zip(coo.row[mask], coo.col[mask]))
    assert Q[0].nnz == 0


def test_rates_mirror_flip_rates():
    ch = RingChain(5, 2.0)
    s = ch.encode([-1, 1])
    Q = ch.generator
    assert Q[s, ch.encode([1])] == 1.0
    assert Q[s, ch.encode([-1, 0, 1])] == 4.0  # two infected neighbours
    assert Q[s, ch.encode([-2, -1, 1])] == 2.0
    assert -Q[s, s] == pytest.approx(2 + 4 + 2 + 2)


def test_rejects_large_rings():
    with pytest.raises(ValidationError):
        RingChain(15, 1.0)
    with pytest.raises(ValidationError):
        RingChain(1, 1.0)


def test_time_zero_is_point_mass():
    ch = RingChain(8, 1.0)
    d = transient_distribution(ch, [0, 2], 0.0)
    assert d.probs[ch.encode([0, 2])] == 1.0 and d.probs.sum() == 1.0


def test_pure_death():
    ch = RingChain(6, 0.0)
    d = transient_distribution(ch, [0], 1.7)
    assert d.probs[ch.encode([0])] == pytest.approx(math.exp(-1.7), abs=1e-13)
    assert d.probs[0] == pytest.approx(1 - math.exp(-1.7), abs=1e-13)
    assert d.probs.sum() - d.probs[0] - d.probs[ch.encode([0])] == pytest.approx(0, abs=1e-15)


@pytest.mark.parametrize("N", [4, 6, 8])
def test_agrees_with_matrix_exponential(N):
    rng = np.random.default_rng(N)
    for _ in range(4):
        lam = rng.uniform(0.3, 4.0)
        t = rng.uniform(0.2, 3.0)
        ch = RingChain(N, lam)
        start = [0, int(rng.integers(-N // 2, N - N // 2))]
        a = transient_distribution(ch, start, t)
        b = transient_dense(ch, start, t)
        assert np.abs(a.probs - b.probs).max() < 1e-9
        assert a.residual < 1e-12


def test_fixture_file_is_current(oracle_fixtures):
    for rec in fixture_records():
        stored = oracle_fixtures[rec["name"]]
        assert stored["value"] == rec["value"]
        assert rec["residual"] < 1e-9


def test_term_cap():
    ch = RingChain(6, 1.0)
    with pytest.raises(ConvergenceError):
        transient_distribution(ch, [0], 1000.0, term_cap=100)


def test_duality_trivial_cases():
    ch = RingChain(8, 1.7)
    assert check_duality(ch, [0, 1], [3], 0.0) == 0.0
    assert check_duality(ch, [0, 1], [0, 1], 2.0) == 0.0


def test_duality_segment():
    ch = RingChain(9, 1.1, "segment")
    assert check_duality(ch, [-4, 1], [2], 1.5) < 1e-8


def test_sensitivity_trivial():
    assert exact_sensitivity(RingChain(8, 0.0), 0.7, 0.9, WindowLambdaR(2), 3.0) == 0.0
    with pytest.raises(ValidationError):
        exact_sensitivity(RingChain(8, 1.0), 0.7, 0.7, WindowLambdaR(2), 3.0)
    with pytest.raises(ValidationError):
        exact_sensitivity(RingChain(8, 1.0), 0.7, 0.9, WindowLambdaR(4), 3.0)


def test_occupation_monotone_in_rate():
    vals = [exact_occupation(RingChain(10, lam), [0], 2.0) for lam in np.linspace(0, 4, 9)]
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


def test_disagreement_is_nonnegative():
    v = exact_disagreement(RingChain(10, 1.0), [-2], [-2, 2], 3.0)
    assert v > 0


def test_escape_probability():
    assert escape_probability(10, 0.0, 5.0) < 1e-12
    small = escape_probability(14, 0.5, 1.0)
    big = escape_probability(14, 0.5, 3.0)
    assert 0 < small < big < 1
    assert escape_probability(6, 1.0, 0.0) == 0.0


def test_coupled_chain_marginals():
    N, l1, l2, t = 7, 0.8, 2.0, 1.2
    cc = CoupledRingChain(N, l1, l2)
    probs = cc.transient([0], [0], t)
    d = cc.digits()
    for site in (-2, 0, 3):
        dig = d[cc.digit(site)]
        assert probs[dig == 2].sum() == pytest.approx(exact_occupation(RingChain(N, l1), [0], t, site), abs=1e-10)
        assert probs[dig >= 1].sum() == pytest.approx(exact_occupation(RingChain(N, l2), [0], t, site), abs=1e-10)
    assert np.abs(np.asarray(cc.generator.sum(axis=1)).ravel()).max() < 1e-12


def test_coupled_chain_equal_rates_never_split():
    cc = CoupledRingChain(6, 1.5, 1.5)
    probs = cc.transient([0, 1], [0, 1], 2.0)
    split = (cc.digits() == 1).any(axis=0)
    assert probs[split].sum() < 1e-14


def test_exact_conditional_dependence():
    # the events are positively correlated given lower(-r) = 0
    j = exact_conditional_joint(8, 1.0, 1.5, 2, 2.0)
    assert j.covariance > 1e-3
    j0 = exact_conditional_joint(8, 1.0, 1.0, 2, 2.0)
    assert j0.p_b == 0.0 and j0.covariance == 0.0


def test_uniformize_rejects_negative_time():
    ch = RingChain(4, 1.0)
    with pytest.raises(ValidationError):
        uniformize(ch.generator, np.eye(16)[0], -1.0)
