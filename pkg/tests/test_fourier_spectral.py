import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toralgroups.fourier_spectral import (
    build_truncated_operator, dual_act, kesten_crosscheck, kesten_reference, operator_norm_estimate,
    random_rayleigh_quotients,
)
from toralgroups.group_enum import GroupMeasure, enumerate_ball
from toralgroups.matrix_core import GroupElement, evaluate_word, sanov

A = GroupElement.of([1, 2], [0, 1])
B_ = GroupElement.of([1, 0], [2, 1])
SRW = GroupMeasure.symmetric_generators(sanov())


def dense_oracle(mu, B):
    """Full-window compression built entry by entry with dual_act."""
    vecs = [(x, y) for x in range(-B, B + 1) for y in range(-B, B + 1) if (x, y) != (0, 0)]
    idx = {v: i for i, v in enumerate(vecs)}
    M = np.zeros((len(vecs), len(vecs)))
    for g, w in zip(mu.atoms, mu.weights):
        for v in vecs:
            c = dual_act(g, v)
            if c in idx:
                M[idx[v], idx[c]] += float(w)
    return M


def test_dual_act_examples():
    assert dual_act(A, (1, 0)) == (1, 2)
    assert dual_act(A, (0, 1)) == (0, 1)
    with pytest.raises(ValueError):
        dual_act(A, (0, 0))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from([1, -1, 2, -2]), max_size=8), st.tuples(st.integers(-50, 50), st.integers(-50, 50)))
def test_dual_act_inverse(w, b):
    if b == (0, 0):
        return
    g = evaluate_word(tuple(w), [A, B_])
    assert dual_act(g.inverse(), dual_act(g, b)) == b


@pytest.mark.parametrize("B", [3, 6])
def test_full_operator_matches_dense_oracle(B):
    op = build_truncated_operator(SRW, B, reduce="full")
    M = dense_oracle(SRW, B)
    vecs = [tuple(v) for v in op.vectors]
    order = [vecs.index((x, y)) for x in range(-B, B + 1) for y in range(-B, B + 1) if (x, y) != (0, 0)]
    A_ = op.matrix.toarray()[np.ix_(order, order)]
    assert np.array_equal(A_, M)


def test_reductions_agree_with_dense_eigenvalue():
    B = 12
    top = float(np.linalg.eigvalsh(dense_oracle(SRW, B)).max())
    for red in ("full", "primitive", "even"):
        op = build_truncated_operator(SRW, B, reduce=red)
        est = operator_norm_estimate(op, tol=1e-12, seed=1)
        assert est.converged
        assert est.value == pytest.approx(top, abs=1e-10)


def test_self_adjoint_and_norm_bound():
    for mu in (SRW, enumerate_ball(sanov(), 6).shell(6, 2)):
        for red in ("full", "even"):
            op = build_truncated_operator(mu, 40, reduce=red)
            assert op.is_self_adjoint()
            assert op.norm_upper_bound() <= 1 + 1e-15
            M = op.matrix
            assert abs(M - M.T).max() < 1e-15
            assert (M.data > 0).all()


def test_identity_and_parabolic_measures():
    delta_e = GroupMeasure([GroupElement.identity()], [Fraction(1)])
    op = build_truncated_operator(delta_e, 10)
    est = operator_norm_estimate(op)
    assert est.value == pytest.approx(1.0, abs=1e-12) and est.iterations == 1
    P = GroupElement.of([1, 1], [0, 1])
    pair = GroupMeasure.uniform([P, P.inverse()])
    for B in (1, 5, 20):
        est = operator_norm_estimate(build_truncated_operator(pair, B), tol=1e-10)
        assert est.value == pytest.approx(1.0, abs=1e-8)


def test_empty_table_gives_zero():
    g = GroupElement.of([5, 2], [2, 1])
    mu = GroupMeasure.uniform([g, g.inverse()])
    op = build_truncated_operator(mu, 1)
    assert op.matrix.nnz == 0
    assert operator_norm_estimate(op).value == 0.0
    assert op.dropped_mass() == pytest.approx(1.0)


def test_srw_window_100_between_bounds():
    est = operator_norm_estimate(build_truncated_operator(SRW, 100))
    assert math.sqrt(3) / 2 - 0.05 < est.value < 1


def test_window_monotonicity_small():
    vals = [operator_norm_estimate(build_truncated_operator(SRW, B), tol=1e-10).value
            for B in (10, 20, 40, 80)]
    assert all(x <= y + 1e-10 for x, y in zip(vals, vals[1:]))


def test_estimate_dominates_random_rayleigh_quotients():
    op = build_truncated_operator(SRW, 60)
    est = operator_norm_estimate(op, seed=4)
    rq = random_rayleigh_quotients(op, count=10, seed=9)
    assert all(est.value >= q for q in rq)
    # the estimate is itself a Rayleigh quotient, hence never above the dense top eigenvalue
    assert 0 <= est.value <= 1


def test_power_and_lanczos_agree():
    op = build_truncated_operator(SRW, 30)
    a = operator_norm_estimate(op, tol=1e-10, method="lanczos")
    b = operator_norm_estimate(op, tol=1e-6, method="power", max_iter=20000)
    assert abs(a.value - b.value) < 1e-5
    assert a.iterations < b.iterations


def test_non_convergence_is_flagged():
    op = build_truncated_operator(SRW, 80)
    est = operator_norm_estimate(op, tol=1e-14, max_iter=3, method="power")
    assert not est.converged
    lo, hi = est.interval
    assert lo == est.value and hi >= lo


def test_kesten_reference_and_small_crosscheck():
    assert kesten_reference(SRW) == pytest.approx(math.sqrt(3) / 2)
    rep = kesten_crosscheck(SRW, 50, 4)
    assert rep["self_adjoint"]
    assert rep["r"] == sorted(rep["r"])
    assert rep["lattice"]["value"] <= 1
