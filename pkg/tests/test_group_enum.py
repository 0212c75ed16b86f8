import math
from fractions import Fraction
from math import comb

import numpy as np
import pytest

from toralgroups.errors import BudgetExceeded, FreenessViolation
from toralgroups.group_enum import (
    GroupMeasure, ShellMeasure, drift_entropy_estimate, enumerate_ball, fit_critical_exponent,
    return_prob_norm_estimate,
)
from toralgroups.matrix_core import (
    GroupElement, GroupPresentation, ball_membership, ball_threshold, free_group, sanov,
)
from toralgroups.boundary_tree import sphere


def sanov_bruteforce_counts(nmax):
    """#{g in SL2(Z): F(g) <= floor(2cosh n), g = I mod 2, a = d = 1 mod 4} for n <= nmax."""
    T = ball_threshold(nmax)
    E = int(math.isqrt(T))
    r = np.arange(-E, E + 1)
    a, b, c = np.meshgrid(r, r, r, indexing="ij")
    a, b, c = a.ravel(), b.ravel(), c.ravel()
    keep = (a % 4 == 1) & (b % 2 == 0) & (c % 2 == 0) & (a * a + b * b + c * c <= T)
    a, b, c = a[keep], b[keep], c[keep]
    num = 1 + b * c
    ok = num % a == 0
    a, b, c, num = a[ok], b[ok], c[ok], num[ok]
    d = num // a
    F = a * a + b * b + c * c + d * d
    good = d % 4 == 1
    F = F[good]
    return [int((F <= ball_threshold(n)).sum()) for n in range(nmax + 1)]


# ---------------------------------------------------------------- enumeration

def test_sanov_counts_match_bruteforce_scan():
    ball = enumerate_ball(sanov(), 8)
    oracle = sanov_bruteforce_counts(8)
    assert ball.counts == oracle
    assert oracle == [1, 1, 5, 13, 25, 73, 221, 533, 1473]


def test_engines_agree():
    a = enumerate_ball(sanov(), 8, engine="numpy")
    b = enumerate_ball(sanov(), 8, engine="python")
    assert a.counts == b.counts
    assert sorted(g.flat for g in a.elements) == sorted(g.flat for g in b.elements)


def test_free_word_ball_counts():
    ball = enumerate_ball(free_group(2, "word"), 6)
    assert ball.counts == [1 + 2 * (3**n - 1) for n in range(7)]
    assert ball.counts[2] == 17


def test_word_ball_equals_reduced_words():
    ball = enumerate_ball(free_group(2, "word"), 4)
    lengths = sorted(len(g.word) for g in ball.elements)
    assert lengths == sorted(n for n in range(5) for _ in sphere(2, n))


def test_radius_zero_is_identity():
    ball = enumerate_ball(sanov(), 0)
    assert ball.counts == [1] and ball.element(0).is_identity()


def test_ball_invariants():
    ball = enumerate_ball(sanov(), 9)
    flats = [g.flat for g in ball.elements]
    assert len(set(flats)) == len(flats)
    assert all(x <= y for x, y in zip(ball.counts, ball.counts[1:]))
    for i in range(0, len(ball), 37):
        g = ball.element(i)
        n = int(ball.level[i])
        assert ball_membership(g, n)
        assert n == 0 or not ball_membership(g, n - 1)
        assert g.word is not None and ball.presentation.evaluate(g.word).entries == g.entries


def test_freeness_violation_reports_words():
    A = GroupElement.of([1, 2], [0, 1])
    A2 = GroupElement.of([1, 4], [0, 1])
    p = GroupPresentation((A, A2), "word", True)
    with pytest.raises(FreenessViolation) as exc:
        enumerate_ball(p, 3)
    assert len(exc.value.words) == 2


def test_budget_exceeded_carries_completed_radius():
    with pytest.raises(BudgetExceeded) as exc:
        enumerate_ball(sanov(), 20, budget=2000)
    e = exc.value
    assert e.completed_radius == 8
    assert e.partial is not None and e.partial.counts[-1] == 1473


# ---------------------------------------------------------------- shells

def test_shell_examples():
    ball = enumerate_ball(free_group(2, "word"), 4)
    assert len(ball.shell(3, 1)) == 36
    whole = ball.shell(4, 4)
    assert len(whole) == ball.counts[4] - 1
    sball = enumerate_ball(sanov(), 10)
    for n in range(2, 11):
        S = sball.shell(n, 2)
        assert isinstance(S, ShellMeasure) and S.is_symmetric()
        assert sum(S.weights) == 1 and len(set(S.weights)) == 1


def test_shells_partition_ball():
    ball = enumerate_ball(sanov(), 10)
    shells, empty = ball.shells(2)
    assert empty == []
    assert sum(len(s) for s in shells) == ball.counts[10] - 1
    _, empty1 = ball.shells(1)
    assert 1 in empty1


def test_shell_measure_rejects_identity():
    with pytest.raises(ValueError):
        ShellMeasure.uniform([GroupElement.identity()])


# ---------------------------------------------------------------- growth fit

def test_fit_exact_geometric_growth():
    counts = [1] + [4 * 3 ** (n - 1) for n in range(1, 16)]
    fit = fit_critical_exponent(counts)
    assert abs(fit.delta - math.log(3)) < 1e-9
    assert fit.confidence[0] <= fit.delta <= fit.confidence[1]


def test_fit_constant_counts_and_min_points():
    assert fit_critical_exponent([7, 7, 7, 7, 7]).delta == 0
    with pytest.raises(ValueError):
        fit_critical_exponent([1, 2, 3])


def test_fit_sanov_close_to_one():
    ball = enumerate_ball(sanov(), 12)
    fit = fit_critical_exponent(ball.counts)
    assert abs(fit.delta - 1) < 0.1
    assert fit.confidence[0] <= fit.delta <= fit.confidence[1]


# ---------------------------------------------------------------- return probabilities

def tree_return_oracle(m, K):
    """mu^{*2k}(e) for SRW on the 2m-regular tree via the distance chain."""
    q = 2 * m - 1
    dist = {0: Fraction(1)}
    out = []
    for t in range(1, 2 * K + 1):
        nxt = {}
        for L, p in dist.items():
            if L == 0:
                nxt[1] = nxt.get(1, 0) + p
            else:
                nxt[L - 1] = nxt.get(L - 1, 0) + p * Fraction(1, q + 1)
                nxt[L + 1] = nxt.get(L + 1, 0) + p * Fraction(q, q + 1)
        dist = nxt
        if t % 2 == 0:
            out.append(dist.get(0, Fraction(0)))
    return out


def test_return_probabilities_srw_exact():
    mu = GroupMeasure.symmetric_generators(sanov())
    est = return_prob_norm_estimate(mu, 8)
    assert est.p == tree_return_oracle(2, 8)
    assert est.p[0] == Fraction(1, 4) and est.p[1] == Fraction(7, 64)
    assert est.exact_monotone()
    assert all(x <= y for x, y in zip(est.r, est.r[1:]))
    assert all(0 < r <= 1 for r in est.r)


def test_return_probabilities_parabolic_pair():
    P = GroupElement.of([1, 1], [0, 1])
    mu = GroupMeasure.uniform([P, P.inverse()])
    est = return_prob_norm_estimate(mu, 10)
    assert est.p == [Fraction(comb(2 * k, k), 4**k) for k in range(1, 11)]
    assert est.exact_monotone()
    assert est.r[0] >= math.sqrt(0.5)
    assert est.r[-1] > 0.88


def test_return_probabilities_budget_truncates():
    mu = GroupMeasure.symmetric_generators(sanov())
    est = return_prob_norm_estimate(mu, 8, budget=100)
    assert est.truncated and len(est.r) < 8


def test_measure_validation():
    A = GroupElement.of([1, 2], [0, 1])
    with pytest.raises(ValueError):
        GroupMeasure([A], [Fraction(1, 2)])
    with pytest.raises(ValueError):
        GroupMeasure([A], [Fraction(-1)])
    mu = GroupMeasure([A, A], [Fraction(1, 2), Fraction(1, 2)])
    assert len(mu) == 1 and mu.weights == (1,)


# ---------------------------------------------------------------- drift and entropy

def radial_drift_oracle(n, steps):
    """E|X_steps|/steps for the uniform-S_n walk on F_2, with the one-step
    kernel tabulated by brute force over S_n for each starting length."""
    S = sphere(2, n)
    kern = {}
    for L in range(0, n + 2):
        g = tuple([1, 2] * L)[:L] if L else ()
        cnt = {}
        for h in S:
            w = list(g)
            for x in h:
                if w and w[-1] == -x:
                    w.pop()
                else:
                    w.append(x)
            cnt[len(w) - L] = cnt.get(len(w) - L, 0) + 1
        kern[L] = {d: Fraction(c, len(S)) for d, c in cnt.items()}
    dist = {0: Fraction(1)}
    for _ in range(steps):
        nxt = {}
        for L, p in dist.items():
            for d, k in kern[min(L, n + 1)].items():
                nxt[L + d] = nxt.get(L + d, 0) + p * k
        dist = nxt
    return sum(L * p for L, p in dist.items()) / steps


def test_drift_entropy_support_bounds():
    p = free_group(2, "word")
    mu = ShellMeasure.uniform([g for _, g in p.moves()], n=1, k=1, presentation=p)
    de = drift_entropy_estimate(mu, steps=10, samples=2000, seed=5)
    assert 0.5 - 3 * de.drift_se <= de.drift <= 1
    assert de.entropy <= math.log(4) + 1e-12


def test_drift_matches_radial_oracle():
    p = free_group(2, "word")
    ball = enumerate_ball(p, 4)
    mu = ball.shell(4, 1)
    de = drift_entropy_estimate(mu, steps=20, samples=10000, seed=11, bootstrap=100)
    exact = float(radial_drift_oracle(4, 20))
    assert abs(de.drift - exact) <= 3 * de.drift_se


def test_drift_deterministic_given_seed():
    p = free_group(2, "word")
    mu = enumerate_ball(p, 2).shell(2, 1)
    a = drift_entropy_estimate(mu, 5, 200, seed=3, bootstrap=20)
    b = drift_entropy_estimate(mu, 5, 200, seed=3, bootstrap=20)
    assert a == b


def test_drift_bounded_by_shell_radius():
    ball = enumerate_ball(sanov(), 6)
    mu = ball.shell(6, 2)
    de = drift_entropy_estimate(mu, steps=4, samples=300, seed=2, bootstrap=50)
    fit = fit_critical_exponent(enumerate_ball(sanov(), 12).counts)
    assert fit.delta * 6 >= fit.delta * de.drift - 3 * de.drift_se
    assert de.drift <= 6 + 1e-9
