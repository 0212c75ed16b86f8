"""Acceptance suite: one test per criterion, run at the stated tolerances.

The terminal summary (tests/conftest.py) prints one PASS/FAIL line per
criterion with the measured values.  Run alone with

    python3 -m pytest tests/test_acceptance.py -v
"""
import math
import time
from fractions import Fraction

import numpy as np

from toralgroups.boundary_tree import (
    BoundaryModel, CylinderShadow, busemann, ps_measure, sphere, sphere_codes, sphere_layer_counts,
    sphere_return_probabilities, verify_matrixnorm, word_distance, x_a_indices,
)
from toralgroups.discrepancy import (
    TorusAtomicMeasure, discrepancy, etk_bound, max_fourier, walk_series,
)
from toralgroups.fourier_spectral import build_truncated_operator, kesten_crosscheck, operator_norm_estimate
from toralgroups.group_enum import (
    GroupMeasure, enumerate_ball, fit_critical_exponent, return_prob_norm_estimate,
)
from toralgroups.matrix_core import compose, evaluate_word, free_group, sanov
from toralgroups.torus import (
    TorusPoint, act, ergodic_character_error, ergodic_character_error_mc, exponent_scan,
)

ORIGIN = TorusPoint.rational(0, 0)


class Parts:
    """Collects every sub-check of a criterion so a failure reports all of them."""

    def __init__(self, note):
        self.note, self.failed = note, []

    def check(self, name, ok, detail=""):
        self.note(f"{name}: {'ok' if ok else 'FAILED'}{' ' + detail if detail else ''}")
        if not ok:
            self.failed.append(name)

    def done(self):
        assert not self.failed, f"failed parts: {self.failed}"


# ---------------------------------------------------------------- 1

def test_criterion_1_tree_exactness(note):
    t0 = time.perf_counter()
    P = Parts(note)
    counts = sphere_layer_counts(2, 15)
    P.check("#S_n = 4*3^(n-1), n <= 15", counts[1:] == [4 * 3 ** (n - 1) for n in range(1, 16)])
    # the word-metric matrix enumeration of F_2 realizes the same spheres
    ball = enumerate_ball(free_group(2, "word"), 10)
    shells = [ball.counts[0]] + [b - a for a, b in zip(ball.counts, ball.counts[1:])]
    P.check("matrix enumeration spheres, n <= 10", shells == counts[:11])
    # cylinder measures: literal sum over every cylinder for n <= 10, by layer beyond
    lit = all(sum(ps_measure(CylinderShadow(w)) for w in sphere(2, n)) == 1 for n in range(1, 11))
    # rho(O(w)) depends only on |w|; one reduced word per layer stands for all of them
    by_layer = all(counts[n] * ps_measure(CylinderShadow((1, 2) * (n // 2) + (1,) * (n % 2))) == 1
                   for n in range(11, 16))
    P.check("cylinder measures sum to 1 exactly", lit and by_layer)
    fit = fit_critical_exponent([(n, c) for n, c in enumerate(counts) if n >= 1])
    P.check("delta fit = log 3 within 1e-9", abs(fit.delta - math.log(3)) < 1e-9,
            f"|delta - log 3| = {abs(fit.delta - math.log(3)):.2e}")
    dt = time.perf_counter() - t0
    P.check("runtime < 10 s", dt < 10, f"{dt:.1f} s")
    P.done()


# ---------------------------------------------------------------- 2

def test_criterion_2_gershgorin_tree(note):
    t0 = time.perf_counter()
    P = Parts(note)
    pairs = [(r, n) for n in (2, 3, 4) for r in range(n + 2, n + 6)]
    rep = verify_matrixnorm(BoundaryModel(2), pairs, dense_limit=500)
    C = rep["C"]
    P.check("G(r,n) <= C n^2 3^-r 3^-n/2 (single fitted C)", rep["bounded"], f"C = {C:.4f}")
    dense = [x for x in rep["rows"] if x["size"] <= 500]
    P.check("dense norm <= G where |S_r| <= 500",
            all("dense_norm" in x and x["dense_norm"] <= x["G"] * (1 + 1e-12) for x in dense),
            f"{len(dense)} dense instances")
    P.check("structure", all(x["symmetric"] and x["nonnegative"] for x in rep["rows"]))
    dt = time.perf_counter() - t0
    P.check("runtime < 5 min", dt < 300, f"{dt:.1f} s")
    P.done()


# ---------------------------------------------------------------- 3

def test_criterion_3_radius_envelope_tree(note):
    t0 = time.perf_counter()
    P = Parts(note)
    delta = BoundaryModel(2).delta
    K = 8
    lhs, gaps = {}, []
    for n in range(2, 11):
        r, _ = sphere_return_probabilities(2, n, K)
        lhs[n] = -2 * math.log(r[-1])
        gaps.append(delta * n - 2 * math.log(n) - lhs[n])
    P.check("-2 log r_K <= delta n", all(lhs[n] <= delta * n + 1e-12 for n in lhs))
    C = max(gaps)
    P.check("-2 log r_K >= delta n - 2 log n - C with C <= 5", C <= 5, f"C = {C:.3f}")
    dt = time.perf_counter() - t0
    P.check("runtime < 5 min", dt < 300, f"{dt:.1f} s")
    P.done()


# ---------------------------------------------------------------- 4

def test_criterion_4_kesten_crosscheck(note):
    t0 = time.perf_counter()
    P = Parts(note)
    mu = GroupMeasure.symmetric_generators(sanov())
    ref = math.sqrt(3) / 2
    rep = kesten_crosscheck(mu, 2000, 8, tol=1e-9)
    lat, rK = rep["lattice"]["value"], rep["r_K"]
    P.check("lattice (B=2000) within 0.02 of sqrt3/2", abs(lat - ref) <= 0.02, f"{lat:.5f}")
    P.check("r_K (K=8) within 0.02 of sqrt3/2", abs(rK - ref) <= 0.02, f"{rK:.5f}")
    P.check("lattice and r_K agree within 0.02", abs(lat - rK) <= 0.02, f"gap {abs(lat - rK):.4f}")
    vals = [operator_norm_estimate(build_truncated_operator(mu, B), tol=1e-9).value for B in (50, 100, 200, 400)]
    P.check("window monotonicity on B in {50,100,200,400}",
            all(a <= b + 1e-9 for a, b in zip(vals, vals[1:])), " ".join(f"{v:.4f}" for v in vals))
    dt = time.perf_counter() - t0
    P.check("runtime < 2 min", dt < 120, f"{dt:.1f} s")
    P.done()


# ---------------------------------------------------------------- 5

def test_criterion_5_shrinking_target_slopes(note):
    t0 = time.perf_counter()
    P = Parts(note)
    R = 16
    ball = enumerate_ball(sanov(), R)
    dfit = fit_critical_exponent(ball.counts).delta
    alphas = [0.25, 0.5, 1.5]
    slopes = {0.25: [], 0.5: []}
    stable, n0s, border = [], [], 0
    for seed in range(100):
        tab = exponent_scan(ball, TorusPoint.random(seed), ORIGIN, alphas, R)
        border += int(tab.borderline.sum())
        for j, a in enumerate(alphas[:2]):
            slopes[a].append(tab.slope(j, R // 2, R))
        c = tab.counts[2]
        stable.append(c[R] == c[R - 2])
        n0s.append(next(n for n in range(R + 1) if (c[n:] == c[n]).all()))
    for a in (0.25, 0.5):
        s = float(np.mean(slopes[a]))
        P.check(f"alpha={a}: mean slope = delta_fit - alpha within 0.15",
                abs(s - (dfit - a)) <= 0.15, f"{s:.3f} vs {dfit - a:.3f}")
    late = sum(ball.counts[n] - ball.counts[n - 1] for n in (R - 1, R)) * math.pi * math.exp(-1.5 * (R - 2))
    P.check("alpha=1.5: N(n) constant for n >= n0 on every seed", all(stable),
            f"max n0 = {max(n0s)}, expected late solutions/seed ~ {late:.1e}, borderline {border}")
    dt = time.perf_counter() - t0
    P.check("runtime < 10 min", dt < 600, f"{dt:.1f} s")
    P.done()


# ---------------------------------------------------------------- 6

def test_criterion_6_ergodic(note):
    t0 = time.perf_counter()
    P = Parts(note)
    ball = enumerate_ball(sanov(), 12)
    dfit = fit_critical_exponent(ball.counts).delta
    ratios, zs, in_range = [], [], True
    for n in range(2, 9):
        S = ball.shell(n, 2)
        for b in [(1, 0), (1, 1)]:
            e2 = ergodic_character_error(S, b)
            in_range &= Fraction(1, len(S.atoms)) <= e2 <= 1
            ratios.append(math.sqrt(e2) / (n * n * math.exp(-dfit * n / 2)))
            mc, se = ergodic_character_error_mc(S, b, 100_000, seed=1000 * n + 10 * b[0] + b[1])
            zs.append(abs(mc - float(e2)) / se)
    C = max(ratios)
    P.check("||A_n e_b|| <= C n^2 exp(-delta_fit n/2), one fitted C", all(r <= C for r in ratios), f"C = {C:.3f}")
    P.check("squared error in [1/|S|, 1]", in_range)
    P.check("exact = Monte Carlo (1e5 samples) within 3 sigma", max(zs) <= 3, f"max z = {max(zs):.2f}")
    dt = time.perf_counter() - t0
    P.check("runtime < 5 min", dt < 300, f"{dt:.1f} s")
    P.done()


# ---------------------------------------------------------------- 7

def test_criterion_7_equidistribution_suite(note):
    t0 = time.perf_counter()
    P = Parts(note)
    rng = np.random.Generator(np.random.Philox(key=77))
    viol = 0
    for _ in range(100):
        q = int(rng.integers(1, 13))
        n = int(rng.integers(1, 11))
        pts = rng.integers(0, q, (n, 2))
        w = rng.integers(1, 6, n)
        nu = TorusAtomicMeasure.from_atoms(
            [(TorusPoint.rational(Fraction(int(a), q), Fraction(int(b), q)), Fraction(int(c), int(w.sum())))
             for (a, b), c in zip(pts, w)])
        D = discrepancy(nu).value
        viol += sum(D > etk_bound(nu, B) for B in (1, 4, 16))
    P.check("(a) ETK >= discrepancy, 100 measures x B in {1,4,16}", viol == 0, f"{viol} violations")
    mu = GroupMeasure.symmetric_generators(sanov())
    low = min(discrepancy(nu).value for nu in walk_series(mu, TorusPoint.rational(Fraction(1, 3), Fraction(1, 7)), 12))
    P.check("(b) rational x: discrepancy(nu_k) >= 0.045, k <= 12", low >= 0.045, f"min {low:.4f}")
    ks, mf = [], []
    for k, nu in enumerate(walk_series(mu, TorusPoint.parse(["sqrt2-1", "sqrt3-1"]), 12)):
        if k >= 4:
            ks.append(k)
            mf.append(max_fourier(nu, 50))
    slope = float(np.polyfit(ks, np.log(mf), 1)[0])
    P.check("(c) Diophantine x: log max_fourier(B=50) slope < 0 on k in [4,12]", slope < 0, f"slope {slope:.4f}")
    dt = time.perf_counter() - t0
    P.check("runtime < 10 min", dt < 600, f"{dt:.1f} s")
    P.done()


# ---------------------------------------------------------------- 8

def _stack_distance(g, H, hl):
    """|g^-1 h| for every row of H (codes, length hl) by stack cancellation."""
    L = len(g)
    top = np.full(len(H), L)          # letters of g^-1 still on the stack
    pushed = np.zeros(len(H), dtype=np.int64)
    for k in range(H.shape[1]):
        live = k < hl
        # stack top of g^-1 is the inverse of g[L - top]; h[k] cancels it iff h[k] = g[L - top]
        gt = np.where(top > 0, np.asarray(g + [-1])[np.clip(L - top, 0, L)], -2)
        cancel = live & (pushed == 0) & (top > 0) & (H[:, k] == gt)
        top = top - cancel
        pushed = pushed + (live & ~cancel)
    return top + pushed


def test_criterion_8_invariant_suites(note):
    t0 = time.perf_counter()
    P = Parts(note)
    # group action, exact, 10^4 random triples
    rng = np.random.Generator(np.random.Philox(key=8))
    gens = list(sanov().generators)
    ok = True
    for _ in range(10_000):
        u = tuple(int(v) for v in rng.choice([1, -1, 2, -2], int(rng.integers(0, 9))))
        v = tuple(int(v) for v in rng.choice([1, -1, 2, -2], int(rng.integers(0, 9))))
        g, h = evaluate_word(u, gens), evaluate_word(v, gens)
        den = [int(d) for d in rng.integers(1, 60, 2)]
        x = TorusPoint.rational(Fraction(int(rng.integers(0, den[0])), den[0]), Fraction(int(rng.integers(0, den[1])), den[1]))
        ok &= act(compose(g, h), x) == act(g, act(h, x))
    P.check("act(gh, x) = act(g, act(h, x)), 1e4 triples", ok)
    # Busemann identity: library functions on all pairs with |g| + |h| <= 8, and the
    # identity |h| - 2(g|h) = |g^-1 h| - |g| on all pairs with |g|, |h| <= 8
    W = [sphere(2, L) for L in range(9)]
    lib = all(busemann(g, h) == word_distance(g, h) - word_distance(g, ())
              for a in range(9) for b in range(9 - a) for g in W[a] for h in W[b])
    codes = [sphere_codes(2, L) for L in range(9)]
    H = np.full((sum(len(c) for c in codes), 8), -1, dtype=np.int64)
    hl = np.zeros(len(H), dtype=np.int64)
    i = 0
    for L, c in enumerate(codes):
        H[i: i + len(c), :L] = c
        hl[i: i + len(c)] = L
        i += len(c)
    full = True
    for j in range(len(H)):
        g = H[j, : hl[j]].tolist()
        eq = H[:, : hl[j]] == np.asarray(g)[None, :]
        cp = np.cumprod(eq, axis=1).sum(axis=1) if hl[j] else np.zeros(len(H), dtype=np.int64)
        full &= bool(((hl - 2 * cp) == _stack_distance(g, H, hl) - hl[j]).all())
    P.check("Busemann word identity, exhaustive to length 8", lib and full, f"{len(H)}^2 pairs")
    # X_a(g, n), a = 0..n: disjoint cover of S_n for every g in S_{n+3}, n <= 6
    cover = True
    for n in range(1, 7):
        N = 4 * 3 ** (n - 1)
        for g in sphere(2, n + 3):
            idx = np.concatenate([x_a_indices(g, n, a) for a in range(n + 1)])
            cover &= len(idx) == N and bool((np.sort(idx) == np.arange(N)).all())
    P.check("X_a disjoint cover of S_n, n <= 6, r = n + 3", cover)
    # truncated operators: self-adjoint, norm <= 1
    ball = enumerate_ball(sanov(), 8)
    measures = [GroupMeasure.symmetric_generators(sanov())] + [ball.shell(n, 2) for n in range(2, 9)]
    ops = [build_truncated_operator(m, B, reduce=red)
           for m in measures for B in (1, 10, 50, 100) for red in ("full", "primitive", "even")]
    sa = all(op.is_self_adjoint() and op.norm_upper_bound() <= 1 + 1e-15 for op in ops)
    P.check("truncated operators self-adjoint with norm <= 1", sa, f"{len(ops)} operators")
    # power-mean monotonicity of r_k (exact)
    pm = all(return_prob_norm_estimate(m, 6).exact_monotone() for m in measures[:4])
    for n in range(1, 8):
        _, p = sphere_return_probabilities(2, n, 8)
        pm &= all(p[k - 1] ** (k + 1) <= p[k] ** k for k in range(1, len(p)))
    P.check("r_k nondecreasing (exact)", pm)
    dt = time.perf_counter() - t0
    P.check("runtime < 5 min", dt < 300, f"{dt:.1f} s")
    P.done()
