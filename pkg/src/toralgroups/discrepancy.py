"""Random-walk distributions on the torus and their equidistribution numerics:
Fourier coefficients, exact box discrepancy, the Erdos-Turan-Koksma bound,
Diophantine type of a point and fast-approximation exponents.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import BudgetExceeded, DimensionMismatch
from .group_enum import BallIndex, GroupMeasure, _hash_rows, _mul_rows, enumerate_ball
from .torus import TorusPoint, orbit_offsets

ETK_CONSTANT_BASE = 1.5           # C_d = (3/2)^d
DISCREPANCY_ATOM_BUDGET = 5000
DISCREPANCY_COST_BUDGET = 3 * 10**9   # Cx^2 * Cy elementary steps
REAL_MERGE_TOL = 1e-14


def etk_constant(d: int = 2) -> float:
    return ETK_CONSTANT_BASE**d


# ---------------------------------------------------------------- measures

@dataclass
class TorusAtomicMeasure:
    """Atomic probability measure on T^2.

    Exact mode keeps atoms as integer numerators over a common denominator q
    and weights as integers over wden; `points`/`weights` are float views.
    """

    points: np.ndarray
    weights: np.ndarray
    exact: bool = False
    q: int = 0
    num: np.ndarray | None = None
    wnum: list | None = None
    wden: int = 1
    rational_weights: bool = True
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def exact_atoms(self) -> list:
        if not self.exact:
            raise ValueError("real-mode measure has no exact atoms")
        return [((Fraction(int(a), self.q), Fraction(int(b), self.q)), Fraction(int(w), self.wden))
                for (a, b), w in zip(self.num, self.wnum)]

    def total_mass(self):
        if self.exact:
            return Fraction(sum(int(w) for w in self.wnum), self.wden)
        return float(self.weights.sum())

    @classmethod
    def from_grid(cls, q: int, num, wnum, wden: int, **meta):
        num = np.asarray(num, dtype=np.int64).reshape(-1, 2) % q
        order = np.lexsort((num[:, 1], num[:, 0]))
        num = num[order]
        wnum = [int(wnum[i]) for i in order]
        # merge duplicates
        keep = np.ones(len(num), dtype=bool)
        keep[1:] = (num[1:] != num[:-1]).any(axis=1)
        grp = np.cumsum(keep) - 1
        merged = [0] * int(keep.sum())
        for gi, w in zip(grp, wnum):
            merged[gi] += w
        num = num[keep]
        g = math.gcd(wden, *merged) if merged else 1
        merged = [w // g for w in merged]
        wden //= g
        pts = num.astype(np.float64) / q
        w = np.array([w / wden for w in merged])
        return cls(pts, w, True, q, num, merged, wden, True, dict(meta))

    @classmethod
    def from_atoms(cls, atoms, **meta):
        """atoms: iterable of (TorusPoint, weight)."""
        atoms = list(atoms)
        if not atoms:
            raise ValueError("empty measure")
        if all(p.exact for p, _ in atoms) and all(isinstance(w, (int, Fraction)) for _, w in atoms):
            q = math.lcm(*(c.denominator for p, _ in atoms for c in p.coords))
            wden = math.lcm(*(Fraction(w).denominator for _, w in atoms))
            num = [[int(c * q) for c in p.coords] for p, _ in atoms]
            wnum = [int(Fraction(w) * wden) for _, w in atoms]
            if any(w <= 0 for w in wnum):
                raise ValueError("weights must be positive")
            out = cls.from_grid(q, num, wnum, wden, **meta)
            if out.total_mass() != 1:
                raise ValueError("weights must sum to 1")
            return out
        pts = np.array([p.as_floats() for p, _ in atoms])
        w = np.array([float(w) for _, w in atoms])
        rat = all(isinstance(w, (int, Fraction)) for _, w in atoms)
        return cls.from_real(pts, w, rational_weights=rat, **meta)

    @classmethod
    def from_real(cls, pts, w, rational_weights: bool = False, **meta):
        pts = np.asarray(pts, dtype=np.float64) % 1.0
        w = np.asarray(w, dtype=np.float64)
        if (w <= 0).any():
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1) > 1e-9:
            raise ValueError("weights must sum to 1")
        pts, w = _merge_close(pts, w)
        return cls(pts, w, False, rational_weights=rational_weights, meta=dict(meta))

    @classmethod
    def uniform_grid(cls, q: int):
        i, j = np.meshgrid(np.arange(q), np.arange(q), indexing="ij")
        return cls.from_grid(q, np.stack([i.ravel(), j.ravel()], 1), [1] * (q * q), q * q)

    @classmethod
    def dirac(cls, x: TorusPoint):
        return cls.from_atoms([(x, Fraction(1))])


def _merge_close(pts, w, tol=REAL_MERGE_TOL):
    if len(pts) < 2:
        return pts, w
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts, w = pts[order], w[order]
    same = (np.abs(np.diff(pts, axis=0)) <= tol).all(axis=1)
    if not same.any():
        return pts, w
    start = np.concatenate([[True], ~same])
    grp = np.cumsum(start) - 1
    return pts[start], np.bincount(grp, weights=w)


# ---------------------------------------------------------------- walks

def _grid_step(q, num, wnum, mu):
    """One convolution step on the grid (1/q)Z^2: nu -> sum_s mu(s) s_* nu."""
    wd = math.lcm(*(w.denominator for w in mu.weights))
    out_num, out_w = [], []
    for g, w in zip(mu.atoms, mu.weights):
        M = np.array(g.entries, dtype=object)
        img = (np.asarray(num, dtype=object) @ M.T) % q
        c = int(w * wd)
        out_num.append(img.astype(np.int64))
        out_w.extend(int(v) * c for v in wnum)
    return np.concatenate(out_num), out_w, wd


def walk_series(mu: GroupMeasure, x: TorusPoint, kmax: int, budget: int = 4 * 10**6):
    """Yield nu_k = mu^{*k} * delta_x for k = 0..kmax.

    Rational x: exact Markov chain on the invariant grid R_q.  Real x: the
    distribution of the group element is propagated with integer path counts
    (hash-deduplicated 2x2 matrices) and pushed to the torus in exact 128-bit
    arithmetic.
    """
    if x.dim != 2 or mu.dim != 2:
        raise DimensionMismatch("walks are implemented for d = 2")
    if x.exact:
        q = math.lcm(*(c.denominator for c in x.coords))
        cur = TorusAtomicMeasure.from_grid(q, [[int(c * q) for c in x.coords]], [1], 1, k=0)
        yield cur
        for k in range(1, kmax + 1):
            num, wn, wd = _grid_step(q, cur.num, cur.wnum, mu)
            cur = TorusAtomicMeasure.from_grid(q, num, wn, cur.wden * wd, k=k)
            yield cur
        return
    gens = np.array([g.flat for g in mu.atoms], dtype=np.int64)
    wd = math.lcm(*(w.denominator for w in mu.weights))
    gw = np.array([int(w * wd) for w in mu.weights], dtype=np.int64)
    mats = np.array([[1, 0, 0, 1]], dtype=np.int64)
    cnt = np.array([1], dtype=np.float64 if wd**kmax >= 2**62 else np.int64)
    y0 = TorusPoint.rational(0, 0)
    for k in range(kmax + 1):
        if k:
            if len(mats) * len(gens) > budget:
                raise BudgetExceeded(f"walk support {len(mats) * len(gens)} > budget {budget}",
                                     partial=None, completed_radius=k - 1)
            if np.abs(mats).max() > 2**29:
                raise BudgetExceeded("walk matrices left the int64 fast path", partial=None,
                                     completed_radius=k - 1)
            mats = np.concatenate([_mul_rows(mats, s) for s in gens])
            cnt = np.concatenate([cnt * c for c in gw])
            h = _hash_rows(mats)
            order = np.argsort(h, kind="stable")
            h, mats, cnt = h[order], mats[order], cnt[order]
            start = np.concatenate([[True], h[1:] != h[:-1]])
            grp = np.cumsum(start) - 1
            rep = np.nonzero(start)[0]
            if not (mats == mats[rep[grp]]).all():
                raise RuntimeError("hash collision in walk support")
            cnt = np.bincount(grp, weights=cnt).astype(cnt.dtype) if cnt.dtype != np.int64 else \
                np.add.reduceat(cnt, rep)
            mats = mats[rep]
        delta, _ = orbit_offsets(mats, x, y0)
        pts = delta % 1.0
        w = cnt.astype(np.float64) / float(wd) ** k
        nu = TorusAtomicMeasure(pts, w, False, rational_weights=True, meta={"k": k, "support": len(mats)})
        yield nu


def walk_distribution(mu: GroupMeasure, x: TorusPoint, k: int, budget: int = 4 * 10**6) -> TorusAtomicMeasure:
    nu = None
    for nu in walk_series(mu, x, k, budget):
        pass
    return nu


# ---------------------------------------------------------------- Fourier

def _phases(nu: TorusAtomicMeasure, bs: np.ndarray, axis: int) -> np.ndarray:
    """e(b * x_axis) for every atom and every b in bs, shape (N, len(bs))."""
    if nu.exact:
        r = (np.outer(nu.num[:, axis], bs) % nu.q).astype(np.float64) / nu.q
    else:
        r = np.outer(nu.points[:, axis], bs) % 1.0
    return np.exp(2j * np.pi * r)


def fourier_coefficient(nu: TorusAtomicMeasure, b) -> complex:
    """nu^(b) = sum_j w_j e(<b, x_j>), phases reduced mod 1 exactly in exact mode."""
    b = np.array([int(v) for v in b], dtype=np.int64)
    if len(b) != nu.dim:
        raise DimensionMismatch("frequency and measure dimensions differ")
    if nu.exact:
        r = (nu.num @ b) % nu.q
        # group exact weights by residue before the float sum
        acc = {}
        for ri, w in zip(r.tolist(), nu.wnum):
            acc[ri] = acc.get(ri, 0) + w
        keys = np.array(sorted(acc), dtype=np.float64)
        ws = np.array([acc[k] for k in sorted(acc)], dtype=np.float64) / nu.wden
        return complex((ws * np.exp(2j * np.pi * keys / nu.q)).sum())
    r = (nu.points @ b.astype(np.float64)) % 1.0
    return complex((nu.weights * np.exp(2j * np.pi * r)).sum())


def fourier_window(nu: TorusAtomicMeasure, B: int, chunk: int = 20000) -> np.ndarray:
    """|nu^(b)| for b1 in [0, B], b2 in [-B, B] (the other half is conjugate)."""
    b1 = np.arange(0, B + 1)
    b2 = np.arange(-B, B + 1)
    C = np.zeros((len(b1), len(b2)), dtype=np.complex128)
    N = len(nu)
    for s in range(0, N, chunk):
        part = slice(s, min(N, s + chunk))
        sub = TorusAtomicMeasure(nu.points[part], nu.weights[part], nu.exact, nu.q,
                                 None if nu.num is None else nu.num[part])
        U = _phases(sub, b1, 0) * nu.weights[part, None]
        V = _phases(sub, b2, 1)
        C += U.T @ V
    return np.abs(C)


def _window_mask(B: int, strict: bool) -> np.ndarray:
    b1 = np.arange(0, B + 1)[:, None]
    b2 = np.arange(-B, B + 1)[None, :]
    sup = np.maximum(np.abs(b1), np.abs(b2))
    half = (b1 > 0) | ((b1 == 0) & (b2 > 0))
    ok = sup < B if strict else sup <= B
    return half & ok & (sup > 0)


def max_fourier(nu: TorusAtomicMeasure, B: int) -> float:
    """max |nu^(b)| over 0 < |b|_inf < B."""
    if B < 1:
        raise ValueError("B must be >= 1")
    if B == 1:
        return 0.0
    A = fourier_window(nu, B - 1)
    return float(A[_window_mask(B - 1, strict=False)].max())


def etk_bound(nu: TorusAtomicMeasure, B: int) -> float:
    """C_d (1/B + sum_{0<|b|_inf<=B} |nu^(b)| / r(b)), r(b) = prod max(1, |b_i|)."""
    if B < 1:
        raise ValueError("B must be >= 1")
    A = fourier_window(nu, B)
    b1 = np.arange(0, B + 1)[:, None]
    b2 = np.arange(-B, B + 1)[None, :]
    r = np.maximum(1, np.abs(b1)) * np.maximum(1, np.abs(b2))
    mask = _window_mask(B, strict=False)
    s = 2 * float((A / r)[mask].sum())   # each half-plane vector stands for +-b
    return etk_constant(nu.dim) * (1.0 / B + s)


# ---------------------------------------------------------------- discrepancy

@dataclass
class DiscrepancyResult:
    value: float
    exact: Fraction | None
    box: tuple            # ((a1, b1), (a2, b2)) cut coordinates
    sides: str            # "closed" (excess mass) or "open" (deficit)
    attained: bool        # False when the sup is a limit of half-open boxes
    method: str           # "exact-cuts" or "grid"
    error: float = 0.0    # certified additive error (grid fallback)

    def __float__(self):
        return self.value


def _best_boxes(X, Y, W):
    """Max over closed boxes of mass - area and over open boxes of area - mass.

    X (Cx,), Y (Cy,) sorted cut coordinates, W (Cx, Cy) atom masses at cuts.
    Returns (plus, plus_box, minus, minus_box) with box = (ia, ib, jc, jd).
    """
    Cx, Cy = len(X), len(Y)
    best_p, box_p = -np.inf, None
    best_m, box_m = -np.inf, None
    for a in range(Cx):
        # closed strips [X_a, X_b]: rows a..b
        strip = np.cumsum(W[a:], axis=0)                      # (Cx-a, Cy), row t -> b = a+t
        w = (X[a:] - X[a])[:, None]
        S = np.cumsum(strip, axis=1)                          # S_d = sum_{j<=d}
        Sprev = S - strip                                     # S_{c-1}
        lhs = S - w * Y[None, :]                              # S_d - w Y_d
        rhs = np.minimum.accumulate(Sprev - w * Y[None, :], axis=1)   # min_{c<=d} S_{c-1} - w Y_c
        val = lhs - rhs
        t, d = np.unravel_index(np.argmax(val), val.shape)
        if val[t, d] > best_p:
            best_p = val[t, d]
            c = int(np.argmin((Sprev[t] - w[t] * Y)[: d + 1]))
            box_p = (a, a + t, c, int(d))
        # open strips (X_a, X_b): rows a+1..b-1
        if a + 1 < Cx:
            # row t -> b = a+t, rows a+1..b-1
            ostrip = np.vstack([np.zeros((2, Cy)), np.cumsum(W[a + 1:], axis=0)])[: Cx - a]
            So = np.cumsum(ostrip, axis=1)
            # area - mass over (Y_c, Y_d): w(Y_d - Y_c) - (S_{d-1} - S_c)
            lhs = w * Y[None, :] - (So - ostrip)             # w Y_d - S_{d-1}
            pre = w * Y[None, :] - So                         # w Y_c - S_c
            rmin = np.minimum.accumulate(pre, axis=1)
            rmin = np.hstack([np.full((len(w), 1), np.inf), rmin[:, :-1]])   # strictly c < d
            val = lhs - rmin
            t, d = np.unravel_index(np.argmax(val), val.shape)
            if val[t, d] > best_m:
                best_m = val[t, d]
                c = int(np.argmin(pre[t, :d]))
                box_m = (a, a + t, c, int(d))
    return float(best_p), box_p, float(best_m), box_m


def _cuts(coords: np.ndarray):
    X = np.unique(np.concatenate([coords, [0.0, 1.0]]))
    return X, np.searchsorted(X, coords)


def _exact_box_value(nu, box, X, Y, sides, qx):
    """Recompute the chosen box exactly (exact mode)."""
    ia, ib, jc, jd = box
    xa, xb = Fraction(round(X[ia] * qx), qx), Fraction(round(X[ib] * qx), qx)
    ya, yb = Fraction(round(Y[jc] * qx), qx), Fraction(round(Y[jd] * qx), qx)
    m = Fraction(0)
    for (u, v), w in nu.exact_atoms():
        if sides == "closed":
            inside = xa <= u <= xb and ya <= v <= yb
        else:
            inside = xa < u < xb and ya < v < yb
        if inside:
            m += w
    area = (xb - xa) * (yb - ya)
    return m - area if sides == "closed" else area - m


def discrepancy(nu: TorusAtomicMeasure, budget: int = DISCREPANCY_ATOM_BUDGET,
                cost_budget: int = DISCREPANCY_COST_BUDGET, grid: int = 256) -> DiscrepancyResult:
    """sup over boxes prod [a_i, b_i) in [0,1)^2 of |nu(P) - m(P)|.

    Cut coordinates are the atom coordinates plus 0 and 1.  Excess mass is
    maximized over closed boxes (limits of half-open boxes shrinking onto the
    atoms), deficits over open boxes; every other side combination is
    dominated by one of these.  Over budget, atoms are snapped down to a
    grid of step h and the result carries the certified error 2 d h.
    """
    if nu.dim != 2:
        raise DimensionMismatch("discrepancy is implemented for d = 2")
    pts, w = nu.points, nu.weights
    X, ix = _cuts(pts[:, 0])
    Y, iy = _cuts(pts[:, 1])
    cost = len(X) ** 2 * len(Y)
    method, err = "exact-cuts", 0.0
    if len(nu) > budget or cost > cost_budget:
        h = 1.0 / grid
        snapped = np.floor(pts * grid) / grid
        X, ix = _cuts(snapped[:, 0])
        Y, iy = _cuts(snapped[:, 1])
        method, err = "grid", 2 * nu.dim * h
    W = np.zeros((len(X), len(Y)))
    np.add.at(W, (ix, iy), w)
    p, pbox, m, mbox = _best_boxes(X, Y, W)
    if p >= m:
        val, box, sides = p, pbox, "closed"
        ia, ib, jc, jd = box
        # a right side sitting on an atom coordinate is only reached as a limit
        attained = not ((W[ib, :].any() and ib < len(X) - 1) or (W[:, jd].any() and jd < len(Y) - 1))
    else:
        val, box, sides = m, mbox, "open"
        ia, ib, jc, jd = box
        attained = not ((ia > 0 and W[ia, :].any()) or (jc > 0 and W[:, jc].any()))
    exact = None
    if nu.exact and method == "exact-cuts":
        exact = _exact_box_value(nu, box, X, Y, sides, nu.q)
        val = float(exact)
    coords = ((float(X[box[0]]), float(X[box[1]])), (float(Y[box[2]]), float(Y[box[3]])))
    return DiscrepancyResult(min(max(val, 0.0), 1.0), exact, coords, sides, attained, method, err)


def discrepancy_bruteforce(nu: TorusAtomicMeasure) -> float:
    """O(C^4) reference: every cut quadruple, both side conventions."""
    X, ix = _cuts(nu.points[:, 0])
    Y, iy = _cuts(nu.points[:, 1])
    best = 0.0
    for a in range(len(X)):
        for b in range(a, len(X)):
            for c in range(len(Y)):
                for d in range(c, len(Y)):
                    area = (X[b] - X[a]) * (Y[d] - Y[c])
                    cl = nu.weights[(ix >= a) & (ix <= b) & (iy >= c) & (iy <= d)].sum()
                    op = nu.weights[(ix > a) & (ix < b) & (iy > c) & (iy < d)].sum()
                    best = max(best, cl - area, area - op)
    return float(best)


# ---------------------------------------------------------------- Diophantine type

@dataclass
class DiophantineVerdict:
    Mestimate: float
    Qcutoff: int
    witnesses: list          # (q, dist_sup(x, R_q)), record-setting q in increasing order
    rational: bool = False
    denominator: int | None = None

    def describe(self) -> str:
        if self.rational:
            return f"rational (M = inf at q = {self.denominator})"
        return f"M({self.Qcutoff}) = {self.Mestimate:.4f}"

    def to_dict(self):
        return {"M": None if self.rational else self.Mestimate, "Q": self.Qcutoff,
                "rational": self.rational, "denominator": self.denominator,
                "witnesses": [[q, d] for q, d in self.witnesses]}


def grid_distance(x: TorusPoint, q: int) -> Fraction:
    """dist_sup(x, (1/q)Z^d) exactly on the stored coordinates."""
    out = Fraction(0)
    for c in x.coords:
        t = (c * q) % 1
        out = max(out, min(t, 1 - t) / q)
    return out


def diophantine_type(x: TorusPoint, Q: int) -> DiophantineVerdict:
    """Empirical M(Q) = max_{q<=Q} -log dist_sup(x, R_q) / log q."""
    if Q < 2:
        raise ValueError("Q must be >= 2")
    if x.exact:
        den = math.lcm(*(c.denominator for c in x.coords))
        if den <= Q:
            wit = [(q, float(grid_distance(x, q))) for q in range(2, den + 1) if den % q == 0]
            return DiophantineVerdict(math.inf, Q, wit, True, den)
    best, wit = -math.inf, []
    floor_err = float(x.err) if x.err else 0.0
    for q in range(2, Q + 1):
        dist = grid_distance(x, q)
        if dist == 0 or dist <= floor_err:
            # below the representation error: indistinguishable from a hit
            wit.append((q, float(dist)))
            return DiophantineVerdict(math.inf, Q, wit, x.exact, q if x.exact else None)
        M = -math.log(float(dist)) / math.log(q)
        if M > best:
            best = M
            wit.append((q, float(dist)))
    return DiophantineVerdict(best, Q, wit)


# ---------------------------------------------------------------- fast approximation

@dataclass
class FastApproxTable:
    radii: list
    shell_best: list       # max achieved exponent among g with level n
    tail_best: list        # min over m >= n of shell_best[m]: exponent reached in every later shell
    witnesses: list        # (n, matrix, alpha) achieving shell_best
    verdict: DiophantineVerdict | None = None

    def alpha0(self, n0: int = 1) -> float:
        """Largest alpha such that every shell n >= n0 has a solution with exponent >= alpha."""
        return min(self.shell_best[n0:]) if len(self.shell_best) > n0 else math.nan


def achieved_exponents(ball: BallIndex, x: TorusPoint, y: TorusPoint) -> np.ndarray:
    """alpha(g) = -log |g.x - y| / log ||g|| (inf for exact hits, nan for ||g|| = 1)."""
    delta, _ = orbit_offsets(ball.matrix_array(), x, y)
    dist = np.sqrt((delta * delta).sum(axis=1))
    lognorm = ball.disp / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        a = -np.log(dist) / lognorm
    a[lognorm <= 1e-12] = np.nan
    return a


def fast_approx_scan(p, x: TorusPoint, y: TorusPoint, max_radius: int, Q: int | None = None) -> FastApproxTable:
    ball = p.truncate(max_radius) if isinstance(p, BallIndex) else enumerate_ball(p, max_radius)
    alpha = achieved_exponents(ball, x, y)
    best, wit = [], []
    for n in range(max_radius + 1):
        idx = np.nonzero((ball.level == n) & ~np.isnan(alpha))[0]
        if len(idx) == 0:
            best.append(-math.inf)
            wit.append((n, None, -math.inf))
            continue
        j = idx[np.argmax(alpha[idx])]
        best.append(float(alpha[j]))
        wit.append((n, ball.element(int(j)).flat, float(alpha[j])))
    tail = [min(best[n:]) for n in range(len(best))]
    verdict = diophantine_type(x, Q) if Q else None
    return FastApproxTable(list(range(max_radius + 1)), best, tail, wit, verdict)
