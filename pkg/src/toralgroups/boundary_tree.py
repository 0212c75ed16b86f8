"""Free group F_m with the word metric: the Cayley tree, its boundary of
infinite reduced words, cylinder shadows with the uniform (Patterson-Sullivan)
measure, Busemann functions, X_a sets, and the shadow matrix Pi_r(mu).

Everything here is exact.  Words are tuples of signed generator indices; for
vectorised work they are encoded as letter codes 0..2m-1 (code 2(k-1) for
generator k, 2(k-1)+1 for its inverse, so inversion is code ^ 1).  The
enumeration order of S_L used throughout is the rank order: first letter,
then each subsequent letter by its position among the 2m-1 non-backtracking
choices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import BudgetExceeded
from .matrix_core import format_word, free_reduce, invert_word, parse_word


# ---------------------------------------------------------------- model

@dataclass(frozen=True)
class BoundaryModel:
    """F_m acting on its Cayley tree.  All hyperbolicity constants are zero
    except the Busemann slack R, which is a knob (tree value 0)."""

    m: int = 2
    R: int = 0

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("rank must be >= 2")

    @property
    def q(self) -> int:
        return 2 * self.m - 1

    @property
    def delta(self) -> float:
        return math.log(self.q)

    @property
    def delta_symbolic(self) -> str:
        return f"log({self.q})"

    @property
    def constants(self) -> dict:
        return {"shadow_C": 0, "lambda": 1, "c": 0, "tau": 0, "thinness": 0, "R": self.R}

    def sphere_size(self, n: int) -> int:
        return 1 if n == 0 else 2 * self.m * self.q ** (n - 1)

    def ball_size(self, n: int) -> int:
        return sum(self.sphere_size(k) for k in range(n + 1))


def is_reduced(w) -> bool:
    w = parse_word(w)
    return all(w[i] != -w[i + 1] for i in range(len(w) - 1))


def _check_reduced(w, m=None):
    w = parse_word(w)
    if not all(w[i] != -w[i + 1] for i in range(len(w) - 1)):
        raise ValueError(f"word {format_word(w)} is not reduced")
    if m is not None and any(abs(x) > m for x in w):
        raise ValueError(f"word {format_word(w)} uses a letter outside F_{m}")
    return w


def gromov_product(u, v) -> int:
    """(u|v)_e in the tree: length of the longest common prefix."""
    u, v = _check_reduced(u), _check_reduced(v)
    t = 0
    for a, b in zip(u, v):
        if a != b:
            break
        t += 1
    return t


def word_distance(u, v) -> int:
    """d(u, v) = |reduce(u^-1 v)| by stack reduction."""
    return len(free_reduce(invert_word(parse_word(u)) + parse_word(v)))


def busemann(g, h) -> int:
    """beta_g(h, e) = d(g, h) - d(g, e) = |h| - 2 (g|h)."""
    h = _check_reduced(h)
    return len(h) - 2 * gromov_product(g, h)


@dataclass(frozen=True)
class CylinderShadow:
    """Boundary points whose reduced word starts with `prefix` (the shadow O(prefix))."""

    prefix: tuple
    m: int = 2

    def __post_init__(self):
        w = _check_reduced(self.prefix, self.m)
        if not w:
            raise ValueError("cylinder prefix must be nonempty")
        object.__setattr__(self, "prefix", w)

    def __len__(self):
        return len(self.prefix)

    def contains(self, ray) -> bool:
        ray = parse_word(ray)
        return tuple(ray[: len(self.prefix)]) == self.prefix


def ps_measure(c: CylinderShadow) -> Fraction:
    """rho(O(prefix)) = (2m)^-1 (2m-1)^-(|prefix|-1)."""
    return Fraction(1, 2 * c.m * (2 * c.m - 1) ** (len(c.prefix) - 1))


def cylinder_intersection(u, v, m: int = 2) -> Fraction:
    """rho(O(u) cap O(v)): the longer cylinder if nested, else 0."""
    u, v = parse_word(u), parse_word(v)
    short, long_ = (u, v) if len(u) <= len(v) else (v, u)
    if long_[: len(short)] != short:
        return Fraction(0)
    return ps_measure(CylinderShadow(long_, m))


def translate_cylinder(h, g) -> tuple:
    """Prefix of the cylinder h.O(g), valid when |h| < |g| (no full cancellation)."""
    h, g = parse_word(h), parse_word(g)
    if len(h) >= len(g):
        raise ValueError("translate needs |h| < |g|")
    return free_reduce(h + g)


# ---------------------------------------------------------------- word arrays

def to_codes(w) -> np.ndarray:
    return np.array([2 * (abs(x) - 1) + (x < 0) for x in parse_word(w)], dtype=np.int64)


def from_codes(c) -> tuple:
    return tuple((int(x) // 2 + 1) * (-1 if int(x) % 2 else 1) for x in c)


def sphere_codes(m: int, L: int) -> np.ndarray:
    """All reduced words of length L as an (|S_L|, L) code array in rank order."""
    return _build_sphere_codes(m, L)


def _sphere_codes(m: int, L: int) -> np.ndarray:
    """Read-only sphere_codes, cached for small layers (the X_a scans reuse them)."""
    return _cached_sphere_codes(m, L) if (2 * m - 1) ** L <= 10**6 else _build_sphere_codes(m, L)


@lru_cache(maxsize=32)
def _cached_sphere_codes(m: int, L: int) -> np.ndarray:
    w = _build_sphere_codes(m, L)
    w.flags.writeable = False
    return w


def _build_sphere_codes(m: int, L: int) -> np.ndarray:
    q = 2 * m - 1
    if L == 0:
        return np.zeros((1, 0), dtype=np.int64)
    w = np.arange(2 * m, dtype=np.int64)[:, None]
    for _ in range(L - 1):
        last = w[:, -1]
        inv = last ^ 1
        ch = np.tile(np.arange(q, dtype=np.int64), len(w))
        last_r = np.repeat(inv, q)
        nxt = ch + (ch >= last_r)
        w = np.concatenate([np.repeat(w, q, axis=0), nxt[:, None]], axis=1)
    return w


def rank_codes(w: np.ndarray, m: int) -> np.ndarray:
    """Inverse of sphere_codes: rank of each row among reduced words of its length."""
    q = 2 * m - 1
    w = np.asarray(w, dtype=np.int64)
    r = w[:, 0].copy()
    for p in range(1, w.shape[1]):
        inv = w[:, p - 1] ^ 1
        y = w[:, p]
        r = r * q + (y - (y > inv))
    return r


def sphere(m: int, n: int) -> list:
    return [from_codes(c) for c in sphere_codes(m, n)]


def sphere_layer_counts(m: int, n_max: int) -> list:
    """#S_n for n = 0..n_max by growing the tree one layer at a time.

    Each layer is stored as the array of last letters (parents are implicit in
    the repeat structure), so S_15 of F_2 costs ~19M bytes.
    """
    q = 2 * m - 1
    counts = [1]
    last = np.arange(2 * m, dtype=np.int8)
    counts.append(len(last))
    for _ in range(2, n_max + 1):
        inv = np.repeat(last ^ 1, q)
        ch = np.tile(np.arange(q, dtype=np.int8), len(last))
        last = (ch + (ch >= inv)).astype(np.int8)
        counts.append(len(last))
    return counts[: n_max + 1]


# ---------------------------------------------------------------- X_a sets

def x_a_set(g, n: int, a: int, R: int = 0, m: int = 2) -> list:
    """{h in S_n : n - 2a - R < -beta_g(h, e) <= n - 2a}.

    For R = 0 the half-open window is empty, so it is read as the closed
    degenerate window -beta = n - 2a, i.e. (g|h) = n - a.
    """
    codes = _sphere_codes(m, n)
    return [from_codes(c) for c in codes[x_a_indices(g, n, a, R, m)]]


def x_a_indices(g, n: int, a: int, R: int = 0, m: int = 2) -> np.ndarray:
    """Ranks (in sphere_codes order) of the elements of x_a_set(g, n, a, R)."""
    g = _check_reduced(g, m)
    if not len(g) > n:
        raise ValueError("x_a_set needs |g| > n")
    if not 0 <= a <= n:
        raise ValueError("need 0 <= a <= n")
    t = _common_prefix(_sphere_codes(m, n), to_codes(g)[:n])
    negb = 2 * t - n  # -beta_g(h,e) = 2(g|h) - |h|
    hi = n - 2 * a
    sel = (negb == hi) if R == 0 else ((negb > hi - R) & (negb <= hi))
    return np.nonzero(sel)[0]


def _common_prefix(words: np.ndarray, w: np.ndarray) -> np.ndarray:
    L = min(words.shape[1], len(w))
    if L == 0:
        return np.zeros(len(words), dtype=np.int64)
    eq = words[:, :L] == w[:L][None, :]
    return np.cumprod(eq, axis=1).sum(axis=1)


# ---------------------------------------------------------------- Q[sqrt q]

@dataclass(frozen=True)
class QuadraticNumber:
    """p + s*sqrt(q) with rational p, s."""

    p: Fraction
    s: Fraction
    q: int

    def __add__(self, o):
        assert o.q == self.q
        return QuadraticNumber(self.p + o.p, self.s + o.s, self.q)

    def __mul__(self, o):
        if isinstance(o, QuadraticNumber):
            return QuadraticNumber(self.p * o.p + self.s * o.s * self.q, self.p * o.s + self.s * o.p, self.q)
        o = Fraction(o)
        return QuadraticNumber(self.p * o, self.s * o, self.q)

    __rmul__ = __mul__

    def __float__(self):
        return float(self.p) + float(self.s) * math.sqrt(self.q)

    def sign(self) -> int:
        """Exact sign of p + s sqrt(q)."""
        p, s = self.p, self.s
        if p >= 0 and s >= 0:
            return int(p > 0 or s > 0)
        if p <= 0 and s <= 0:
            return -1
        # opposite signs: compare p^2 with q s^2
        d = p * p - self.q * s * s
        if d == 0:
            return 0
        return (1 if p > 0 else -1) if d > 0 else (1 if s > 0 else -1)

    def __lt__(self, o):
        return (self + o * -1).sign() < 0

    def __le__(self, o):
        return (self + o * -1).sign() <= 0

    def __str__(self):
        return f"{self.p} + {self.s}*sqrt({self.q})"


# ---------------------------------------------------------------- Pi matrix

@dataclass
class PiMatrix:
    """(Pi_r(mu))_{ij} = <pi(mu) chi_i, chi_j> = scale * (P_ij + S_ij sqrt(q)),
    rows/columns indexed by S_r in rank order."""

    m: int
    r: int
    n: int
    scale: Fraction
    P: sp.csr_matrix
    S: sp.csr_matrix
    measure_desc: str = ""

    @property
    def q(self):
        return 2 * self.m - 1

    @property
    def size(self):
        return self.P.shape[0]

    def entry(self, i: int, j: int) -> QuadraticNumber:
        return QuadraticNumber(self.scale * int(self.P[i, j]), self.scale * int(self.S[i, j]), self.q)

    def to_float(self) -> sp.csr_matrix:
        c = float(self.scale)
        return (self.P.astype(np.float64) * c + self.S.astype(np.float64) * (c * math.sqrt(self.q))).tocsr()

    def is_symmetric(self) -> bool:
        return (self.P != self.P.T).nnz == 0 and (self.S != self.S.T).nnz == 0

    def is_nonnegative(self) -> bool:
        return (self.P.data >= 0).all() and (self.S.data >= 0).all()

    def column_sums(self) -> list:
        ps = np.asarray(self.P.sum(axis=0)).ravel()
        ss = np.asarray(self.S.sum(axis=0)).ravel()
        return [QuadraticNumber(self.scale * int(a), self.scale * int(b), self.q) for a, b in zip(ps, ss)]

    def gershgorin(self) -> float:
        """Max column l1 sum (entries are nonnegative)."""
        ps = np.asarray(self.P.sum(axis=0)).ravel()
        ss = np.asarray(self.S.sum(axis=0)).ravel()
        # exact max: compare as quadratic numbers only among float-near candidates
        vals = ps.astype(np.float64) + ss.astype(np.float64) * math.sqrt(self.q)
        j = int(np.argmax(vals))
        return float(QuadraticNumber(self.scale * int(ps[j]), self.scale * int(ss[j]), self.q))

    def dense_norm(self) -> float:
        a = self.to_float().toarray()
        return float(np.abs(np.linalg.eigvalsh((a + a.T) / 2)).max())

    def dump_csv(self, path) -> None:
        a = self.to_float().toarray()
        with open(path, "w") as fh:
            fh.write(f"# m={self.m} r={self.r} n={self.n} measure={self.measure_desc}\n")
            for row in a:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _measure_on_words(model, n, measure):
    """Normalise the measure argument to [(codes, Fraction weight)]."""
    if measure is None:
        if n < 1:
            raise ValueError("no shell S_0: n must be >= 1")
        codes = sphere_codes(model.m, n)
        w = Fraction(1, len(codes))
        return [(c, w) for c in codes]
    items = [(parse_word(h), Fraction(w)) for h, w in (measure.items() if isinstance(measure, dict) else measure)]
    if sum(w for _, w in items) != 1 or any(w <= 0 for _, w in items):
        raise ValueError("measure weights must be positive and sum to 1")
    for h, _ in items:
        _check_reduced(h, model.m)
        if len(h) == 0:
            raise ValueError("atoms must be nontrivial")
    return [(to_codes(h), w) for h, w in items]


def build_pi_matrix(model: BoundaryModel, r: int, n: int, measure=None, budget: int = 5 * 10**7) -> PiMatrix:
    """Exact Pi_r(mu) for mu uniform on S_n (default) or a given word measure.

    For h (|h| = l < r) and the cylinder O_j = O(g_j), let t = (h|g_j).  On
    O_j the RN derivative dh_*rho/drho equals q^{2t - l}, and h^-1 maps O_j
    onto the cylinder of w = reduce(h^-1 g_j), |w| = l + r - 2t.  If |w| >= r
    the whole of O_j lands in O_i for the single i = w[:r]; otherwise O_j
    splits into the q^{r-|w|} sub-cylinders g_j z with i = w z.
    """
    m, q = model.m, model.q
    atoms = _measure_on_words(model, n, measure)
    lmax = max(len(c) for c, _ in atoms)
    if not r > lmax:
        raise ValueError("need r > n (atoms shorter than the cylinder length)")
    G = sphere_codes(m, r)
    N = len(G)
    if N > 10**6:
        raise BudgetExceeded(f"|S_r| = {N} too large")
    D = math.lcm(*(w.denominator for _, w in atoms))
    E = 2 * r + lmax
    wmax = max(int(w * D) for _, w in atoms)
    if wmax * q ** E * len(atoms) * N >= 2**62:
        raise BudgetExceeded("entries exceed exact int64 scaling; lower r")
    rows, cols, vals, sq = [], [], [], []
    total = 0
    jall = np.arange(N, dtype=np.int64)
    for hc, w in atoms:
        l = len(hc)
        wn = int(w * D)
        t_all = _common_prefix(G, hc)
        half = (l + 1) // 2
        odd = l % 2 == 1
        for t in range(0, l + 1):
            J = jall[t_all == t]
            if not len(J):
                continue
            u = (hc[t:][::-1] ^ 1)  # h[t:]^-1
            wl = l + r - 2 * t
            if wl >= r:
                word = np.concatenate([np.broadcast_to(u, (len(J), len(u))), G[J, t: t + r - len(u)]], axis=1)
                I = rank_codes(word, m)
                Lc = r
                val = wn * q ** (E + t - half - Lc + 1)
                rows.append(I)
                cols.append(J)
                vals.append(np.full(len(J), val, dtype=np.int64))
                sq.append(np.full(len(J), odd))
            else:
                word = np.concatenate([np.broadcast_to(u, (len(J), len(u))), G[J, t:]], axis=1)
                e = r - wl
                base = rank_codes(word, m) * q ** e
                fan = q ** e
                I = (base[:, None] + np.arange(fan, dtype=np.int64)[None, :]).ravel()
                Lc = 2 * r - wl
                val = wn * q ** (E + t - half - Lc + 1)
                rows.append(I)
                cols.append(np.repeat(J, fan))
                vals.append(np.full(len(I), val, dtype=np.int64))
                sq.append(np.full(len(I), odd))
            total += len(rows[-1])
            if total > budget:
                raise BudgetExceeded(f"Pi matrix assembly exceeds {budget} contributions")
    rows, cols, vals, sq = map(np.concatenate, (rows, cols, vals, sq))
    P = sp.coo_matrix((np.where(sq, 0, vals), (rows, cols)), shape=(N, N), dtype=np.int64).tocsr()
    S = sp.coo_matrix((np.where(sq, vals, 0), (rows, cols)), shape=(N, N), dtype=np.int64).tocsr()
    P.eliminate_zeros()
    S.eliminate_zeros()
    scale = Fraction(1, D * 2 * m * q ** E)
    desc = f"uniform on S_{n}" if measure is None else f"{len(atoms)} atoms"
    return PiMatrix(m, r, n, scale, P, S, desc)


def gershgorin_closed_form(model: BoundaryModel, r: int, n: int) -> float:
    """Column sum of Pi_r(mu_n) for mu_n uniform on S_n, from counting Gromov products:
    rho(O) q^{-n/2} (2q + (n-1)(q-1)) / (q+1)."""
    q = model.q
    rho = Fraction(1, 2 * model.m * q ** (r - 1))
    return float(rho * Fraction(2 * q + (n - 1) * (q - 1), q + 1)) * q ** (-n / 2)


def verify_matrixnorm(model: BoundaryModel, pairs, dense_limit: int = 500) -> dict:
    """Gershgorin bound G(r,n) per pair and the ratio G e^{delta r + delta n/2} / n^2."""
    rows = []
    for r, n in pairs:
        pi = build_pi_matrix(model, r, n)
        G = pi.gershgorin()
        ratio = G * model.q ** (r + n / 2) / n**2
        row = {"r": r, "n": n, "size": pi.size, "G": G, "ratio": ratio,
               "symmetric": pi.is_symmetric(), "nonnegative": bool(pi.is_nonnegative())}
        if pi.size <= dense_limit:
            row["dense_norm"] = pi.dense_norm()
        rows.append(row)
    C = max(x["ratio"] for x in rows)
    # regression of log G against r at fixed n
    slopes = {}
    for n in sorted({x["n"] for x in rows}):
        pts = [(x["r"], math.log(x["G"])) for x in rows if x["n"] == n]
        if len(pts) >= 2:
            rr = np.array([a for a, _ in pts], float)
            yy = np.array([b for _, b in pts])
            slopes[n] = float(np.polyfit(rr, yy, 1)[0])
    dense_ok = all(x["dense_norm"] <= x["G"] * (1 + 1e-12) for x in rows if "dense_norm" in x)
    return {"rows": rows, "C": C, "bounded": all(x["ratio"] <= C for x in rows),
            "dense_dominated": dense_ok, "log_G_slope_in_r": slopes, "delta": model.delta}


def shadow_overlap_sum(model: BoundaryModel, gi, h, r: int) -> Fraction:
    """sum_j rho(O_i cap h O_j) over g_j in S_r, computed cylinder by cylinder."""
    gi = _check_reduced(gi, model.m)
    h = _check_reduced(h, model.m)
    if len(gi) != r or len(h) >= r:
        raise ValueError("need |g_i| = r > |h|")
    tot = Fraction(0)
    for gj in sphere(model.m, r):
        tot += cylinder_intersection(gi, translate_cylinder(h, gj), model.m)
    return tot


def pi_entries_monte_carlo(model: BoundaryModel, r: int, measure, samples: int, seed: int):
    """Monte Carlo estimate of Pi_r(mu) over rho-random boundary rays.

    Returns (mean, standard error) as dense arrays.
    """
    m, q = model.m, model.q
    atoms = _measure_on_words(model, None, measure)
    lmax = max(len(c) for c, _ in atoms)
    L = r + lmax + 1
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    # rho-random rays truncated to L letters
    ray = np.empty((samples, L), dtype=np.int64)
    ray[:, 0] = rng.integers(0, 2 * m, samples)
    for p in range(1, L):
        ch = rng.integers(0, q, samples)
        inv = ray[:, p - 1] ^ 1
        ray[:, p] = ch + (ch >= inv)
    N = 2 * m * q ** (r - 1)
    j = rank_codes(ray[:, :r], m)
    keys, vals = [], []
    for hc, w in atoms:
        l = len(hc)
        t = _common_prefix(ray, hc)
        out = np.empty((samples, r), dtype=np.int64)
        for tv in np.unique(t):
            sel = t == tv
            u = hc[tv:][::-1] ^ 1
            tail = ray[sel, tv: tv + r - len(u)]
            out[sel] = np.concatenate([np.broadcast_to(u, (sel.sum(), len(u))), tail], axis=1)
        i = rank_codes(out, m)
        keys.append(np.arange(samples) * (N * N) + i * N + j)
        vals.append(float(w) * q ** (t - l / 2))
    keys = np.concatenate(keys)
    vals = np.concatenate(vals)
    uk, inv = np.unique(keys, return_inverse=True)
    per = np.bincount(inv, weights=vals)  # per (sample, cell) value
    cell = uk % (N * N)
    s1 = np.bincount(cell, weights=per, minlength=N * N)
    s2 = np.bincount(cell, weights=per * per, minlength=N * N)
    mean = s1 / samples
    var = np.maximum(s2 / samples - mean**2, 0)
    se = np.sqrt(var / (samples - 1))
    return mean.reshape(N, N), se.reshape(N, N)


# ---------------------------------------------------------------- radial walks

def _sphere_kernel(m: int, n: int, L: int) -> dict:
    """Law of |g h| for fixed |g| = L and h uniform on S_n."""
    q = 2 * m - 1
    if L == 0:
        return {n: Fraction(1)}
    tmax = min(L, n)
    tail = [Fraction(1)] + [Fraction(1, 2 * m * q ** (s - 1)) for s in range(1, tmax + 1)] + [Fraction(0)]
    return {L + n - 2 * s: tail[s] - tail[s + 1] for s in range(tmax + 1)}


def sphere_walk_distribution(m: int, n: int, steps: int) -> list:
    """Exact laws of |X_k|, k = 0..steps, for the walk with uniform steps on S_n.

    Radial measures on the free group convolve to radial measures, so the
    distance to the identity is a Markov chain with the kernel above.
    """
    dist = {0: Fraction(1)}
    out = [dist]
    cache = {}
    for _ in range(steps):
        nxt = {}
        for L, p in dist.items():
            if L not in cache:
                cache[L] = _sphere_kernel(m, n, L)
            for L2, k in cache[L].items():
                if k:
                    nxt[L2] = nxt.get(L2, 0) + p * k
        dist = nxt
        out.append(dist)
    return out


def exact_sphere_drift(m: int, n: int, steps: int) -> Fraction:
    """E|X_steps| / steps for the uniform-S_n walk."""
    d = sphere_walk_distribution(m, n, steps)[-1]
    return sum(L * p for L, p in d.items()) / steps


def sphere_return_probabilities(m: int, n: int, K: int):
    """Exact mu_n^{*2k}(e) and r_k = mu_n^{*2k}(e)^{1/(2k)} for k = 1..K."""
    laws = sphere_walk_distribution(m, n, 2 * K)
    p = [laws[2 * k].get(0, Fraction(0)) for k in range(1, K + 1)]
    r = [math.exp((math.log(x.numerator) - math.log(x.denominator)) / (2 * k)) if x else 0.0
         for k, x in enumerate(p, start=1)]
    return r, p


def sphere_operator_norm(m: int, n: int) -> float:
    """||lambda(mu_n)|| for mu_n uniform on S_n of F_m: q^{-n/2}(1 + n(q-1)/(q+1))."""
    q = 2 * m - 1
    return q ** (-n / 2) * (1 + n * (q - 1) / (q + 1))
