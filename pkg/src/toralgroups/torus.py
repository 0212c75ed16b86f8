"""SL2(Z) acting on the torus: points, distances, shrinking targets, and the
exact ergodic-average error for characters.

Points come in two modes.  Exact points have rational coordinates.  Real
points are dyadic numbers k / 2^bits (bits >= 128) standing for a real number
within `err` of them; orbit scans over real points run in exact 128-bit
fixed-point arithmetic (two uint64 limbs, wrapping mod 1), so the only error
is the inherited `err` scaled by the row sums of g.
"""
from __future__ import annotations

import ast
import math
import operator
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from mpmath import mp

from .errors import DimensionMismatch
from .group_enum import BallIndex, GroupMeasure, enumerate_ball
from .matrix_core import GroupElement, GroupPresentation, format_word

BORDERLINE_TOL = 1e-10
REAL_BITS = 128


# ---------------------------------------------------------------- literals

_FUNCS = {"sqrt": mp.sqrt, "log": mp.log, "exp": mp.exp, "cbrt": mp.cbrt}
_CONSTS = {"pi": lambda: +mp.pi, "e": lambda: +mp.e}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


def parse_real(text, prec_bits: int = 256):
    """Evaluate a coordinate literal such as 'sqrt2-1', 'sqrt(3)-1', '1/7', '0.25'."""
    if not isinstance(text, str):
        return mp.mpf(text)
    s = re.sub(r"sqrt(\d+)", r"sqrt(\1)", text.strip())
    with mp.workprec(prec_bits):
        def ev(node):
            if isinstance(node, ast.Expression):
                return ev(node.body)
            if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
                return mp.mpf(str(node.value)) if isinstance(node.value, float) else mp.mpf(node.value)
            if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
                return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
            if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
                v = ev(node.operand)
                return -v if isinstance(node.op, ast.USub) else v
            if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
                return _FUNCS[node.func.id](*[ev(a) for a in node.args])
            if isinstance(node, ast.Name) and node.id in _CONSTS:
                return _CONSTS[node.id]()
            raise ValueError(f"unsupported literal {text!r}")

        return ev(ast.parse(s, mode="eval"))


def parse_coordinate(text):
    """Rational literal -> Fraction, otherwise None."""
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, str) and re.fullmatch(r"\s*-?\d+(\s*/\s*\d+)?\s*", text):
        return Fraction(text.replace(" ", ""))
    return None


# ---------------------------------------------------------------- points

@dataclass(frozen=True)
class TorusPoint:
    coords: tuple
    exact: bool = True
    err: Fraction = Fraction(0)
    label: str = field(default="", compare=False)

    def __post_init__(self):
        cs = tuple(Fraction(c) % 1 for c in self.coords)
        object.__setattr__(self, "coords", cs)
        object.__setattr__(self, "err", Fraction(self.err))

    @property
    def dim(self) -> int:
        return len(self.coords)

    @classmethod
    def rational(cls, *xs):
        return cls(tuple(Fraction(x) for x in xs), True)

    @classmethod
    def real(cls, values, bits: int = REAL_BITS, label: str = ""):
        """Dyadic approximation (floor at 2^-bits) of real coordinates."""
        cs = []
        with mp.workprec(bits + 64):
            for v in values:
                x = parse_real(v, bits + 64) if isinstance(v, str) else mp.mpf(v)
                k = int(mp.floor(x * mp.mpf(2) ** bits)) % (1 << bits)
                cs.append(Fraction(k, 1 << bits))
        return cls(tuple(cs), False, Fraction(1, 1 << bits), label or ",".join(map(str, values)))

    @classmethod
    def parse(cls, values, bits: int = REAL_BITS):
        """Exact if every coordinate is a rational literal, real otherwise."""
        fr = [parse_coordinate(v) for v in values]
        if all(f is not None for f in fr):
            return cls(tuple(fr), True, label=",".join(map(str, values)))
        return cls.real(values, bits)

    @classmethod
    def random(cls, seed: int, d: int = 2, bits: int = REAL_BITS, stream: int = 0):
        """Uniform point from the counter-based Philox stream keyed by (seed, stream)."""
        g = np.random.Generator(np.random.Philox(key=int(seed), counter=int(stream)))
        words = g.integers(0, 2**64, size=(d, bits // 64), dtype=np.uint64)
        cs = []
        for row in words:
            k = 0
            for w in row:
                k = (k << 64) | int(w)
            cs.append(Fraction(k, 1 << bits))
        return cls(tuple(cs), False, Fraction(1, 1 << bits), f"random(seed={seed},stream={stream})")

    def as_floats(self) -> np.ndarray:
        return np.array([float(c) for c in self.coords])

    def __repr__(self):
        if self.exact:
            return f"TorusPoint({', '.join(str(c) for c in self.coords)})"
        return f"TorusPoint(~[{', '.join(f'{float(c):.17g}' for c in self.coords)}])"


def act(g: GroupElement, x: TorusPoint) -> TorusPoint:
    """g.x = g x mod 1 (exact on the stored coordinates)."""
    if g.dim != x.dim:
        raise DimensionMismatch(f"{g.dim}x{g.dim} matrix on a {x.dim}-torus")
    cs = tuple(sum(g.entries[i][j] * x.coords[j] for j in range(g.dim)) for i in range(g.dim))
    err = x.err * max(sum(abs(v) for v in row) for row in g.entries) if x.err else Fraction(0)
    return TorusPoint(cs, x.exact, err, x.label)


def _wrap(d: Fraction) -> Fraction:
    d = d % 1
    return min(d, 1 - d)


def torus_dist_exact(x: TorusPoint, y: TorusPoint, norm: str = "euclidean") -> Fraction:
    """Squared euclidean distance, or sup distance, as an exact rational."""
    if x.dim != y.dim:
        raise DimensionMismatch("points of different dimension")
    ds = [_wrap(a - b) for a, b in zip(x.coords, y.coords)]
    if norm == "euclidean":
        return sum(d * d for d in ds)
    if norm == "sup":
        return max(ds)
    raise ValueError(f"unknown norm {norm!r}")


def torus_dist(x: TorusPoint, y: TorusPoint, norm: str = "euclidean") -> float:
    v = torus_dist_exact(x, y, norm)
    if norm == "euclidean":
        with mp.workprec(80):
            return float(mp.sqrt(mp.mpf(v.numerator) / v.denominator))
    return float(v)


# ---------------------------------------------------------------- targets

@dataclass(frozen=True)
class TargetFamily:
    """Targ_r around `center`.  euclidean-ball: |z - y| < r, measure pi r^2.
    sup-box: |z - y|_inf < s/2 with side s = r ("raw", measure r^d) or
    s = sqrt(pi) r ("area", measure pi r^2 in d = 2).  annulus: r0 <= |z - y| <
    sqrt(r0^2 + r^2), measure pi r^2."""

    kind: str = "euclidean-ball"
    center: TorusPoint | None = None
    convention: str = "raw"
    inner: float = 0.0

    def __post_init__(self):
        if self.kind not in ("euclidean-ball", "sup-box", "annulus"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.convention not in ("raw", "area"):
            raise ValueError("convention must be 'raw' or 'area'")

    def measure(self, r: float, d: int = 2) -> float:
        if self.kind == "sup-box":
            s = r * math.sqrt(math.pi) if self.convention == "area" else r
            return s**d
        return math.pi * r * r

    def contains_offsets(self, delta: np.ndarray, r: np.ndarray):
        """(inside, margin) for wrapped offsets delta (N, d) and radii r (N,).
        margin is the signed distance of the test quantity to its threshold."""
        if self.kind == "euclidean-ball":
            dist = np.sqrt((delta * delta).sum(axis=1))
            return dist < r, dist - r
        if self.kind == "sup-box":
            s = r * math.sqrt(math.pi) if self.convention == "area" else r
            dist = np.abs(delta).max(axis=1)
            return dist < s / 2, dist - s / 2
        dist = np.sqrt((delta * delta).sum(axis=1))
        outer = np.sqrt(self.inner**2 + r * r)
        inside = (dist >= self.inner) & (dist < outer)
        margin = np.maximum(self.inner - dist, dist - outer)
        return inside, margin


@dataclass(frozen=True)
class PsiSpec:
    """psi(R) = R^-a (log R)^b."""

    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("psi exponent a must be >= 0")

    def __call__(self, R):
        R = np.asarray(R, dtype=np.float64)
        return R ** (-self.a) * np.log(R) ** self.b


def classify_psi(psi: PsiSpec, delta: float) -> str:
    """Convergence regime of psi(R) = R^-a log^b R against critical exponent delta.

    finite: sum n^{2 delta - 1} psi(n)^2 < inf; infinite: sum (log n)^4
    n^{-2 delta - 1} psi(n)^-2 < inf.  Borderline a = delta is decided by the
    log exponent: 2b < -1 resp. 4 - 2b < -1.
    """
    a, b = psi.a, psi.b
    if a > delta or (a == delta and b < -0.5):
        return "finite-regime"
    if a < delta or (a == delta and b > 2.5):
        return "infinite-regime"
    return "gap"


# ---------------------------------------------------------------- orbit offsets

_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.int64(32)


def _mul128(coef: np.ndarray, hi: np.uint64, lo: np.uint64):
    """coef * (hi 2^64 + lo) mod 2^128 for int64 coef with |coef| < 2^31."""
    cu = coef.astype(np.uint64)
    lo_p = cu * lo
    t0 = coef * np.int64(lo & _M32)
    t1 = coef * np.int64(lo >> np.uint64(32)) + (t0 >> _S32)
    carry = (t1 >> _S32).astype(np.uint64)
    hi_p = cu * hi + carry
    return hi_p, lo_p


def _add128(h1, l1, h2, l2):
    lo = l1 + l2
    c = (lo < l1).astype(np.uint64)
    return h1 + h2 + c, lo


def _limbs(c: Fraction, bits: int):
    k = c.numerator * ((1 << bits) // c.denominator)
    k >>= bits - 128
    return np.uint64(k >> 64), np.uint64(k & ((1 << 64) - 1))


def _to_float128(hi, lo) -> np.ndarray:
    return hi.astype(np.float64) * 2.0**-64 + lo.astype(np.float64) * 2.0**-128


def _is_dyadic128(x: TorusPoint) -> bool:
    return all(c.denominator & (c.denominator - 1) == 0 and c.denominator <= 1 << 128 for c in x.coords)


def orbit_offsets(mats: np.ndarray, x: TorusPoint, y: TorusPoint):
    """Wrapped offsets g.x - y in [-1/2, 1/2)^2 for every row g of mats (N, 4),
    plus an absolute error bound per row (0 for exact points)."""
    if x.dim != 2 or y.dim != 2:
        raise DimensionMismatch("orbit scans are implemented for d = 2")
    N = len(mats)
    rowsum = None
    if mats.dtype != object:
        big = int(np.abs(mats).max()) if N else 0
    else:
        big = max((abs(int(v)) for v in mats.ravel()), default=0)
    if x.exact or not _is_dyadic128(x):
        Q = math.lcm(*(c.denominator for c in x.coords))
        nx = [int(c * Q) for c in x.coords]
        Qy = math.lcm(*(c.denominator for c in y.coords))
        ny = [int(c * Qy) for c in y.coords]
        QQ = Q * Qy
        if mats.dtype != object and big * Q * 2 < 2**62 and QQ < 2**52:
            m = mats
            z1 = (m[:, 0] * nx[0] + m[:, 1] * nx[1]) % Q
            z2 = (m[:, 2] * nx[0] + m[:, 3] * nx[1]) % Q
            d1 = (z1 * Qy - ny[0] * Q) % QQ
            d2 = (z2 * Qy - ny[1] * Q) % QQ
            delta = np.stack([d1, d2], axis=1).astype(np.float64) / QQ
        else:
            m = mats.astype(object)
            z1 = (m[:, 0] * nx[0] + m[:, 1] * nx[1]) % Q
            z2 = (m[:, 2] * nx[0] + m[:, 3] * nx[1]) % Q
            d1 = (z1 * Qy - ny[0] * Q) % QQ
            d2 = (z2 * Qy - ny[1] * Q) % QQ
            delta = np.array([[float(Fraction(int(a), QQ)), float(Fraction(int(b), QQ))]
                              for a, b in zip(d1, d2)]).reshape(-1, 2)
        delta = np.where(delta >= 0.5, delta - 1.0, delta)
        err = np.zeros(N)
        if x.err:
            rowsum = np.maximum(np.abs(mats[:, 0]) + np.abs(mats[:, 1]),
                                np.abs(mats[:, 2]) + np.abs(mats[:, 3])).astype(np.float64)
            err = rowsum * float(x.err) + 4e-16
        return delta, err
    # real mode: exact 128-bit fixed point
    yf = np.array([float(c) for c in y.coords])
    if mats.dtype != object and big < 2**30:
        (h1, l1), (h2, l2) = _limbs(x.coords[0], 128), _limbs(x.coords[1], 128)
        m = mats
        za = _add128(*_mul128(m[:, 0], h1, l1), *_mul128(m[:, 1], h2, l2))
        zb = _add128(*_mul128(m[:, 2], h1, l1), *_mul128(m[:, 3], h2, l2))
        z = np.stack([_to_float128(*za), _to_float128(*zb)], axis=1)
    else:
        K = 1 << 128
        k = [int(c * K) for c in x.coords]
        m = mats.astype(object)
        z1 = (m[:, 0] * k[0] + m[:, 1] * k[1]) % K
        z2 = (m[:, 2] * k[0] + m[:, 3] * k[1]) % K
        z = np.array([[int(a) / K, int(b) / K] for a, b in zip(z1, z2)]).reshape(-1, 2)
    delta = (z - yf) % 1.0
    delta = np.where(delta >= 0.5, delta - 1.0, delta)
    rowsum = np.maximum(np.abs(mats[:, 0]) + np.abs(mats[:, 1]),
                        np.abs(mats[:, 2]) + np.abs(mats[:, 3])).astype(np.float64)
    err = rowsum * float(x.err) + float(y.err) + 4e-16
    return delta, err


# ---------------------------------------------------------------- scans

@dataclass
class Witness:
    matrix: tuple
    word: str
    displacement: float
    distance: float

    def to_dict(self):
        return {"matrix": [[str(v) for v in self.matrix[:2]], [str(v) for v in self.matrix[2:]]],
                "word": self.word, "displacement": self.displacement, "distance": self.distance}


@dataclass
class ShrinkResult:
    radii: list
    counts: list             # N(n): solutions with d(g, e) <= n
    new_in_shell: list       # N(n) - N(n-1)
    hits: np.ndarray         # ball indices of the solutions, sorted canonically
    borderline: np.ndarray   # ball indices flagged within tolerance and not counted
    distances: np.ndarray    # achieved distance per hit
    ball: BallIndex = field(repr=False)
    threshold: str = ""

    def witnesses(self, limit: int | None = None) -> list:
        out = []
        for i, dist in zip(self.hits[:limit], self.distances[:limit]):
            g = self.ball.element(int(i))
            out.append(Witness(g.flat, format_word(g.word), float(self.ball.disp[i]), float(dist)))
        return out

    def shell_hits(self, k: int = 1) -> list:
        """(n, exists a solution with displacement in (n-k, n]) for each n."""
        return [(n, self.counts[n] - self.counts[max(n - k, 0)] > 0 if n >= k else self.counts[n] > 0)
                for n in self.radii]


def _as_ball(p, max_radius: int) -> BallIndex:
    if isinstance(p, BallIndex):
        if p.radius < max_radius:
            raise ValueError(f"ball radius {p.radius} < requested {max_radius}")
        return p.truncate(max_radius)
    return enumerate_ball(p, max_radius)


def _sigma(ball: BallIndex) -> np.ndarray:
    """sigma_max(g) = exp(d/2) for each element (float)."""
    return np.exp(ball.disp / 2)


def _radii(ball: BallIndex, alpha=None, psi: PsiSpec | None = None):
    sig = _sigma(ball)
    if psi is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(sig >= 2, psi(np.maximum(sig, 2)), np.nan)
        return r, sig >= 2
    return sig ** (-float(alpha)), np.ones(len(sig), dtype=bool)


def _resolve_exact(ball, idx, x, y, alpha, psi, target) -> np.ndarray:
    """Decide borderline exact-mode cases at high precision: 1 hit, 0 miss, -1 unresolved."""
    out = np.zeros(len(idx), dtype=np.int64)
    if target.kind != "euclidean-ball":
        return out - 1
    with mp.workprec(256):
        for k, i in enumerate(idx):
            g = ball.element(int(i))
            d2 = torus_dist_exact(act(g, x), y)
            F = g.frobenius_sq
            s2 = (mp.mpf(F) + mp.sqrt(mp.mpf(F * F - 4))) / 2
            if psi is not None:
                r2 = (s2 ** (-psi.a)) * (mp.log(s2) / 2) ** (2 * psi.b)
            else:
                r2 = s2 ** (-mp.mpf(alpha))
            diff = mp.mpf(d2.numerator) / d2.denominator - r2
            out[k] = -1 if abs(diff) < mp.mpf(2) ** -200 else int(diff < 0)
    return out


def solve_shrinking_target(p, x: TorusPoint, y: TorusPoint, alpha=None, psi: PsiSpec | None = None,
                           max_radius: int = 10, target: TargetFamily | None = None,
                           tol: float = BORDERLINE_TOL) -> ShrinkResult:
    """Count g in B_n with g.x in Targ_{r(g)}(y), r(g) = ||g||^-alpha or psi(||g||).

    With psi, only g with ||g|| >= 2 are tested.  Borderline cases (test
    quantity within tol + propagated error of the threshold) are resolved
    exactly for rational points and otherwise reported, never counted.
    """
    if (alpha is None) == (psi is None):
        raise ValueError("give exactly one of alpha, psi")
    target = target or TargetFamily("euclidean-ball", y)
    ball = _as_ball(p, max_radius)
    mats = ball.matrix_array()
    delta, err = orbit_offsets(mats, x, y)
    r, tested = _radii(ball, alpha, psi)
    inside, margin = target.contains_offsets(delta, np.where(tested, r, 0.0))
    band = tol + err
    border = tested & (np.abs(margin) <= band)
    hit = tested & inside & ~border
    bidx = np.nonzero(border)[0]
    unresolved = bidx
    if len(bidx) and x.exact and y.exact:
        dec = _resolve_exact(ball, bidx, x, y, alpha, psi, target)
        hit[bidx[dec == 1]] = True
        unresolved = bidx[dec == -1]
    hidx = np.nonzero(hit)[0]
    dist = np.sqrt((delta[hidx] ** 2).sum(axis=1))
    # canonical order: displacement level, then matrix entries
    order = np.lexsort(tuple(mats[hidx, c] for c in (3, 2, 1, 0)) + (ball.level[hidx],)) if len(hidx) else []
    hidx, dist = hidx[order], dist[order]
    lev = ball.level[hidx]
    per = np.bincount(lev, minlength=max_radius + 1)[: max_radius + 1]
    counts = np.cumsum(per).tolist()
    thr = f"psi(a={psi.a},b={psi.b})" if psi is not None else f"alpha={alpha}"
    return ShrinkResult(list(range(max_radius + 1)), counts, per.tolist(), hidx, unresolved, dist, ball, thr)


@dataclass
class ExponentTable:
    alphas: list
    radii: list
    counts: np.ndarray      # (len(alphas), len(radii))
    borderline: np.ndarray  # per alpha, number of flagged cases

    def slope(self, j: int, lo: int, hi: int | None = None) -> float:
        """Least-squares slope of log N(n, alpha_j) over n in [lo, hi]."""
        hi = self.radii[-1] if hi is None else hi
        n = np.array([m for m in self.radii if lo <= m <= hi], dtype=np.float64)
        c = self.counts[j, [self.radii.index(int(m)) for m in n]]
        if (c <= 0).any():
            return float("nan")
        return float(np.polyfit(n, np.log(c), 1)[0])


def exponent_scan(p, x: TorusPoint, y: TorusPoint, alphas, max_radius: int,
                  tol: float = BORDERLINE_TOL) -> ExponentTable:
    """N(n, alpha) for all alphas from one pass over the ball (euclidean targets)."""
    ball = _as_ball(p, max_radius)
    mats = ball.matrix_array()
    delta, err = orbit_offsets(mats, x, y)
    dist = np.sqrt((delta * delta).sum(axis=1))
    # log r = -alpha * d / 2; compare log dist with it
    half = ball.disp / 2
    out = np.zeros((len(alphas), max_radius + 1), dtype=np.int64)
    nb = np.zeros(len(alphas), dtype=np.int64)
    for j, a in enumerate(alphas):
        r = np.exp(-float(a) * half)
        border = np.abs(dist - r) <= tol + err
        hit = (dist < r) & ~border
        if border.any() and x.exact and y.exact:
            bidx = np.nonzero(border)[0]
            dec = _resolve_exact(ball, bidx, x, y, a, None, TargetFamily())
            hit[bidx[dec == 1]] = True
            nb[j] = int((dec == -1).sum())
        else:
            nb[j] = int(border.sum())
        per = np.bincount(ball.level[hit], minlength=max_radius + 1)[: max_radius + 1]
        out[j] = np.cumsum(per)
    return ExponentTable(list(alphas), list(range(max_radius + 1)), out, nb)


def expected_count(alpha: float, n: float, delta: float = 1.0) -> float:
    """Heuristic E N(n) for a lattice (#B_n ~ e^{delta n}/2 for the Sanov group):
    sum over shells of #shell * pi ||g||^{-2 alpha}, with ||g||^2 = e^d."""
    if alpha == 0:
        return math.exp(delta * n) / 2
    rate = delta - alpha
    return (math.pi / 2) * delta / rate * (math.exp(rate * n) - 1) if rate else (math.pi / 2) * n


# ---------------------------------------------------------------- ergodic averages

def ergodic_character_error(S: GroupMeasure, b) -> Fraction:
    """||A e_b||_2^2 = |S|^-2 #{(g, h) in S x S : g^T b = h^T b} (uniform S)."""
    b = tuple(int(v) for v in b)
    if all(v == 0 for v in b):
        raise ValueError("b must be nonzero")
    if len(set(S.weights)) != 1:
        raise ValueError("ergodic average needs a uniform measure")
    counts = {}
    for g in S.atoms:
        img = tuple(sum(g.entries[i][j] * b[i] for i in range(g.dim)) for j in range(g.dim))
        counts[img] = counts.get(img, 0) + 1
    n = len(S.atoms)
    return Fraction(sum(c * c for c in counts.values()), n * n)


def ergodic_character_error_mc(S: GroupMeasure, b, samples: int, seed: int):
    """Monte Carlo E_x |(1/|S|) sum_g e(<b, g.x>)|^2 over uniform x.  Returns (mean, se)."""
    b = np.array([int(v) for v in b], dtype=np.int64)
    imgs = {}
    for g in S.atoms:
        M = np.array(g.entries, dtype=np.int64)
        key = tuple(M.T @ b)
        imgs[key] = imgs.get(key, 0) + 1
    keys = np.array(list(imgs.keys()), dtype=np.float64)
    mult = np.array(list(imgs.values()), dtype=np.float64) / len(S.atoms)
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    vals = np.empty(samples)
    chunk = 20000
    for s in range(0, samples, chunk):
        xs = rng.random((min(chunk, samples - s), 2))
        ph = np.exp(2j * np.pi * (xs @ keys.T))
        avg = ph @ mult
        vals[s: s + len(xs)] = np.abs(avg) ** 2
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


def pushforward_hit_rate(g: GroupElement, y: TorusPoint, r: float, samples: int, seed: int,
                         target: TargetFamily | None = None):
    """Fraction of uniform x with g.x in Targ_r(y); should be the target measure."""
    target = target or TargetFamily("euclidean-ball", y)
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    xs = rng.random((samples, 2))
    M = np.array(g.entries, dtype=np.float64)
    z = (xs @ M.T) % 1.0
    delta = (z - np.array([float(c) for c in y.coords])) % 1.0
    delta = np.where(delta >= 0.5, delta - 1.0, delta)
    inside, _ = target.contains_offsets(delta, np.full(samples, r))
    p = inside.mean()
    return float(p), float(math.sqrt(max(p * (1 - p), 1e-300) / samples))
