"""Ball and shell enumeration, growth fits, shell measures, and the random-walk
quantities (drift, entropy, return probabilities) attached to them.

Two enumeration engines share one interface:
  * a vectorised numpy engine for 2x2 matrices whose entries fit in int64,
    deduplicating by a 64-bit hash of the entries (hash hits are confirmed
    against the stored matrices, so a hash collision cannot merge elements);
  * a pure-Python engine keyed by exact entry tuples, used for big entries
    and d >= 3.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import BudgetExceeded, FreenessViolation
from .matrix_core import (
    GroupElement,
    GroupPresentation,
    ball_threshold,
    displacement_interval,
    free_reduce,
)

DEFAULT_BALL_BUDGET = 10**7
DEFAULT_ATOM_BUDGET = 10**8

_HMUL = np.array(
    [0x9E3779B97F4A7C15, 0xC2B2AE3D27D4EB4F, 0x165667B19E3779F9, 0xD6E8FEB86659FD93], dtype=np.uint64
)
_INT64_SAFE = 2**62


class _HashCollision(Exception):
    pass


def _hash_rows(m: np.ndarray) -> np.ndarray:
    h = (m.astype(np.uint64) * _HMUL).sum(axis=1, dtype=np.uint64)
    h ^= h >> np.uint64(31)
    h *= np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(29)
    return h


def _mul_rows(m: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Row-wise product m_i * s for flattened 2x2 matrices."""
    a, b, c, d = m[:, 0], m[:, 1], m[:, 2], m[:, 3]
    out = np.empty_like(m)
    out[:, 0] = a * s[0] + b * s[2]
    out[:, 1] = a * s[1] + b * s[3]
    out[:, 2] = c * s[0] + d * s[2]
    out[:, 3] = c * s[1] + d * s[3]
    return out


def _frob(m: np.ndarray) -> np.ndarray:
    return (m * m).sum(axis=1)


def _sigma_max_sq(flat) -> float:
    F = sum(v * v for v in flat)
    return (F + math.sqrt(max(F * F - 4, 0))) / 2


# ---------------------------------------------------------------- ball index

@dataclass
class BallIndex:
    """Enumerated ball B_radius.  Element i has matrix mats[i] (numpy engine)
    or _elements[i] (Python engine), minimal radius level[i], and a word
    reached by following parent pointers."""

    presentation: GroupPresentation
    radius: int
    counts: list
    level: np.ndarray
    disp: np.ndarray
    parent: np.ndarray
    move: np.ndarray
    mats: np.ndarray | None = None
    _elements: list | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.level)

    @property
    def metric(self) -> str:
        return self.presentation.metric

    def word(self, i: int) -> tuple:
        out = []
        while self.parent[i] >= 0:
            out.append(int(self.move[i]))
            i = int(self.parent[i])
        return tuple(reversed(out))

    def element(self, i: int) -> GroupElement:
        if self._elements is not None:
            return self._elements[i]
        m = self.mats[i]
        return GroupElement(((int(m[0]), int(m[1])), (int(m[2]), int(m[3]))), self.word(i))

    @property
    def elements(self) -> list:
        if self._elements is None:
            self._elements = [self.element(i) for i in range(len(self))]
        return self._elements

    def matrix_array(self) -> np.ndarray:
        """(N, d*d) int64 array, or an object array when entries are too large."""
        if self.mats is not None:
            return self.mats
        flat = [g.flat for g in self._elements]
        big = max((abs(v) for f in flat for v in f), default=0)
        return np.array(flat, dtype=np.int64 if big < 2**62 else object)

    def displacement_interval(self, i: int, tol: float = 1e-12):
        return displacement_interval(self.element(i), tol)

    def truncate(self, n: int) -> "BallIndex":
        """The sub-ball B_n (elements are stored in order of level)."""
        if n >= self.radius:
            return self
        k = self.counts[n]
        return BallIndex(
            self.presentation, n, self.counts[: n + 1], self.level[:k], self.disp[:k],
            self.parent[:k], self.move[:k],
            None if self.mats is None else self.mats[:k],
            None if self._elements is None else self._elements[:k],
        )

    def growth_table(self):
        return [(m, c) for m, c in enumerate(self.counts)]

    def shell_counts(self, k: int = 1):
        """(n, #S_{n,k}) for n = 1..radius, where S_{n,k} = B_n minus B_max(n-k,0)."""
        out = []
        for n in range(1, self.radius + 1):
            out.append((n, self.counts[n] - self.counts[max(n - k, 0)]))
        return out

    def shell_indices(self, n: int, k: int) -> np.ndarray:
        lo = max(n - k, 0)
        if n > self.radius:
            raise ValueError(f"shell radius {n} exceeds ball radius {self.radius}")
        return np.nonzero((self.level > lo) & (self.level <= n))[0]

    def shell(self, n: int, k: int | None = None) -> "ShellMeasure":
        k = default_shell_width(self.presentation) if k is None else k
        idx = self.shell_indices(n, k)
        if len(idx) == 0:
            raise ValueError(f"shell S_{{{n},{k}}} is empty")
        atoms = tuple(self.element(int(i)) for i in idx)
        return ShellMeasure.uniform(atoms, n=n, k=k, presentation=self.presentation)

    def shells(self, k: int | None = None):
        """Partition of B_radius minus B_0 into S_radius, S_radius-k, ...

        Returns (list of ShellMeasure from inside out, list of radii whose shell is empty).
        """
        k = default_shell_width(self.presentation) if k is None else k
        if k < 1:
            raise ValueError("shell width must be >= 1")
        radii = list(range(self.radius, 0, -k))[::-1]
        out, empty = [], []
        for n in radii:
            if len(self.shell_indices(n, k)) == 0:
                empty.append(n)
            else:
                out.append(self.shell(n, k))
        return out, empty

    def to_rows(self):
        """(index, level, displacement, word, entries) rows for JSON listings."""
        from .matrix_core import format_word

        for i in range(len(self)):
            g = self.element(i)
            yield {
                "level": int(self.level[i]),
                "displacement": float(self.disp[i]),
                "word": format_word(g.word),
                "entries": [[str(v) for v in r] for r in g.entries],
            }


def default_shell_width(p: GroupPresentation) -> int:
    return 1 if p.metric == "word" else 2


# ---------------------------------------------------------------- engines

def _numpy_ok(p: GroupPresentation, n: int) -> bool:
    if p.dim != 2:
        return False
    moves = [m.flat for _, m in p.moves()]
    row = max(abs(f[0]) + abs(f[1]) for f in moves)
    row = max(row, max(abs(f[2]) + abs(f[3]) for f in moves))
    if p.metric == "hyperbolic":
        bound = math.isqrt(ball_threshold(n)) + 1
        return bound * row < 2**30 and ball_threshold(n) < 2**52
    # word metric: entries grow at most like row**n
    return n * math.log2(max(row, 2)) < 30


def enumerate_ball(p: GroupPresentation, n: int, budget: int = DEFAULT_BALL_BUDGET,
                   engine: str = "auto") -> BallIndex:
    """Enumerate B_n by breadth-first closure from the identity.

    Hyperbolic metric: closure under multiplication by generators and their
    inverses inside {F <= floor(2 cosh m)}, grown radius by radius.
    Word metric: layer-by-layer BFS; when the presentation is assumed free,
    only reduced words are formed and any repeated matrix raises
    FreenessViolation.
    """
    if n < 0:
        raise ValueError("radius must be >= 0")
    if engine == "auto":
        engine = "numpy" if _numpy_ok(p, n) else "python"
    if engine == "numpy":
        try:
            return _enumerate_numpy(p, n, budget)
        except _HashCollision:
            engine = "python"
    return _enumerate_python(p, n, budget)


class _Store:
    """Append-only element storage with a two-level sorted hash index.

    Cusps make the BFS deep (A^k needs ~e^{n/2} layers), so per-layer work must
    scale with the layer, not with the ball: new keys go to a small sorted
    `recent` run that is merged into the base run only occasionally.
    """

    def __init__(self, cap=1024):
        self.buf = np.empty((cap, 4), dtype=np.int64)
        self.par = np.empty(cap, dtype=np.int64)
        self.mov = np.empty(cap, dtype=np.int64)
        self.lev = np.empty(cap, dtype=np.int64)
        self.n = 0
        self.runs = [(np.empty(0, np.uint64), np.empty(0, np.int64)), (np.empty(0, np.uint64), np.empty(0, np.int64))]

    def _grow(self, need):
        cap = len(self.buf)
        if need <= cap:
            return
        while cap < need:
            cap *= 2
        for name in ("buf", "par", "mov", "lev"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self.n] = old[: self.n]
            setattr(self, name, new)

    def cat(self):
        return self.buf[: self.n]

    def lookup(self, h):
        """Index of the stored element with hash h, or -1."""
        out = np.full(len(h), -1, dtype=np.int64)
        for keys, order in self.runs:
            if not len(keys):
                continue
            pos = np.searchsorted(keys, h)
            pos_c = np.minimum(pos, len(keys) - 1)
            hit = (pos < len(keys)) & (keys[pos_c] == h)
            out[hit] = order[pos_c[hit]]
        return out

    def _index(self, h, idx):
        base, recent = self.runs
        rk = np.concatenate([recent[0], h])
        ro = np.concatenate([recent[1], idx])
        s = np.argsort(rk, kind="stable")
        recent = (rk[s], ro[s])
        if len(recent[0]) > max(len(base[0]) // 4, 1 << 15):
            bk = np.concatenate([base[0], recent[0]])
            bo = np.concatenate([base[1], recent[1]])
            s = np.argsort(bk, kind="stable")
            base, recent = (bk[s], bo[s]), (np.empty(0, np.uint64), np.empty(0, np.int64))
        self.runs = [base, recent]

    def add(self, mats, parent, move, level):
        if len(mats) == 0:
            return np.empty(0, dtype=np.int64)
        h = _hash_rows(mats)
        uniq, first, inv = np.unique(h, return_index=True, return_inverse=True)
        if len(uniq) != len(h) and not np.array_equal(mats, mats[first][inv]):
            raise _HashCollision
        mats, parent, move, h = mats[first], parent[first], move[first], uniq
        old = self.lookup(h)
        hit = old >= 0
        if hit.any() and not np.array_equal(self.buf[old[hit]], mats[hit]):
            raise _HashCollision
        new = ~hit
        mats, parent, move, h = mats[new], parent[new], move[new], h[new]
        # deterministic order: by parent, then move
        o = np.lexsort((move, parent))
        mats, parent, move, h = mats[o], parent[o], move[o], h[o]
        k = len(mats)
        self._grow(self.n + k)
        sl = slice(self.n, self.n + k)
        self.buf[sl], self.par[sl], self.mov[sl], self.lev[sl] = mats, parent, move, level
        idx = np.arange(self.n, self.n + k, dtype=np.int64)
        self.n += k
        self._index(h, idx)
        return idx

    def arrays(self):
        n = self.n
        return self.buf[:n].copy(), self.par[:n].copy(), self.mov[:n].copy(), self.lev[:n].copy()


def _enumerate_numpy(p, n, budget):
    moves = p.moves()
    labels = np.array([lab for lab, _ in moves], dtype=np.int64)
    mv = np.array([g.flat for _, g in moves], dtype=np.int64)
    inv_of = {lab: i for i, lab in enumerate(labels)}
    inverse_idx = np.array([inv_of[-lab] for lab in labels])
    smax2 = max(_sigma_max_sq(g.flat) for _, g in moves) * (1 + 1e-9)

    st = _Store()
    st.add(np.array([[1, 0, 0, 1]], dtype=np.int64), np.array([-1]), np.array([0]), 0)
    counts = []

    def expand(frontier, lastmove=None):
        mats = st.cat()[frontier]
        outs, pars, mvs = [], [], []
        for j in range(len(labels)):
            keep = slice(None)
            if lastmove is not None:
                keep = lastmove != labels[inverse_idx[j]]
            src = frontier[keep]
            outs.append(_mul_rows(mats[keep], mv[j]))
            pars.append(src)
            mvs.append(np.full(len(src), labels[j], dtype=np.int64))
        return np.concatenate(outs), np.concatenate(pars), np.concatenate(mvs)

    def partial(m_done):
        mats, par, mov, lev = st.arrays()
        return _make_index(p, m_done, counts[: m_done + 1], mats, par, mov, lev)

    if p.metric == "hyperbolic":
        for m in range(n + 1):
            T = ball_threshold(m)
            if m == 0:
                frontier = np.array([0], dtype=np.int64)
            else:
                F = _frob(st.cat()).astype(np.float64)
                frontier = np.nonzero(F * smax2 > ball_threshold(m - 1))[0]
            while len(frontier):
                cand, par, mov = expand(frontier)
                ok = _frob(cand) <= T
                frontier = st.add(cand[ok], par[ok], mov[ok], m)
                if st.n > budget:
                    raise BudgetExceeded(
                        f"ball exceeds budget {budget} at radius {m}",
                        partial=partial(m - 1) if m > 0 else None, completed_radius=m - 1)
            counts.append(st.n)
    else:
        frontier = np.array([0], dtype=np.int64)
        counts.append(1)
        for m in range(1, n + 1):
            last = st.mov[frontier] if p.free else None
            cand, par, mov = expand(frontier, last)
            if p.free:
                _audit_free(st, cand, par, mov, p)
            frontier = st.add(cand, par, mov, m)
            counts.append(st.n)
            if st.n > budget:
                raise BudgetExceeded(f"ball exceeds budget {budget} at radius {m}",
                                     partial=partial(m - 1), completed_radius=m - 1)
    mats, par, mov, lev = st.arrays()
    return _make_index(p, n, counts, mats, par, mov, lev)


def _audit_free(st: _Store, cand, par, mov, p):
    """Reduced words must give pairwise distinct, previously unseen matrices."""
    h = _hash_rows(cand)
    uniq, cnt = np.unique(h, return_counts=True)
    dup = cnt > 1
    old = st.lookup(h)
    seen = old >= 0
    if not dup.any() and not seen.any():
        return
    parents, moves = st.par[: st.n], st.mov[: st.n]

    def word_of(i, last=None):
        w = []
        i = int(i)
        while parents[i] >= 0:
            w.append(int(moves[i]))
            i = int(parents[i])
        w = tuple(reversed(w))
        return w if last is None else w + (int(last),)

    if seen.any():
        j = int(np.nonzero(seen)[0][0])
        if np.array_equal(st.buf[old[j]], cand[j]):
            raise FreenessViolation(word_of(old[j]), word_of(par[j], mov[j]), cand[j].tolist())
        raise _HashCollision
    hv = uniq[np.nonzero(dup)[0][0]]
    js = np.nonzero(h == hv)[0]
    if np.array_equal(cand[js[0]], cand[js[1]]):
        raise FreenessViolation(word_of(par[js[0]], mov[js[0]]), word_of(par[js[1]], mov[js[1]]),
                                cand[js[0]].tolist())
    raise _HashCollision


def _make_index(p, n, counts, mats, par, mov, lev) -> BallIndex:
    if p.metric == "hyperbolic":
        F = _frob(mats).astype(np.float64)
        disp = np.arccosh(np.maximum(F / 2, 1.0))
    else:
        disp = lev.astype(np.float64)
    return BallIndex(p, n, list(counts), lev, disp, par, mov, mats=mats)


def _enumerate_python(p, n, budget):
    moves = p.moves()
    d = p.dim
    ident = GroupElement.identity(d)
    seen = {ident.entries: 0}
    elems, level, parent, move = [ident], [0], [-1], [0]
    counts = []

    def mul(x, y):
        return tuple(tuple(sum(x[i][k] * y[k][j] for k in range(d)) for j in range(d)) for i in range(d))

    def partial(m_done):
        return _python_index(p, m_done, counts[: m_done + 1], elems, level, parent, move)

    if p.metric == "hyperbolic":
        for m in range(n + 1):
            T = ball_threshold(m)
            frontier = [0] if m == 0 else list(range(len(elems)))
            while frontier:
                nxt = []
                for i in frontier:
                    for lab, g in moves:
                        e = mul(elems[i].entries, g.entries)
                        if sum(v * v for r in e for v in r) > T or e in seen:
                            continue
                        seen[e] = len(elems)
                        elems.append(GroupElement(e, elems[i].word + (lab,)))
                        level.append(m)
                        parent.append(i)
                        move.append(lab)
                        nxt.append(len(elems) - 1)
                        if len(elems) > budget:
                            raise BudgetExceeded(f"ball exceeds budget {budget} at radius {m}",
                                                 partial=partial(m - 1) if m else None,
                                                 completed_radius=m - 1)
                frontier = nxt
            counts.append(len(elems))
    else:
        frontier = [0]
        counts.append(1)
        for m in range(1, n + 1):
            nxt = []
            for i in frontier:
                for lab, g in moves:
                    w = elems[i].word
                    if p.free and w and w[-1] == -lab:
                        continue
                    e = mul(elems[i].entries, g.entries)
                    if e in seen:
                        if p.free:
                            raise FreenessViolation(elems[seen[e]].word, w + (lab,), e)
                        continue
                    seen[e] = len(elems)
                    elems.append(GroupElement(e, w + (lab,)))
                    level.append(m)
                    parent.append(i)
                    move.append(lab)
                    nxt.append(len(elems) - 1)
            frontier = nxt
            counts.append(len(elems))
            if len(elems) > budget:
                raise BudgetExceeded(f"ball exceeds budget {budget} at radius {m}",
                                     partial=partial(m - 1), completed_radius=m - 1)
    return _python_index(p, n, counts, elems, level, parent, move)


def _python_index(p, n, counts, elems, level, parent, move):
    k = counts[-1] if counts else 1
    elems = elems[:k]
    if p.metric == "hyperbolic":
        disp = np.array([_disp_float(g.frobenius_sq) for g in elems])
    else:
        disp = np.array(level[:k], dtype=np.float64)
    return BallIndex(p, n, list(counts), np.array(level[:k], dtype=np.int64), disp,
                     np.array(parent[:k], dtype=np.int64), np.array(move[:k], dtype=np.int64),
                     mats=None, _elements=elems)


def _disp_float(F: int) -> float:
    if F <= 2**52:
        return math.acosh(F / 2)
    # acosh(F/2) = log(F) + log((1 + sqrt(1 - 4/F^2))/2) ~ log F - 1/F^2
    return math.log(F)


# ---------------------------------------------------------------- growth fit

@dataclass(frozen=True)
class GrowthFit:
    delta: float
    confidence: tuple
    points: list
    window: tuple


def fit_critical_exponent(counts, min_points: int = 4) -> GrowthFit:
    """Least-squares slope of log(count) against radius over the upper half of radii.

    `counts` is a list of (m, count) pairs or a plain list indexed by m.  The
    confidence interval is the range of consecutive log-differences in the
    window; the LS slope is a positive combination of them, so it lies inside.
    """
    pts = list(counts)
    if pts and not isinstance(pts[0], (tuple, list)):
        pts = list(enumerate(pts))
    pts = sorted((int(m), int(c)) for m, c in pts if c > 0)
    if len(pts) < min_points:
        raise ValueError(f"need at least {min_points} data points, got {len(pts)}")
    win = pts[len(pts) // 2:] if len(pts) % 2 == 0 else pts[len(pts) // 2:]
    if len(win) < 2:
        win = pts[-2:]
    m = np.array([a for a, _ in win], dtype=np.float64)
    y = np.array([math.log(c) for _, c in win])
    mm = m - m.mean()
    slope = float((mm * (y - y.mean())).sum() / (mm * mm).sum())
    diffs = np.diff(y) / np.diff(m)
    lo, hi = float(diffs.min()), float(diffs.max())
    lo, hi = min(lo, slope), max(hi, slope)
    return GrowthFit(slope, (lo, hi), [(int(a), float(b)) for a, b in zip(m, y)], (int(m[0]), int(m[-1])))


# ---------------------------------------------------------------- measures

class GroupMeasure:
    """Finitely supported probability measure on group elements (exact weights)."""

    def __init__(self, atoms: Sequence[GroupElement], weights: Sequence[Fraction], presentation=None):
        if len(atoms) != len(weights) or not atoms:
            raise ValueError("need matching nonempty atoms and weights")
        merged = {}
        order = []
        for g, w in zip(atoms, weights):
            w = Fraction(w)
            if w <= 0:
                raise ValueError("weights must be positive")
            if g in merged:
                merged[g] += w
            else:
                merged[g] = w
                order.append(g)
        if sum(merged.values()) != 1:
            raise ValueError("weights must sum to 1")
        self.atoms = tuple(order)
        self.weights = tuple(merged[g] for g in order)
        self.presentation = presentation

    @classmethod
    def uniform(cls, atoms, presentation=None, **kw):
        atoms = list(atoms)
        return cls(atoms, [Fraction(1, len(atoms))] * len(atoms), presentation, **kw)

    @classmethod
    def symmetric_generators(cls, p: GroupPresentation):
        """Simple random walk: uniform on generators and their inverses."""
        return cls.uniform([g for _, g in p.moves()], p)

    def __len__(self):
        return len(self.atoms)

    @property
    def dim(self):
        return self.atoms[0].dim

    def is_symmetric(self) -> bool:
        d = dict(zip(self.atoms, self.weights))
        return all(d.get(g.inverse()) == w for g, w in d.items())

    def describe(self) -> str:
        return f"{type(self).__name__}({len(self)} atoms)"


class ShellMeasure(GroupMeasure):
    """Uniform measure on a shell S_{n,k}; symmetric, identity excluded."""

    def __init__(self, atoms, weights, presentation=None, n: int = 0, k: int = 1):
        super().__init__(atoms, weights, presentation)
        if len(set(self.weights)) != 1:
            raise ValueError("shell measures have equal weights")
        d = self.dim
        ident = GroupElement.identity(d)
        if ident in self.atoms:
            raise ValueError("the identity is not in any shell")
        atomset = set(self.atoms)
        if any(g.inverse() not in atomset for g in self.atoms):
            raise ValueError("shell is not closed under inversion")
        self.n, self.k = n, k

    @classmethod
    def uniform(cls, atoms, n=0, k=1, presentation=None):
        atoms = list(atoms)
        return cls(atoms, [Fraction(1, len(atoms))] * len(atoms), presentation, n=n, k=k)

    def describe(self) -> str:
        return f"ShellMeasure(n={self.n}, k={self.k}, {len(self)} atoms)"


# ---------------------------------------------------------------- random walks

@dataclass
class ReturnProbEstimate:
    r: list                 # r_1..r_K as floats
    p: list                 # exact mu^{*2k}(e), k = 1..K
    truncated: bool
    support_sizes: list

    def exact_monotone(self) -> bool:
        """r_k <= r_{k+1}  <=>  p_{2k}^{k+1} <= p_{2k+2}^k, checked in exact arithmetic."""
        for k in range(1, len(self.p)):
            if self.p[k - 1] ** (k + 1) > self.p[k] ** k:
                return False
        return True


def _root(p: Fraction, k: int) -> float:
    if p == 0:
        return 0.0
    return math.exp((math.log(p.numerator) - math.log(p.denominator)) / k)


def return_prob_norm_estimate(mu: GroupMeasure, K: int, budget: int = DEFAULT_ATOM_BUDGET) -> ReturnProbEstimate:
    """r_k = mu^{*2k}(e)^{1/(2k)} from exact convolution keyed by matrices.

    mu^{*2k}(e) = sum_g mu^{*k}(g) mu^{*k}(g^-1), so only powers up to K are formed.
    Weights are held as integers over the common denominator D^k.
    """
    D = math.lcm(*(w.denominator for w in mu.weights))
    steps = [(g.entries, int(w * D)) for g, w in zip(mu.atoms, mu.weights)]
    d = mu.dim

    def mul(x, y):
        if d == 2:
            (a, b), (c, e) = x
            (p_, q), (r, s) = y
            return ((a * p_ + b * r, a * q + b * s), (c * p_ + e * r, c * q + e * s))
        return tuple(tuple(sum(x[i][t] * y[t][j] for t in range(d)) for j in range(d)) for i in range(d))

    def inv(x):
        if d == 2:
            (a, b), (c, e) = x
            return ((e, -b), (-c, a))
        return GroupElement(x).inverse().entries

    cur = {GroupElement.identity(d).entries: 1}
    r, pvals, sizes = [], [], []
    truncated = False
    for k in range(1, K + 1):
        nxt = {}
        for x, cx in cur.items():
            for s, cs in steps:
                y = mul(x, s)
                nxt[y] = nxt.get(y, 0) + cx * cs
            if len(nxt) > budget:
                truncated = True
                break
        if truncated:
            break
        cur = nxt
        tot = sum(c * cur.get(inv(x), 0) for x, c in cur.items())
        p2k = Fraction(tot, D ** (2 * k))
        pvals.append(p2k)
        r.append(_root(p2k, 2 * k))
        sizes.append(len(cur))
    return ReturnProbEstimate(r, pvals, truncated, sizes)


@dataclass
class DriftEntropy:
    drift: float
    drift_se: float
    entropy: float
    entropy_se: float
    miller_madow: float
    steps: int
    samples: int
    seed: int


def _rng(seed):
    return np.random.Generator(np.random.Philox(key=int(seed)))


def _walk_positions(mu: GroupMeasure, idx: np.ndarray):
    """Final positions and their displacement for sampled atom-index paths."""
    p = mu.presentation
    metric = p.metric if p is not None else "hyperbolic"
    samples, steps = idx.shape
    if metric == "word":
        if p is None or not p.free:
            raise ValueError("word-metric drift needs a free presentation (word length from reduced words)")
        words = [g.word for g in mu.atoms]
        if any(w is None for w in words):
            raise ValueError("word-metric drift needs atoms with words")
        keys, lens = [], np.empty(samples)
        for s in range(samples):
            stack = []
            for j in idx[s]:
                for x in words[j]:
                    if stack and stack[-1] == -x:
                        stack.pop()
                    else:
                        stack.append(x)
            keys.append(tuple(stack))
            lens[s] = len(stack)
        return keys, lens
    # hyperbolic: exact big-integer matrices
    flat = [g.flat for g in mu.atoms]
    pos = [(1, 0, 0, 1)] * samples
    for t in range(steps):
        new = []
        for s in range(samples):
            a, b, c, d = pos[s]
            p0, p1, p2, p3 = flat[idx[s, t]]
            new.append((a * p0 + b * p2, a * p1 + b * p3, c * p0 + d * p2, c * p1 + d * p3))
        pos = new
    lens = np.array([_disp_float(sum(v * v for v in m)) for m in pos])
    return pos, lens


def drift_entropy_estimate(mu: GroupMeasure, steps: int, samples: int, seed: int,
                           bootstrap: int = 200) -> DriftEntropy:
    """Monte Carlo drift l = E d(X_steps, e)/steps and plug-in entropy H(X_steps)/steps."""
    if steps < 2 or samples < 100:
        raise ValueError("need steps >= 2 and samples >= 100")
    rng = _rng(seed)
    w = np.array([float(x) for x in mu.weights])
    idx = rng.choice(len(mu.atoms), size=(samples, steps), p=w / w.sum())
    keys, lens = _walk_positions(mu, idx)
    _, codes, counts = np.unique(np.array([hash(k) for k in keys], dtype=np.int64),
                                 return_inverse=True, return_counts=True)
    # guard against hash merges of distinct positions
    if len(counts) != len(set(keys)):
        lookup = {}
        codes = np.array([lookup.setdefault(k, len(lookup)) for k in keys])
        counts = np.bincount(codes)

    def plugin(cnt):
        cnt = cnt[cnt > 0]
        q = cnt / cnt.sum()
        return float(-(q * np.log(q)).sum())

    H = plugin(counts)
    boot_l, boot_h = [], []
    for _ in range(bootstrap):
        b = rng.integers(0, samples, samples)
        boot_l.append(lens[b].mean())
        boot_h.append(plugin(np.bincount(codes[b])))
    return DriftEntropy(
        drift=float(lens.mean() / steps),
        drift_se=float(np.std(boot_l, ddof=1) / steps),
        entropy=H / steps,
        entropy_se=float(np.std(boot_h, ddof=1) / steps),
        miller_madow=(len(counts) - 1) / (2 * samples) / steps,
        steps=steps, samples=samples, seed=int(seed),
    )
