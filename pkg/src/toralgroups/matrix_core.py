"""Exact SL_d(Z) elements, the hyperbolic displacement d(g, i) = 2 log ||g||,
certified ball membership, and a few structural tests.

Words are tuples of signed generator indices: k means generator k (1-based),
-k its inverse.  Strings like "ab", "aB", "a^-1b" are accepted by parse_word
(uppercase letter = inverse).
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

from mpmath import iv, mp

from .errors import DimensionMismatch

DEFAULT_TOL = 1e-12

Word = tuple


# ---------------------------------------------------------------- words

def parse_word(w) -> Word:
    """'ab', 'aB', 'a^-1 b', 'a⁻¹b' or a sequence of signed ints -> tuple."""
    if w is None:
        return None
    if not isinstance(w, str):
        out = tuple(int(x) for x in w)
        if any(x == 0 for x in out):
            raise ValueError("generator index 0 is not allowed")
        return out
    s = w.replace("⁻¹", "^-1").replace(" ", "")
    out = []
    for m in re.finditer(r"([a-zA-Z])(\^-1)?", s):
        ch, inv = m.group(1), m.group(2)
        k = ord(ch.lower()) - ord("a") + 1
        sign = -1 if (ch.isupper() or inv) else 1
        if ch.isupper() and inv:
            sign = 1
        out.append(sign * k)
    if "".join(m.group(0) for m in re.finditer(r"([a-zA-Z])(\^-1)?", s)) != s:
        raise ValueError(f"cannot parse word {w!r}")
    return tuple(out)


def format_word(w: Word) -> str:
    if w is None:
        return ""
    return "".join(chr(ord("a") + abs(x) - 1) if x > 0 else chr(ord("A") + abs(x) - 1) for x in w)


def free_reduce(w: Sequence[int]) -> Word:
    stack = []
    for x in w:
        if stack and stack[-1] == -x:
            stack.pop()
        else:
            stack.append(x)
    return tuple(stack)


def invert_word(w: Word) -> Word:
    return tuple(-x for x in reversed(w))


# ---------------------------------------------------------------- matrices

def _det(rows) -> int:
    """Bareiss fraction-free determinant (exact for integer input)."""
    a = [list(r) for r in rows]
    n = len(a)
    if n == 1:
        return a[0][0]
    if n == 2:
        return a[0][0] * a[1][1] - a[0][1] * a[1][0]
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for i in range(k + 1, n):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[-1][-1]


def _inverse_unimodular(rows):
    n = len(rows)
    if n == 2:
        (a, b), (c, d) = rows
        return ((d, -b), (-c, a))
    # Gauss-Jordan over Q; det = 1 guarantees an integer result
    m = [[Fraction(x) for x in r] + [Fraction(int(i == j)) for j in range(n)] for i, r in enumerate(rows)]
    for col in range(n):
        piv = next(i for i in range(col, n) if m[i][col] != 0)
        m[col], m[piv] = m[piv], m[col]
        p = m[col][col]
        m[col] = [x / p for x in m[col]]
        for i in range(n):
            if i != col and m[i][col] != 0:
                f = m[i][col]
                m[i] = [x - f * y for x, y in zip(m[i], m[col])]
    out = []
    for r in m:
        row = r[n:]
        assert all(x.denominator == 1 for x in row)
        out.append(tuple(int(x) for x in row))
    return tuple(out)


def _matmul(x, y):
    return tuple(
        tuple(sum(x[i][k] * y[k][j] for k in range(len(y))) for j in range(len(y[0])))
        for i in range(len(x))
    )


@dataclass(frozen=True)
class GroupElement:
    entries: tuple
    word: Word | None = field(default=None, compare=False)

    def __post_init__(self):
        rows = tuple(tuple(int(v) for v in r) for r in self.entries)
        d = len(rows)
        if d == 0 or any(len(r) != d for r in rows):
            raise DimensionMismatch("entries must form a square matrix")
        if _det(rows) != 1:
            raise ValueError(f"determinant of {rows} is not 1")
        object.__setattr__(self, "entries", rows)
        if self.word is not None:
            object.__setattr__(self, "word", parse_word(self.word))

    @classmethod
    def of(cls, *rows, word=None):
        return cls(tuple(tuple(r) for r in rows), word)

    @classmethod
    def identity(cls, d=2):
        return cls(tuple(tuple(int(i == j) for j in range(d)) for i in range(d)), ())

    @property
    def dim(self) -> int:
        return len(self.entries)

    @property
    def flat(self) -> tuple:
        return tuple(v for r in self.entries for v in r)

    @property
    def frobenius_sq(self) -> int:
        return sum(v * v for r in self.entries for v in r)

    @property
    def trace(self) -> int:
        return sum(self.entries[i][i] for i in range(self.dim))

    def inverse(self) -> "GroupElement":
        w = invert_word(self.word) if self.word is not None else None
        return GroupElement(_inverse_unimodular(self.entries), w)

    def transpose(self) -> "GroupElement":
        return GroupElement(tuple(zip(*self.entries)))

    def __neg__(self):
        if self.dim % 2:
            raise ValueError("-g has determinant -1 in odd dimension")
        return GroupElement(tuple(tuple(-v for v in r) for r in self.entries))

    def __matmul__(self, other):
        return compose(self, other)

    def is_identity(self) -> bool:
        return all(v == int(i == j) for i, r in enumerate(self.entries) for j, v in enumerate(r))

    def __repr__(self):
        w = f", word={format_word(self.word)!r}" if self.word is not None else ""
        return f"GroupElement({[list(r) for r in self.entries]}{w})"


def compose(a: GroupElement, b: GroupElement, free: bool = False) -> GroupElement:
    """Product a*b.  Words concatenate (and are freely reduced when `free`)."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"cannot compose {a.dim}x{a.dim} with {b.dim}x{b.dim}")
    w = None
    if a.word is not None and b.word is not None:
        w = a.word + b.word
        if free:
            w = free_reduce(w)
    return GroupElement(_matmul(a.entries, b.entries), w)


def evaluate_word(word, generators: Sequence[GroupElement]) -> GroupElement:
    word = parse_word(word)
    d = generators[0].dim
    out = GroupElement.identity(d).entries
    invs = {}
    for x in word:
        g = generators[abs(x) - 1]
        if x < 0:
            if abs(x) not in invs:
                invs[abs(x)] = g.inverse()
            g = invs[abs(x)]
        out = _matmul(out, g.entries)
    return GroupElement(out, word)


def check_word(g: GroupElement, generators) -> bool:
    """Does the stored word reproduce the entries?"""
    return g.word is None or evaluate_word(g.word, generators) == g


# ---------------------------------------------------------------- displacement

def _iv_eval(fn, prec):
    """Evaluate an interval expression at `prec` bits; returns exact mpf endpoints."""
    old = iv.prec
    iv.prec = prec
    try:
        val = fn()
    finally:
        iv.prec = old
    a, b = val._mpi_
    return mp.make_mpf(a), mp.make_mpf(b)


def _width(lo, hi) -> float:
    with mp.workprec(max(mp.prec, lo.context.prec) + 64):
        return float(hi - lo)


def displacement_interval(g: GroupElement, tol: float = DEFAULT_TOL):
    """Enclosure [lo, hi] of 2 log sigma_max(g) with hi - lo < tol (mpf endpoints)."""
    if g.dim != 2:
        raise DimensionMismatch("displacement is defined for d = 2 only")
    F = g.frobenius_sq
    if F == 2:
        return (mp.mpf(0), mp.mpf(0))
    disc = F * F - 4  # exact integer

    prec = 64
    while True:
        lo, hi = _iv_eval(lambda: iv.log((iv.mpf(F) + iv.sqrt(iv.mpf(disc))) / 2), prec)
        if _width(lo, hi) < tol:
            return lo, hi
        prec *= 2


def displacement(g: GroupElement, tol: float = DEFAULT_TOL) -> float:
    """2 log sigma_max(g), from the integer F via sigma^2 = (F + sqrt(F^2-4))/2."""
    lo, hi = displacement_interval(g, tol)
    with mp.workprec(128):
        return float((lo + hi) / 2)


def norm(g: GroupElement) -> float:
    """Operator norm sigma_max(g) = exp(d/2)."""
    import math
    return math.exp(displacement(g) / 2)


@lru_cache(maxsize=None)
def ball_threshold(n: int) -> int:
    """floor(e^n + e^-n); F(g) <= this  <=>  d(g, e) <= n.

    For n >= 1 the value 2 cosh n is irrational, so an enclosure of small
    enough width never straddles an integer and the floor is certified.
    """
    if n < 0:
        raise ValueError("radius must be >= 0")
    if n == 0:
        return 2
    prec = 64
    while True:
        a, b = _iv_eval(lambda: iv.exp(iv.mpf(n)) + iv.exp(-iv.mpf(n)), prec)
        lo, hi = int(mp.floor(a)), int(mp.floor(b))
        if lo == hi:
            return lo
        prec *= 2


def ball_membership(g: GroupElement, n: int) -> bool:
    """Exact test of d(g, e) <= n, i.e. F(g) <= e^n + e^-n."""
    if g.dim != 2:
        raise DimensionMismatch("ball membership is defined for d = 2 only")
    return g.frobenius_sq <= ball_threshold(n)


def is_parabolic(g: GroupElement) -> bool:
    if g.dim != 2:
        raise DimensionMismatch("d = 2 only")
    ident = g.is_identity() or (-g).is_identity()
    return abs(g.trace) == 2 and not ident


def in_principal_congruence_2(g: GroupElement) -> bool:
    if g.dim != 2:
        raise DimensionMismatch("d = 2 only")
    return all((v - int(i == j)) % 2 == 0 for i, r in enumerate(g.entries) for j, v in enumerate(r))


# ---------------------------------------------------------------- presentations

@dataclass(frozen=True)
class GroupPresentation:
    generators: tuple
    metric: str = "hyperbolic"  # or "word"
    free: bool = False
    name: str = ""

    def __post_init__(self):
        gens = tuple(g if isinstance(g, GroupElement) else GroupElement(g) for g in self.generators)
        if not gens:
            raise ValueError("need at least one generator")
        d = gens[0].dim
        if any(g.dim != d for g in gens):
            raise DimensionMismatch("generators of different dimensions")
        if self.metric not in ("hyperbolic", "word"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.metric == "hyperbolic" and d != 2:
            raise DimensionMismatch("hyperbolic metric needs d = 2")
        if len(set(gens)) != len(gens):
            raise ValueError("generators are not distinct")
        ident = GroupElement.identity(d)
        for g in gens:
            if g == ident or (d % 2 == 0 and -g == ident):
                raise ValueError("a generator equals +-identity")
        gens = tuple(GroupElement(g.entries, (i + 1,)) for i, g in enumerate(gens))
        object.__setattr__(self, "generators", gens)

    @property
    def dim(self) -> int:
        return self.generators[0].dim

    @property
    def rank(self) -> int:
        return len(self.generators)

    def moves(self):
        """Generators and their inverses, as (label, element) in the order a, A, b, B, ..."""
        out = []
        for i, g in enumerate(self.generators):
            out.append((i + 1, g))
            out.append((-(i + 1), g.inverse()))
        return out

    def evaluate(self, word) -> GroupElement:
        return evaluate_word(word, self.generators)

    def to_dict(self) -> dict:
        return {
            "generators": [[[str(v) for v in r] for r in g.entries] for g in self.generators],
            "metric": self.metric,
            "free": self.free,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroupPresentation":
        gens = [GroupElement(tuple(tuple(int(v) for v in r) for r in m)) for m in d["generators"]]
        return cls(tuple(gens), d.get("metric", "hyperbolic"), bool(d.get("free", False)), d.get("name", ""))


def load_presentation(path) -> GroupPresentation:
    with open(path) as fh:
        return GroupPresentation.from_dict(json.load(fh))


def dump_presentation(p: GroupPresentation, path) -> None:
    with open(path, "w") as fh:
        json.dump(p.to_dict(), fh, indent=1)
        fh.write("\n")


SANOV_A = ((1, 2), (0, 1))
SANOV_B = ((1, 0), (2, 1))


def sanov(metric: str = "hyperbolic") -> GroupPresentation:
    """The free rank-2 Sanov subgroup <[[1,2],[0,1]], [[1,0],[2,1]]>, index 12 in SL2(Z)."""
    return GroupPresentation((GroupElement(SANOV_A), GroupElement(SANOV_B)), metric, True, "sanov")


def free_group(m: int = 2, metric: str = "word") -> GroupPresentation:
    """A free group of rank m inside SL2(Z): the elements A^k B A^-k (k < m) of the Sanov group."""
    if m < 1:
        raise ValueError("rank must be >= 1")
    if m == 2:
        return GroupPresentation((GroupElement(SANOV_A), GroupElement(SANOV_B)), metric, True, "F2")
    A, B = GroupElement(SANOV_A), GroupElement(SANOV_B)
    gens = []
    P = GroupElement.identity()
    for _ in range(m):
        gens.append(GroupElement(compose(compose(P, B), P.inverse()).entries))
        P = compose(P, A)
    return GroupPresentation(tuple(gens), metric, True, f"F{m}")


def iter_words(rank: int, length: int, reduced: bool = True) -> Iterable[Word]:
    letters = [s * k for k in range(1, rank + 1) for s in (1, -1)]

    def rec(prefix):
        if len(prefix) == length:
            yield tuple(prefix)
            return
        for x in letters:
            if reduced and prefix and prefix[-1] == -x:
                continue
            prefix.append(x)
            yield from rec(prefix)
            prefix.pop()

    yield from rec([])
