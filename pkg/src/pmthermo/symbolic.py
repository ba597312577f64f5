"""
Cylinder partitions, itineraries, kneading sequences and entropy estimates.

Words are plain strings.  Two-branch maps use the letters ``L``/``R``,
maps with more branches use the digits ``1..d``; a terminal ``C`` marks an
orbit that hits a critical point.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .maps import PMMap, tent

HIT_TOL = 1e-13
MIN_CYL = 1e-12


class SymbolicError(ValueError):
    pass


def alphabet(d: int) -> str:
    if d == 2:
        return "LR"
    if d > 9:
        raise SymbolicError("words support at most 9 branches")
    return "".join(str(i) for i in range(1, d + 1))


def encode(word_ids, d: int) -> str:
    a = alphabet(d)
    return "".join(a[int(j)] for j in word_ids)


def decode(word: str, d: int) -> list[int]:
    a = alphabet(d)
    return [a.index(ch) for ch in word if ch != "C"]


@dataclass(frozen=True)
class Cylinder:
    word: str
    lo: float
    hi: float
    depth: int


@dataclass
class CylinderSet:
    """All n-cylinders of a map as parallel arrays, sorted left to right."""

    depth: int
    lo: np.ndarray
    hi: np.ndarray
    word_ids: np.ndarray  # shape (count, depth), branch indices
    d: int
    dropped: int = 0
    dropped_length: float = 0.0

    def __len__(self):
        return len(self.lo)

    def word(self, i) -> str:
        return encode(self.word_ids[i], self.d)

    def __getitem__(self, i) -> Cylinder:
        return Cylinder(self.word(i), float(self.lo[i]), float(self.hi[i]), self.depth)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def total_length(self) -> float:
        return float(np.sum(self.hi - self.lo))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["depth", "word", "lo", "hi"])
        for i in range(len(self)):
            w.writerow([self.depth, self.word(i), f"{self.lo[i]:.17g}", f"{self.hi[i]:.17g}"])
        return buf.getvalue()


def _refine(fmap: PMMap, prev: CylinderSet) -> CylinderSet:
    """Pull the n-cylinders back through every branch to get (n+1)-cylinders."""
    los, his, words = [], [], []
    dropped, dropped_len = prev.dropped, prev.dropped_length
    for j in range(fmap.d):
        ilo, ihi = fmap.image(j)
        sel = (prev.hi > ilo) & (prev.lo < ihi)
        if not np.any(sel):
            continue
        a = np.maximum(prev.lo[sel], ilo)
        b = np.minimum(prev.hi[sel], ihi)
        xa, xb = fmap.inverse(j, a), fmap.inverse(j, b)
        lo, hi = np.minimum(xa, xb), np.maximum(xa, xb)
        w = prev.word_ids[sel]
        w = np.hstack([np.full((len(w), 1), j, dtype=np.int8), w])
        small = hi - lo < MIN_CYL
        dropped += int(np.sum(small))
        dropped_len += float(np.sum(hi[small] - lo[small]))
        los.append(lo[~small])
        his.append(hi[~small])
        words.append(w[~small])
    lo = np.concatenate(los) if los else np.empty(0)
    hi = np.concatenate(his) if his else np.empty(0)
    w = np.vstack(words) if words else np.empty((0, prev.depth + 1), dtype=np.int8)
    order = np.argsort(lo, kind="stable")
    return CylinderSet(prev.depth + 1, lo[order], hi[order], w[order], fmap.d,
                       dropped, dropped_len)


def _level_one(fmap: PMMap) -> CylinderSet:
    lo = fmap._lo.copy()
    hi = fmap._hi.copy()
    w = np.arange(fmap.d, dtype=np.int8)[:, None]
    return CylinderSet(1, lo, hi, w, fmap.d)


def cylinder_sets(fmap: PMMap, n: int):
    """Yield the cylinder sets of depth 1, ..., n."""
    if n < 1:
        raise SymbolicError("cylinder depth must be >= 1")
    cs = _level_one(fmap)
    yield cs
    for _ in range(n - 1):
        cs = _refine(fmap, cs)
        yield cs


def cylinders(fmap: PMMap, n: int) -> CylinderSet:
    """All nonempty n-cylinders of ``fmap`` (tiny ones counted in ``dropped``)."""
    cs = None
    for cs in cylinder_sets(fmap, n):
        pass
    return cs


# ----------------------------------------------------------------------
def itinerary(fmap: PMMap, x: float, n: int) -> str:
    """Branch letters of x, f(x), ..., f^{n-1}(x); stops with ``C`` on a critical hit.

    Only interior branch boundaries count as critical hits here; a point at
    an ambient endpoint takes the letter of the adjacent branch.
    """
    crit = interior_breakpoints(fmap)
    alpha = alphabet(fmap.d)
    out = []
    for i in range(n):
        if np.min(np.abs(crit - x)) <= HIT_TOL:
            out.append("C")
            break
        j = _branch_closed(fmap, x)
        if j < 0:
            raise SymbolicError(f"orbit escaped the domain at index {i} (x={x!r})")
        out.append(alpha[j])
        x = float(fmap.value(j, x))
    return "".join(out)


def interior_breakpoints(fmap: PMMap) -> np.ndarray:
    bp = fmap.breakpoints
    inner = (bp > fmap.ambient_lo + HIT_TOL) & (bp < fmap.ambient_hi - HIT_TOL)
    return bp[inner] if np.any(inner) else np.array([np.inf])


def _branch_closed(fmap: PMMap, x: float) -> int:
    j = int(fmap.branch_of(x))
    if j >= 0:
        return j
    if abs(x - fmap._lo[0]) <= HIT_TOL:
        return 0
    if abs(x - fmap._hi[-1]) <= HIT_TOL:
        return fmap.d - 1
    return -1


@dataclass(frozen=True)
class KneadingSequence:
    word: str
    slope: float


def kneading(s: float, n: int) -> KneadingSequence:
    """Itinerary of the critical value s/2 of the slope-s tent map."""
    return KneadingSequence(itinerary(tent(s), s / 2.0, n), float(s))


_RANK = {"L": 0, "C": 1, "R": 2}


def kneading_order(w1: str, w2: str) -> int:
    """Signed-lexicographic comparison: -1 (less), 0 (equal), +1 (greater).

    Symbols compare as L < C < R; the order flips after every R in the
    common prefix.
    """
    flip = False
    for a, b in zip(w1, w2):
        if a != b:
            cmp = 1 if _RANK[a] > _RANK[b] else -1
            return -cmp if flip else cmp
        if a == "R":
            flip = not flip
    return 0


def find_tent_parameter(prefix: str | None = None, period: int | None = None,
                        bracket=(1.0 + 1e-9, 2.0), tol: float = 1e-13,
                        max_steps: int = 200) -> float:
    """Tent slope whose kneading starts with ``prefix`` or whose turning point has ``period``.

    Kneading searches bisect on the signed-lexicographic order.  Periodic
    searches look for a sign change of T_s^p(1/2) - 1/2 on a grid and bisect it.
    """
    s_lo, s_hi = map(float, bracket)
    if prefix is not None:
        n = len(prefix)

        def side(s):
            return kneading_order(kneading(s, n).word, prefix)

        if side(s_lo) >= 0 or side(s_hi) <= 0:
            raise SymbolicError("bracket invalid: endpoints do not straddle the target")
        for _ in range(max_steps):
            mid = 0.5 * (s_lo + s_hi)
            c = side(mid)
            if c == 0:
                return mid
            if c < 0:
                s_lo = mid
            else:
                s_hi = mid
            if s_hi - s_lo < tol:
                return 0.5 * (s_lo + s_hi)
        raise SymbolicError("not found: bisection did not converge")
    if period is None:
        raise SymbolicError("need a kneading prefix or a period")

    def g(s):
        x = 0.5
        for _ in range(period):
            x = s * min(x, 1.0 - x)
        return x - 0.5

    grid = np.linspace(s_lo, s_hi, 2001)
    vals = np.array([g(s) for s in grid])
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if len(idx) == 0:
        raise SymbolicError(f"not found: no slope in {bracket} has a period-{period} turning point")
    a, b = grid[idx[0]], grid[idx[0] + 1]
    ga = g(a)
    for _ in range(max_steps):
        m = 0.5 * (a + b)
        gm = g(m)
        if (gm > 0) == (ga > 0):
            a, ga = m, gm
        else:
            b = m
        if b - a < tol:
            break
    s = 0.5 * (a + b)
    if abs(g(s)) > 1e-9:
        raise SymbolicError("not found: periodic condition not met to 1e-9")
    return s


class EntropyEstimate(NamedTuple):
    value: float
    last_ratio: float
    zero_entropy: bool
    counts: tuple


def topological_entropy(fmap: PMMap, n_max: int = 14, budget: int = 2 ** 14) -> EntropyEstimate:
    """Exponential growth rate of the number of n-cylinders.

    The rate is the least-squares slope of ``log`` of the second
    differences of the counts over the upper half of the depth range.
    Second differences remove the terms affine in n that boundary fixed
    points add to the counts.  While the count stays below ``budget`` the
    depth is pushed past ``n_max`` (up to ``4 n_max``), which matters for
    slowly growing maps.
    """
    if n_max < 4:
        raise SymbolicError("n_max must be at least 4")
    counts = []
    for cs in cylinder_sets(fmap, 4 * n_max):
        counts.append(len(cs))
        if len(counts) >= n_max and len(cs) > budget:
            break
    c = np.array(counts, dtype=float)
    last_ratio = c[-1] / max(c[-2], 1.0)
    d2 = np.diff(c, 2)
    n = np.arange(len(d2))
    sel = n >= len(d2) // 2
    if c[-1] == c[-2] or np.any(d2[sel] <= 0):
        # fall back to the plain count slope (polynomial growth gives ~0)
        ns = np.arange(1, len(c) + 1)
        s0 = ns >= len(c) // 2
        slope = float(np.polyfit(ns[s0], np.log(np.maximum(c[s0], 1.0)), 1)[0])
    else:
        slope = float(np.polyfit(n[sel], np.log(d2[sel]), 1)[0])
    if c[-1] == c[-2] or slope <= 1e-3:
        return EntropyEstimate(0.0, last_ratio, True, tuple(counts))
    return EntropyEstimate(slope, last_ratio, False, tuple(counts))


def golden_slope() -> float:
    return (1.0 + math.sqrt(5.0)) / 2.0
