"""
Statistical stability experiments: distances between measures, entry times
for the normalized quadratic family, the Keller W-map jump, the exo1
beta-construction and entropy semicontinuity along parameter sequences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hofbauer import TowerError, level_R_induced
from .maps import PMMap, exo1, keller, keller_map, make_family
from .thermo import (IntervalMeasure, MeasureStats, PressureError, markov_gibbs,
                     markov_pressure, stats)
from .ulam import ulam_acip

ENTRY_CAP = 10_000_000


class StabilityError(RuntimeError):
    pass


@dataclass
class SweepResult:
    """Measures and statistics along a parameter sequence."""

    params: list
    stats: list
    measures: list
    distances: list = field(default_factory=list)
    entropy: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if not self.distances and len(self.measures) > 1:
            self.distances = [measure_distance(a, b)
                              for a, b in zip(self.measures[:-1], self.measures[1:])]
        if not self.entropy:
            self.entropy = [s.entropy for s in self.stats]

    def __len__(self):
        return len(self.params)


# ----------------------------------------------------------------------
def _cdf_pieces(m: IntervalMeasure, pts: np.ndarray):
    """Left and right limits of the CDF of ``m`` at the sorted points ``pts``."""
    e = m.edges
    cum = np.concatenate([[0.0], np.cumsum(m.cell_mass)])
    F = np.interp(pts, e, cum)
    left = F.copy()
    right = F.copy()
    for x, w in m.atoms:
        left += w * (pts > x)
        right += w * (pts >= x)
    return left, right


def measure_distance(m1: IntervalMeasure, m2: IntervalMeasure) -> float:
    """Wasserstein-1 distance as the L1 norm of the difference of CDFs.

    Both CDFs are piecewise linear between the union of cell edges and atom
    locations, so the integral is exact on each piece.
    """
    lo, hi = min(m1.lo, m2.lo), max(m1.hi, m2.hi)
    pts = np.unique(np.concatenate([[lo, hi], m1.edges, m2.edges,
                                    [x for x, _ in m1.atoms], [x for x, _ in m2.atoms]]))
    l1, r1 = _cdf_pieces(m1, pts)
    l2, r2 = _cdf_pieces(m2, pts)
    d0 = (r1 - r2)[:-1]
    d1 = (l1 - l2)[1:]
    dx = np.diff(pts)
    a0, a1 = np.abs(d0), np.abs(d1)
    same = d0 * d1 >= 0
    s = a0 + a1
    cross = np.divide(d0 ** 2 + d1 ** 2, 2 * s, out=np.zeros_like(s), where=s > 0)
    return float(np.sum(np.where(same, 0.5 * s, cross) * dx))


def dirac(x: float, lo: float = 0.0, hi: float = 1.0) -> IntervalMeasure:
    return IntervalMeasure(1, np.zeros(1), lo, hi, [(float(x), 1.0)])


# ----------------------------------------------------------------------
def entry_time(kappa: float, M: float, x: float, cap: int = ENTRY_CAP) -> int:
    """First k >= 0 with P^k(x) >= M for P(y) = y^2 + kappa."""
    if not kappa > 0.25:
        raise StabilityError(f"entry_time: kappa={kappa} must exceed 1/4")
    y = float(x)
    for k in range(cap + 1):
        if y >= M:
            return k
        y = y * y + kappa
    raise StabilityError(f"entry cap exceeded (kappa={kappa}, M={M})")


def _iterate0(kappa: float, n: int) -> float:
    y = 0.0
    for _ in range(n):
        y = y * y + kappa
        if y > 1e300:
            return math.inf
    return y


def kappa_vn(V: float, n: int, tol: float = 1e-12) -> float:
    """kappa in (1/4, V] with P_kappa^n(0) = V, by bisection."""
    if not (V >= 1 and n >= 1):
        raise StabilityError("kappa_vn needs V >= 1 and n >= 1")
    lo, hi = 0.25, float(V)
    while hi - lo > tol * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        if _iterate0(mid, n) < V:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def evvn_check(n_values=range(3, 9), V0: float = 200.0, n_x: int = 100, seed: int = 0):
    """Sampled form of the entry-time comparison e_{M',k(V',n+1)} <= e_{M,k(V,n)} + 3.

    Returns the list of (n, M, M', V, V', worst excess) with the excess being
    max over x of e' - e - 3 (non-positive when the inequality holds).
    """
    rng = np.random.default_rng(seed)
    out = []
    for n in n_values:
        M, M2, V, V2 = rng.uniform(V0, 100 * V0, 4)
        k1, k2 = kappa_vn(V, n), kappa_vn(V2, n + 1)
        xs = np.linspace(0.0, M, n_x)
        worst = max(entry_time(k2, M2, x) - entry_time(k1, M, x) - 3 for x in xs)
        out.append((n, M, M2, V, V2, worst))
    return out


# ----------------------------------------------------------------------
def _acip_stats(res, t: float = 1.0) -> MeasureStats:
    lam = res.lam
    return MeasureStats(1.0, lam, lam, 0.0, math.nan)


def keller_experiment(eps_list, grid_n: int = 4096, tip_radius: float = 0.05) -> SweepResult:
    """Acips of the Keller W-maps along eps_list and of the limit map."""
    eps = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps[:-1], eps[1:])):
        raise StabilityError("eps_list must be positive and decreasing")
    tip = dirac(0.5)
    st, ms, w1, near = [], [], [], []
    for e in eps:
        res = ulam_acip(keller(e), grid_n)
        st.append(_acip_stats(res))
        ms.append(res.density)
        w1.append(measure_distance(res.density, tip))
        near.append(res.density.mass_in(0.5 - tip_radius, 0.5 + tip_radius))
    lim = ulam_acip(keller_map(0.0), grid_n)
    out = SweepResult(eps, st, ms)
    out.extra.update(
        w1_tip=w1, mass_near_tip=near, lambda_expected=[math.log(2 - e) for e in eps],
        limit_lambda=lim.lam, limit_measure=lim.density,
        limit_w1_tip=measure_distance(lim.density, tip),
        jump=measure_distance(ms[-1], lim.density))
    return out


# ----------------------------------------------------------------------
def usc_entropy_check(family_tag: str, param_seq, t: float = 1.0, R: int = 8,
                      tau_max: int = 40) -> dict:
    """Entropy of equilibrium states along a sequence versus the limit map.

    The last parameter is the limit.  Returns a report with per-point
    entropies, brackets from the pressure brackets, and the margin
    h(limit) - limsup h(mu_k).
    """
    params = [float(a) for a in param_seq]
    ent, lo, hi, used, notes = [], [], [], [], []
    for a in params:
        try:
            fmap = keller_map(a) if family_tag == "keller" else make_family(family_tag, a)
            ind = level_R_induced(fmap, R, tau_max)
            p, (pl, ph) = markov_pressure(ind, t)
            s = stats(ind, markov_gibbs(ind, t), t)
        except (PressureError, TowerError) as err:
            notes.append(f"{family_tag}({a}): excluded ({err})")
            continue
        used.append(a)
        ent.append(s.entropy)
        lo.append(s.entropy + (pl - p))
        hi.append(s.entropy + (ph - p))
    if not used or used[-1] != params[-1]:
        raise StabilityError("limit map unresolved")
    h_lim, h_lim_lo = ent[-1], lo[-1]
    seq = ent[:-1]
    sup = max(seq) if seq else h_lim
    sup_hi = max(hi[:-1]) if seq else hi[-1]
    margin = h_lim - sup
    bracket = (h_lim - h_lim_lo) + (sup_hi - sup)
    relation_change = False
    if family_tag == "keller":
        relation_change = params[-1] == 0.0 or abs(params[-1]) < 1e-15
    return dict(family=family_tag, t=float(t), params=used, entropy=ent,
                entropy_lo=lo, entropy_hi=hi, margin=margin, bracket=bracket,
                ok=bool(margin >= -bracket - 1e-12), relation_change=relation_change,
                notes=notes)


# ----------------------------------------------------------------------
# exo1: x -> 1 - 2x on (0, 1/2), a (x - 1/2)(x - 1) + 1 on (1/2, 1)
EXO1_C = 0.75
EXO1_A0 = 32.0 / 3.0


@dataclass
class Exo1Geometry:
    """Marked points of exo1(a) for block length k and return count n.

    The central branch of the first return to (alpha, alpha_star) is
    x -> (3/4 - delta) - K (x - 3/4)^2 with K = 2^(k-1) a; ``delta`` is kept
    separately because for long passages it is resolved far more finely
    than ``a`` can be in double precision.
    """

    a: float
    alpha: float
    alpha_star: float
    v: float
    v_star: float
    q: float
    q_star: float
    k: int
    n: int
    delta: float = math.nan

    @property
    def K(self) -> float:
        return 2.0 ** (self.k - 1) * self.a

    @property
    def kappa(self) -> float:
        return self.K * self.delta

    @property
    def c(self) -> float:
        return EXO1_C


def _exo1_alpha(a: float) -> float:
    # fixed point of a (x - 3/4)^2 + 1 - a/16 on (1/2, 3/4)
    A, B, C = a, -(1.5 * a + 1.0), 0.5 * a + 1.0
    disc = math.sqrt(B * B - 4 * A * C)
    r = [(-B - disc) / (2 * A), (-B + disc) / (2 * A)]
    return min(x for x in r if 0.5 < x < 0.75 + 1e-15)


def _exo1_v(a: float) -> float:
    return EXO1_C - math.sqrt((a / 16.0 - 0.5) / a)


def _a_of_delta(delta: float, k: int) -> float:
    # f^k(3/4) = 1/3 + 2^(k-1) (a/16 - 2/3) = 3/4 - delta
    return 16.0 * (2.0 / 3.0 + (5.0 / 12.0 - delta) / 2.0 ** (k - 1))


def _p_iter(kappa: float, n: int, cap: float) -> float:
    y = 0.0
    for _ in range(n):
        y = y * y + kappa
        if y > cap:
            return math.inf
    return y


def exo1_geometry(a: float, k: int, n: int = 0, delta: float | None = None) -> Exo1Geometry:
    if delta is None:
        delta = EXO1_C - (1.0 / 3.0 + 2.0 ** (k - 1) * (a / 16.0 - 2.0 / 3.0))
    al = _exo1_alpha(a)
    v = _exo1_v(a)
    K = 2.0 ** (k - 1) * a
    sq = math.sqrt(max(EXO1_C - al - delta, 0.0) / K)
    return Exo1Geometry(a, al, 1.5 - al, v, 1.5 - v, EXO1_C - sq, EXO1_C + sq, k, n, delta)


def exo1_parameter(k: int, n: int) -> tuple:
    """Parameter a(k, n) with f^(kn)(3/4) = v and f^(kj)(3/4) in (q, 3/4) for j < n.

    In the coordinate w = 2^(k-1) a (3/4 - x) the central branch is
    w -> w^2 + kappa with kappa = 2^(k-1) a delta, so the condition reads
    P^n(0) = V with V = 2^(k-1) a (3/4 - v).  The bisection runs over delta
    (equivalently over a, which is affine in delta) down to one ulp.
    """
    if k < 4 or k % 2 or n < 2:
        raise StabilityError(f"parameter not found: need even k >= 4 and n >= 2 (k={k}, n={n})")

    def h(delta):
        a = _a_of_delta(delta, k)
        K = 2.0 ** (k - 1) * a
        V = K * (EXO1_C - _exo1_v(a))
        return _p_iter(K * delta, n, 2 * V) - V

    lo, hi = 0.0, 0.1
    if not (h(lo) < 0 < h(hi)):
        raise StabilityError(f"parameter not found: bracket lost (k={k}, n={n})")
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if h(mid) < 0:
            lo = mid
        else:
            hi = mid
    delta = lo if abs(h(lo)) <= abs(h(hi)) else hi
    a = _a_of_delta(delta, k)
    g = exo1_geometry(a, k, n, delta)
    # chain condition: every earlier central return stays in (q, 3/4)
    wq = g.K * (EXO1_C - g.q)
    y = 0.0
    for j in range(1, n):
        y = y * y + g.kappa
        if not 0 < y < wq:
            raise StabilityError(f"parameter not found: chain condition fails at j={j}")
    if not (g.alpha < g.v < g.q < EXO1_C < g.q_star < g.v_star < g.alpha_star):
        raise StabilityError(f"parameter not found: ordering of marked points fails (k={k})")
    return a, g


# ----------------------------------------------------------------------
@dataclass
class _Returns:
    """Leaves of a first-return enumeration: image intervals and words."""

    parent: np.ndarray
    branch: np.ndarray
    node: np.ndarray
    img_lo: np.ndarray
    img_hi: np.ndarray
    tau: np.ndarray
    lost: float

    def words(self, sel, tau) -> np.ndarray:
        ids = self.node[sel]
        W = np.empty((len(ids), tau), dtype=np.int8)
        for k in range(tau - 1, -1, -1):
            W[:, k] = self.branch[ids]
            ids = self.parent[ids]
        return W


def _first_returns(fmap: PMMap, starts, ylo: float, yhi: float, tau_max: int,
                   min_src: float = 1e-15) -> _Returns:
    """Depth-first enumeration of first returns to (ylo, yhi).

    Pieces are split at branch endpoints and at ylo, yhi; the part landing
    in the target is recorded, the rest is followed until ``tau_max`` or
    until its estimated source length drops below ``min_src``.
    """
    coef = [tuple(map(float, c)) for c in fmap._c]
    blo = [float(x) for x in fmap._lo]
    bhi = [float(x) for x in fmap._hi]
    parent, branch = [], []
    leaves = ([], [], [], [])
    lost = 0.0
    stack = []
    for a, b in starts:
        parent.append(-1)
        branch.append(-1)
        stack.append((float(a), float(b), 0, len(parent) - 1, 0.0))
    while stack:
        A, B, tau, node, ld = stack.pop()
        for j in range(len(coef)):
            a, b = max(A, blo[j]), min(B, bhi[j])
            if not b > a:
                continue
            c2, c1, c0 = coef[j]
            ua, ub = (c2 * a + c1) * a + c0, (c2 * b + c1) * b + c0
            lo, hi = (ua, ub) if ua < ub else (ub, ua)
            if not hi > lo:
                continue
            ld2 = ld + math.log((hi - lo) / (b - a))
            nid = len(parent)
            parent.append(node)
            branch.append(j)
            t = tau + 1
            il, ih = max(lo, ylo), min(hi, yhi)
            if ih - il > 1e-13 * (yhi - ylo):
                for lst, val in zip(leaves, (nid, il, ih, t)):
                    lst.append(val)
            for pl, ph in ((lo, min(hi, ylo)), (max(lo, yhi), hi)):
                if ph > pl:
                    src = (ph - pl) * math.exp(-ld2)
                    if t >= tau_max or src < min_src:
                        lost += src
                    else:
                        stack.append((pl, ph, t, nid, ld2))
    return _Returns(np.asarray(parent, dtype=np.int64), np.asarray(branch, dtype=np.int8),
                    np.asarray(leaves[0], dtype=np.int64), np.asarray(leaves[1]),
                    np.asarray(leaves[2]), np.asarray(leaves[3], dtype=np.int64), lost)


def _pull_orbit(fmap: PMMap, W: np.ndarray, y: np.ndarray, keep: bool = False):
    """Pull points back along words; optionally keep the whole orbit."""
    x = y.copy()
    orbit = []
    for k in range(W.shape[1] - 1, -1, -1):
        x = fmap.inverse(W[:, k][:, None] if x.ndim == 2 else W[:, k], x)
        if keep:
            orbit.append(x)
    return x, orbit[::-1]


def _split_cells(s0, s1, lo: float, h: float, n: int):
    """Cut intervals [s0, s1] at grid edges: (interval index, cell, length)."""
    i0 = np.clip(np.floor((s0 - lo) / h).astype(np.int64), 0, n - 1)
    i1 = np.clip(np.floor((s1 - lo) / h).astype(np.int64), 0, n - 1)
    span = int(np.max(i1 - i0)) if len(s0) else 0
    idx, cell, ln = [], [], []
    base = np.arange(len(s0))
    for m in range(span + 1):
        c = i0 + m
        ok = c <= i1
        a = np.maximum(s0, lo + c * h)
        b = np.minimum(s1, lo + (c + 1) * h)
        b = np.where(c == i1, s1, b)
        a = np.where(c == i0, s0, a)
        ok &= b > a
        idx.append(base[ok])
        cell.append(c[ok])
        ln.append((b - a)[ok])
    return np.concatenate(idx), np.concatenate(cell), np.concatenate(ln)


@dataclass
class _BranchTable:
    """Ulam data of a family of branches onto sub-intervals of Y."""

    ret: _Returns
    z_lo: np.ndarray
    z_hi: np.ndarray
    entry_branch: np.ndarray
    entry_lo: np.ndarray
    entry_hi: np.ndarray
    entry_tgt: np.ndarray


def _branch_table(fmap: PMMap, ret: _Returns, ylo: float, yhi: float, grid_n: int,
                  chunk: int = 4096) -> _BranchTable:
    """Exact Ulam sub-intervals: each branch is cut at the preimages of the Y grid."""
    h = (yhi - ylo) / grid_n
    edges = np.linspace(ylo, yhi, grid_n + 1)
    nb = len(ret.tau)
    z_lo, z_hi = np.empty(nb), np.empty(nb)
    eb, el, eh, et = [], [], [], []
    for tau in np.unique(ret.tau):
        sel_all = np.nonzero(ret.tau == tau)[0]
        for s in range(0, len(sel_all), chunk):
            sel = sel_all[s:s + chunk]
            W = ret.words(sel, int(tau))
            lo_, hi_ = ret.img_lo[sel, None], ret.img_hi[sel, None]
            y = np.clip(edges[None, :], lo_, hi_)
            x, _ = _pull_orbit(fmap, W, y)
            z_lo[sel] = np.minimum(x[:, 0], x[:, -1])
            z_hi[sel] = np.maximum(x[:, 0], x[:, -1])
            a, b = np.minimum(x[:, :-1], x[:, 1:]), np.maximum(x[:, :-1], x[:, 1:])
            tgt = np.broadcast_to(np.arange(grid_n), a.shape)
            ok = b > a
            eb.append(np.broadcast_to(sel[:, None], a.shape)[ok])
            el.append(a[ok])
            eh.append(b[ok])
            et.append(tgt[ok])
    cat = (lambda v: np.concatenate(v) if v else np.zeros(0))
    return _BranchTable(ret, z_lo, z_hi, cat(eb).astype(np.int64), cat(el), cat(eh),
                        cat(et).astype(np.int64))


def _table_matrix(tb: _BranchTable, ylo: float, yhi: float, grid_n: int):
    """Dense Ulam matrix of the branches and the split entries used for it."""
    h = (yhi - ylo) / grid_n
    idx, cell, ln = _split_cells(tb.entry_lo, tb.entry_hi, ylo, h, grid_n)
    P = np.bincount(cell * grid_n + tb.entry_tgt[idx], weights=ln / h,
                    minlength=grid_n * grid_n).reshape(grid_n, grid_n)
    return P, (idx, cell, ln)


def _stationary(P: np.ndarray, iters: int = 20000, tol: float = 1e-13) -> np.ndarray:
    n = P.shape[0]
    p = np.full(n, 1.0 / n)
    PT = P.T.copy()
    for _ in range(iters):
        q = PT @ p
        q /= q.sum()
        if np.abs(q - p).sum() < tol:
            return q
        p = q
    return p


# ----------------------------------------------------------------------
@dataclass
class _Central:
    """Central-branch data: Ulam block, inducing-time integral, orbit groups."""

    C: np.ndarray
    s_delta: float = 0.0
    nu_mass: float = 0.0
    hlog: float = 0.0
    land: np.ndarray = None
    group_mass: np.ndarray = None
    group_w: np.ndarray = None
    depth: int = 0


def _central_pass(g: Exo1Geometry, land_edges: np.ndarray, grid_n: int,
                  dens: np.ndarray | None = None, tau_bin=None, dlog_bin=None,
                  groups: int = 64) -> _Central:
    """Pull the landing bins of (alpha, q) back through the central branch.

    Depth m holds the points whose first exit from [q, q*] happens after m
    central returns; in w = K (3/4 - x) one central return is w -> w^2 + kappa,
    so its inverse is w -> sqrt(w - kappa).  With ``dens`` (the induced acip
    density on the Y grid) the pass also integrates the inducing time, the
    log-derivative and the landing masses.
    """
    K, kap, c = g.K, g.kappa, EXO1_C
    ylo, yhi = g.alpha, g.alpha_star
    h = (yhi - ylo) / grid_n
    L = len(land_edges) - 1
    w = K * (c - land_edges)
    w0 = np.abs(np.diff(w))
    C = np.zeros((grid_n, L))
    out = _Central(C)
    gsz = max(L // groups, 1)
    gid = np.minimum(np.arange(L) // gsz, groups - 1)
    if dens is not None:
        out.land = np.zeros(L)
        gm, gw = [], []
    cols = np.arange(L)
    deep = {}
    m = 0
    while True:
        m += 1
        w = np.sqrt(np.maximum(w - kap, 0.0))
        ln = np.abs(np.diff(w)) / K
        if not np.any(ln > 0) or m > 50 * max(g.n, 1) + 100:
            break
        wm = 0.5 * (w[:-1] + w[1:])
        cl = np.clip(np.floor((c - wm / K - ylo) / h).astype(np.int64), 0, grid_n - 1)
        cr = np.clip(np.floor((c + wm / K - ylo) / h).astype(np.int64), 0, grid_n - 1)
        if dens is None:
            for cc in (cl, cr):
                if cc[0] == cc[-1] and np.all(cc == cc[0]):
                    # deep returns sit in a single cell: accumulate, add once
                    deep.setdefault(int(cc[0]), np.zeros(L))
                    deep[int(cc[0])] += ln / h
                else:
                    C += np.bincount(cc * L + cols, weights=ln / h,
                                     minlength=grid_n * L).reshape(grid_n, L)
            continue
        nm = ln * (dens[cl] + dens[cr])
        out.nu_mass += nm.sum()
        out.s_delta += float(np.sum(nm * (m * g.k + tau_bin)))
        ok = nm > 0
        out.hlog += float(np.sum(nm[ok] * (np.log(w0[ok] / (ln[ok] * K)) + dlog_bin[ok])))
        out.land += nm
        gm.append(np.bincount(gid, weights=nm, minlength=groups))
        gw.append(np.bincount(gid, weights=wm, minlength=groups) / np.bincount(gid, minlength=groups))
    out.depth = m - 1
    for cc, vec in deep.items():
        C[cc] += vec
    if dens is not None and gm:
        out.group_mass, out.group_w = np.array(gm), np.array(gw)
    return out


@dataclass
class _Exo1Build:
    geom: Exo1Geometry
    fmap: PMMap
    ret: _Returns
    table: _BranchTable
    split: tuple
    PX: np.ndarray
    land_edges: np.ndarray
    T: np.ndarray
    tau_bin: np.ndarray
    dlog_bin: np.ndarray
    land_split: tuple
    grid_n: int


def _exo1_base(g: Exo1Geometry, grid_n: int, L: int, tau_max: int) -> _Exo1Build:
    """First returns from X = Y minus [q, q*] to Y and their landing transfer."""
    f = exo1(g.a)
    ylo, yhi = g.alpha, g.alpha_star
    h = (yhi - ylo) / grid_n
    ret = _first_returns(f, [(ylo, g.q), (g.q_star, yhi)], ylo, yhi, tau_max)
    tb = _branch_table(f, ret, ylo, yhi, grid_n)
    PX, split = _table_matrix(tb, ylo, yhi, grid_n)
    land_edges = np.linspace(ylo, g.q, L + 1)
    hl = (g.q - ylo) / L
    left = np.nonzero(tb.z_hi[tb.entry_branch] <= g.q + 1e-15)[0]
    idx, lb, ln = _split_cells(tb.entry_lo[left], tb.entry_hi[left], ylo, hl, L)
    e = left[idx]
    T = np.bincount(lb * grid_n + tb.entry_tgt[e], weights=ln / hl,
                    minlength=L * grid_n).reshape(L, grid_n)
    tau = ret.tau[tb.entry_branch[e]]
    elen = tb.entry_hi[e] - tb.entry_lo[e]
    dl = np.log(h / elen)
    cover = np.bincount(lb, weights=ln, minlength=L)
    cover = np.where(cover > 0, cover, 1.0)
    tau_bin = np.bincount(lb, weights=ln * tau, minlength=L) / cover
    dlog_bin = np.bincount(lb, weights=ln * dl, minlength=L) / cover
    return _Exo1Build(g, f, ret, tb, split, PX, land_edges, T, tau_bin, dlog_bin,
                      (e, lb, ln), grid_n)


def _exo1_solve(b: _Exo1Build, g: Exo1Geometry | None = None):
    """Acip density of the induced map on the Y grid (central block included)."""
    g = b.geom if g is None else g
    cen = _central_pass(g, b.land_edges, b.grid_n)
    P = b.PX + cen.C @ b.T
    rho = _stationary(P)
    h = (g.alpha_star - g.alpha) / b.grid_n
    return rho, rho / h


def _exo1_s_delta(b: _Exo1Build, g: Exo1Geometry, dens: np.ndarray) -> float:
    return _central_pass(g, b.land_edges, b.grid_n, dens, b.tau_bin, b.dlog_bin).s_delta


def exo1_reference(grid_n: int = 512, tau_max: int = 200):
    """Acip of the first return of exo1(32/3) to (alpha, alpha*) and S0 = int tau dnu."""
    f = exo1(EXO1_A0)
    al = _exo1_alpha(EXO1_A0)
    ylo, yhi = al, 1.5 - al
    ret = _first_returns(f, [(ylo, EXO1_C), (EXO1_C, yhi)], ylo, yhi, tau_max)
    tb = _branch_table(f, ret, ylo, yhi, grid_n)
    P, (idx, cell, ln) = _table_matrix(tb, ylo, yhi, grid_n)
    rho = _stationary(P)
    dens = rho / ((yhi - ylo) / grid_n)
    nu = np.bincount(tb.entry_branch[idx], weights=ln * dens[cell], minlength=len(ret.tau))
    return dict(S0=float(np.sum(nu * ret.tau)), nu_total=float(nu.sum()), fmap=f,
                returns=ret, table=tb, nu=nu, density=rho, lost=ret.lost)


def _search_n(k: int, target: float, grid_n: int, L: int, tau_max: int, n_max: int):
    """Minimal n >= 2 with S^delta(k, n) > target (doubling, then bisection)."""
    cache = {}
    state = {}

    def rebuild(n):
        g = exo1_parameter(k, n)[1]
        state["b"] = _exo1_base(g, grid_n, L, tau_max)
        state["dens"] = _exo1_solve(state["b"])[1]

    def sd(n):
        if n not in cache:
            g = exo1_parameter(k, n)[1]
            cache[n] = _exo1_s_delta(state["b"], g, state["dens"])
        return cache[n]

    rebuild(2)
    if sd(2) > target:
        return 2, cache
    lo, hi = 2, 4
    while sd(hi) <= target:
        lo, hi = hi, 2 * hi
        if hi > n_max:
            raise StabilityError(f"n(k) search exceeded n_max={n_max} at k={k}")
    rebuild(hi)
    cache.clear()
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if sd(mid) > target:
            hi = mid
        else:
            lo = mid
    return hi, cache


def _deposit_points(mass, x, grid_n):
    cell = np.clip(np.floor(np.asarray(x) * grid_n).astype(np.int64), 0, grid_n - 1)
    return np.bincount(cell.ravel(), weights=np.broadcast_to(mass, cell.shape).ravel(),
                       minlength=grid_n)


def exo1_measure(k: int, n: int, grid_n: int = 512, L: int = 2048, tau_max: int | None = None,
                 out_grid: int = 4096) -> dict:
    """Acip of exo1(a(k, n)) via its induced map on (alpha, alpha*).

    Returns the spread measure on [0, 1], the inducing-time integrals
    S = S^X + S^delta, the entropy h(nu)/S and the geometry.
    """
    tau_max = 2 * k + 80 if tau_max is None else tau_max
    a, g = exo1_parameter(k, n)
    b = _exo1_base(g, grid_n, L, tau_max)
    rho, dens = _exo1_solve(b)
    cen = _central_pass(g, b.land_edges, grid_n, dens, b.tau_bin, b.dlog_bin)
    tb, ret = b.table, b.ret
    idx, cell, ln = b.split
    h = (g.alpha_star - g.alpha) / grid_n
    ent = tb.entry_branch[idx]
    w_e = ln * dens[cell]
    nu_x = np.bincount(ent, weights=w_e, minlength=len(ret.tau))
    elen = tb.entry_hi[idx] - tb.entry_lo[idx]
    hlog_x = float(np.sum(w_e * np.log(h / elen)))
    e, lb, lln = b.land_split
    hl = b.land_edges[1] - b.land_edges[0]
    land_b = np.bincount(tb.entry_branch[e], weights=lln * cen.land[lb] / hl, minlength=len(ret.tau))
    s_x = float(np.sum(nu_x * ret.tau))
    S = s_x + cen.s_delta
    # spread: X-branch orbits of a representative point per branch
    meas = np.zeros(out_grid)
    ymid = 0.5 * (g.alpha + g.alpha_star)
    for tau in np.unique(ret.tau):
        sel = np.nonzero(ret.tau == tau)[0]
        W = ret.words(sel, int(tau))
        y = np.clip(np.full(len(sel), ymid), ret.img_lo[sel], ret.img_hi[sel])
        _, orb = _pull_orbit(b.fmap, W, y, keep=True)
        X = np.stack(orb, axis=1)
        meas += _deposit_points(((nu_x + land_b)[sel] / S)[:, None], X, out_grid)
    # central passes: k points per return, shared by all deeper exits
    if cen.group_mass is not None:
        Q = np.cumsum(cen.group_mass[::-1], axis=0)[::-1] / S
        s = cen.group_w / g.K
        d = (5.0 / 12.0 - g.delta) / 2.0 ** (k - 1)
        meas += _deposit_points(0.5 * Q, EXO1_C - s, out_grid)
        meas += _deposit_points(0.5 * Q, EXO1_C + s, out_grid)
        u = g.a * s * s - d
        for j in range(1, k):
            meas += _deposit_points(Q, 1.0 / 3.0 + (-2.0) ** (j - 1) * u, out_grid)
    im = IntervalMeasure(out_grid, meas, 0.0, 1.0)
    h_nu = hlog_x + cen.hlog
    return dict(k=k, n=n, a=a, geometry=g, measure=im, S=S, S_X=s_x, S_delta=cen.s_delta,
                nu_total=float(nu_x.sum() + cen.nu_mass), nu_central=cen.nu_mass,
                entropy=h_nu / S, h_nu=h_nu, lost=ret.lost, depth=cen.depth,
                central_width=g.q_star - g.q)


def exo1_tails(a: float, j_max: int = 40, min_src: float = 1e-18) -> dict:
    """Lebesgue measures of first-entry (E_j) and first-return (R_j) sets of (alpha, alpha*)."""
    f = exo1(a)
    al = _exo1_alpha(a)
    ylo, yhi = al, 1.5 - al

    def lengths(starts):
        ret = _first_returns(f, starts, ylo, yhi, j_max + 1, min_src)
        out = np.zeros(j_max + 2)
        for tau in np.unique(ret.tau):
            sel = np.nonzero(ret.tau == tau)[0]
            W = ret.words(sel, int(tau))
            y = np.stack([ret.img_lo[sel], ret.img_hi[sel]], axis=1)
            x, _ = _pull_orbit(f, W, y)
            out[tau] += float(np.sum(np.abs(x[:, 1] - x[:, 0])))
        return out[:j_max + 1], ret.lost

    mE, lostE = lengths([(0.0, ylo), (yhi, 1.0)])
    mE[0] = yhi - ylo
    mR, lostR = lengths([(ylo, EXO1_C), (EXO1_C, yhi)])
    j = np.arange(j_max + 1)
    bE, bR = np.exp(-j / 4.0), np.exp(-j / 8.0)
    return dict(a=a, j=j, m_E=mE, m_R=mR, bound_E=bE, bound_R=bR,
                ok_E=bool(np.all(mE <= bE)), ok_R=bool(np.all(mR <= bR)),
                lost=lostE + lostR)


def exo1_experiment(beta: float, k_list, grid_n: int = 512, L: int = 2048,
                    radius: str | float = "scaled", out_grid: int = 4096,
                    j_max: int = 40, n_max: int = 1 << 17) -> SweepResult:
    """Acips of exo1(a(k, n(k))) with n(k) minimal such that S^delta > beta S0.

    ``radius`` selects the neighbourhood of 1/3: "scaled" uses 2 * 2^(-k/2)
    (the central-branch width scale), "inverse_k" uses 1/k, a number is used as
    is.  Each row also carries the W1 distance to the predicted limit
    (S^X/S) mu0 + (S^delta/S) delta_{1/3}, with mu0 the Ulam acip of exo1(32/3).
    """
    if not beta > 0:
        raise StabilityError("beta must be positive")
    ks = [int(k) for k in k_list]
    ref = exo1_reference(grid_n)
    S0 = ref["S0"]
    mu0 = ulam_acip(exo1(EXO1_A0), out_grid).density
    params, st, ms, notes = [], [], [], []
    rows = []
    for k in ks:
        try:
            n, _ = _search_n(k, beta * S0, grid_n, L, 2 * k + 80, n_max)
            r = exo1_measure(k, n, grid_n, L, out_grid=out_grid)
        except StabilityError as err:
            notes.append(f"k={k}: skipped ({err})")
            continue
        if radius == "inverse_k":
            rad = 1.0 / k
        elif radius == "scaled":
            rad = 2.0 * 2.0 ** (-k / 2)
        else:
            rad = float(radius)
        m = r["measure"]
        near = m.mass_in(1 / 3 - rad, 1 / 3 + rad)
        tails = exo1_tails(r["a"], j_max)
        fx, fd = r["S_X"] / r["S"], r["S_delta"] / r["S"]
        pred = IntervalMeasure(mu0.grid_n, fx * mu0.cell_mass, 0.0, 1.0, [(1 / 3, fd)])
        params.append(k)
        ms.append(m)
        st.append(MeasureStats(r["S"], r["entropy"], r["entropy"], 0.0, math.nan))
        rows.append(dict(k=k, n=n, a=r["a"], delta=r["geometry"].delta, S=r["S"], S_X=r["S_X"],
                         S_delta=r["S_delta"], radius=rad, mass_near=near,
                         mass_near_inv_k=m.mass_in(1 / 3 - 1 / k, 1 / 3 + 1 / k),
                         mass_near_mu0=mu0.mass_in(1 / 3 - rad, 1 / 3 + rad),
                         limit_w1=measure_distance(m, pred),
                         entropy=r["entropy"], central_width=r["central_width"],
                         tails_ok_E=tails["ok_E"], tails_ok_R=tails["ok_R"], tails=tails))
    out = SweepResult(params, st, ms, notes=notes)
    out.extra.update(beta=beta, S0=S0, rows=rows, target=beta / (1 + beta),
                     tails_ref=exo1_tails(EXO1_A0, j_max), mu0=mu0)
    return out


def exo1_entry_integral(k: int, n: int) -> tuple:
    """Lebesgue integral over (q, q*) of the exit time e = k * (central returns).

    Returns (integral, |q* - q|).  Only the two ends of the landing interval
    are needed: the exit-time sets are nested preimages in w.
    """
    g = exo1_parameter(k, n)[1]
    w = np.array([g.K * (EXO1_C - g.q), g.K * (EXO1_C - g.alpha)])
    total, m = 0.0, 0
    while True:
        m += 1
        w = np.sqrt(np.maximum(w - g.kappa, 0.0))
        ln = 2.0 * abs(w[1] - w[0]) / g.K
        if ln <= 0 or m > 50 * n + 100:
            break
        total += ln * m * k
    return total, g.q_star - g.q


def parameter_sweep(family_tag: str, params, t: float = 1.0, method: str = "ulam",
                    grid_n: int = 1024, R: int = 8, tau_max: int = 40) -> SweepResult:
    """Invariant measures along a parameter sequence with consecutive W1 distances.

    ``method`` "ulam" uses the acip (t = 1 only); "markov" uses the
    equilibrium state of the level-R induced map spread to the interval.
    """
    from .thermo import spread
    vals = [float(p) for p in params]
    st, ms, used, notes = [], [], [], []
    for a in vals:
        fmap = keller_map(a) if family_tag == "keller" else make_family(family_tag, a)
        try:
            if method == "ulam":
                res = ulam_acip(fmap, grid_n)
                s, m = _acip_stats(res), res.density
            elif method == "markov":
                ind = level_R_induced(fmap, R, tau_max)
                w = markov_gibbs(ind, t)
                s = stats(ind, w, t)
                m = spread(ind, w, grid_n)[0]
            else:
                raise StabilityError(f"unknown sweep method {method!r}")
        except (PressureError, TowerError) as err:
            notes.append(f"{family_tag}({a}): excluded ({err})")
            continue
        used.append(a)
        st.append(s)
        ms.append(m)
    return SweepResult(used, st, ms, notes=notes)
