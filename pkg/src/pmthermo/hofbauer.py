"""
Hofbauer extension, the canonical level-R first-return map and the
full-branched second induced map.

Domains of the extension are the intervals ``f^k(C)`` for k-cylinders C,
identified numerically.  Points of the extension are pairs (x, D).  The
first-return map to X(R), the union of the non-boundary R-cylinders of the
domains of level at most R, is enumerated by pushing intervals forward one
step at a time and splitting them at branch boundaries and at R-cylinder
boundaries.  Each recorded branch is then pulled back along its word to get
its source interval and derivative samples.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .maps import PMMap
from .symbolic import alphabet, cylinders

DOM_TOL = 1e-10
SNAP_TOL = 1e-11


class TowerError(RuntimeError):
    pass


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class TowerParams:
    R: int
    d: int
    epsilon: float
    eta: float
    hypothesis_ok: bool = True

    @property
    def kac_bound(self) -> float:
        return 1.0 / self.eta

    @property
    def domain_bound(self) -> int:
        return (2 * self.d * self.R) ** 2


def tower_params(R: int, d: int, strict: bool = True) -> TowerParams:
    """eps(R) = 8 log R / R and eta(R, d) = eps^2 / (2 R (log d)^2).

    With ``strict`` the counting hypothesis R >= 8d is enforced;
    otherwise it is only recorded.
    """
    if d < 2 or R < 2:
        raise ValueError("need d >= 2 and R >= 2")
    ok = R >= 8 * d
    if strict and not ok:
        raise ValueError(f"R={R} < 8d={8 * d}: counting hypothesis fails")
    eps = 8.0 * math.log(R) / R
    eta = eps * eps / (2.0 * R * math.log(d) ** 2)
    return TowerParams(R, d, eps, eta, ok)


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class HofDomain:
    lo: float
    hi: float
    theta: str
    level: int


@dataclass
class HofGraph:
    fmap: PMMap
    R: int
    domains: list
    arrows: list  # (src, dst, branch)
    base: int = 0

    @property
    def count_bound(self) -> int:
        return (2 * self.fmap.d * self.R) ** 2

    @property
    def count_ok(self) -> bool:
        return len(self.domains) <= self.count_bound

    def to_dict(self) -> dict:
        return {
            "R": self.R,
            "domains": [{"lo": D.lo, "hi": D.hi, "theta": D.theta, "level": D.level}
                        for D in self.domains],
            "arrows": [{"src": a, "dst": b, "branch": j} for a, b, j in self.arrows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_dot(self) -> str:
        lines = ["digraph hofbauer {"]
        for i, D in enumerate(self.domains):
            lines.append(f'  d{i} [label="{i}: [{D.lo:.6g}, {D.hi:.6g}] lev {D.level}"];')
        alpha = alphabet(self.fmap.d)
        for a, b, j in self.arrows:
            lines.append(f'  d{a} -> d{b} [label="{alpha[j]}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


class _Registry:
    """Numeric interval lookup with tolerance ``DOM_TOL``."""

    def __init__(self):
        self.lo: list = []
        self.hi: list = []
        self.keys: dict = {}

    @staticmethod
    def _key(lo, hi):
        return (round(lo / DOM_TOL), round(hi / DOM_TOL))

    def find(self, lo, hi):
        k0, k1 = self._key(lo, hi)
        for a in (k0, k0 - 1, k0 + 1):
            for b in (k1, k1 - 1, k1 + 1):
                i = self.keys.get((a, b))
                if i is not None and abs(self.lo[i] - lo) <= DOM_TOL \
                        and abs(self.hi[i] - hi) <= DOM_TOL:
                    return i
        return None

    def add(self, lo, hi) -> int:
        i = len(self.lo)
        self.lo.append(lo)
        self.hi.append(hi)
        self.keys[self._key(lo, hi)] = i
        return i


def _child_interval(fmap: PMMap, lo, hi, j):
    a = max(lo, fmap._lo[j])
    b = min(hi, fmap._hi[j])
    if b - a <= DOM_TOL:
        return None
    ya, yb = float(fmap.value(j, a)), float(fmap.value(j, b))
    return (min(ya, yb), max(ya, yb))


def build_extension(fmap: PMMap, R: int) -> HofGraph:
    """Breadth-first Hofbauer extension up to level R."""
    if R < 1:
        raise ValueError("R must be >= 1")
    reg = _Registry()
    reg.add(fmap.ambient_lo, fmap.ambient_hi)
    domains = [HofDomain(fmap.ambient_lo, fmap.ambient_hi, "", 0)]
    arrows = set()
    cap = 10 * (2 * fmap.d * R) ** 2
    alpha = alphabet(fmap.d)
    frontier = [0]
    for level in range(1, R + 1):
        nxt = []
        for i in frontier:
            D = domains[i]
            for j in range(fmap.d):
                iv = _child_interval(fmap, D.lo, D.hi, j)
                if iv is None:
                    continue
                k = reg.find(*iv)
                if k is None:
                    k = reg.add(*iv)
                    domains.append(HofDomain(iv[0], iv[1], D.theta + alpha[j], level))
                    nxt.append(k)
                    if len(domains) > cap:
                        raise TowerError("count bound violated: too many domains")
                arrows.add((i, k, j))
        frontier = nxt
    # arrows out of the top level that land on known domains
    for i in frontier:
        D = domains[i]
        for j in range(fmap.d):
            iv = _child_interval(fmap, D.lo, D.hi, j)
            if iv is not None:
                k = reg.find(*iv)
                if k is not None:
                    arrows.add((i, k, j))
    g = HofGraph(fmap, R, domains, sorted(arrows))
    g._registry = reg
    return g


# ----------------------------------------------------------------------
class _Tower:
    """Dynamic view of the extension used by the branch enumerations.

    Domains of level <= R come from the graph; higher domains are created on
    demand and only tracked as intervals.
    """

    def __init__(self, graph: HofGraph):
        self.g = graph
        self.f = graph.fmap
        self.R = graph.R
        self.reg = _Registry()
        for D in graph.domains:
            self.reg.add(D.lo, D.hi)
        self.n_low = len(graph.domains)
        self.children: dict = {}
        cyl = cylinders(self.f, self.R)
        self.cyl_pts = np.unique(np.concatenate([cyl.lo, cyl.hi]))
        self.cuts = []       # per low domain: sorted interior cut points with ends
        self.comp_id = []    # per low domain: component index of each cell, -1 if boundary
        self.components = []  # (domain, lo, hi)
        for i, D in enumerate(graph.domains):
            pts = self.cyl_pts[(self.cyl_pts > D.lo + SNAP_TOL) & (self.cyl_pts < D.hi - SNAP_TOL)]
            cuts = np.concatenate([[D.lo], pts, [D.hi]])
            ids = np.full(len(cuts) - 1, -1, dtype=np.int64)
            for k in range(1, len(cuts) - 2):
                ids[k] = len(self.components)
                self.components.append((i, float(cuts[k]), float(cuts[k + 1])))
            self.cuts.append(cuts)
            self.comp_id.append(ids)
        self.crit = self.f.breakpoints

    def lo(self, i):
        return self.reg.lo[i]

    def hi(self, i):
        return self.reg.hi[i]

    def child(self, i, j):
        key = (i, j)
        c = self.children.get(key)
        if c is None:
            iv = _child_interval(self.f, self.reg.lo[i], self.reg.hi[i], j)
            if iv is None:
                c = -1
            else:
                c = self.reg.find(*iv)
                if c is None:
                    c = self.reg.add(*iv)
            self.children[key] = c
        return c


@dataclass
class _Enumeration:
    """Raw output of a forward enumeration: nodes plus recorded hits."""

    node_parent: list
    node_branch: list
    node_root: list
    hit_node: list = field(default_factory=list)
    hit_lo: list = field(default_factory=list)
    hit_hi: list = field(default_factory=list)
    hit_tau: list = field(default_factory=list)
    hit_dst: list = field(default_factory=list)
    hit_rho: list = field(default_factory=list)
    trunc_node: list = field(default_factory=list)
    trunc_lo: list = field(default_factory=list)
    trunc_hi: list = field(default_factory=list)
    trunc_tau: list = field(default_factory=list)
    markov_violations: int = 0
    max_pieces_hit: bool = False


def _enumerate(tower: _Tower, roots, tau_max: int, target=None, max_pieces=5_000_000):
    """Push root intervals forward until they land in X(R) (or in ``target``).

    ``roots`` is a list of (domain, lo, hi).  Without ``target`` every
    landing in a component of X(R) is a hit (first return to X).  With
    ``target = (domain, cell, lo, hi)`` only landings inside that interval
    count; visits to other components of X(R) are counted in ``rho``.
    """
    f = tower.f
    flo, fhi, fc = f._lo, f._hi, f._c
    d = f.d
    en = _Enumeration([], [], [])
    stack = []
    for r, (dom, a, b) in enumerate(roots):
        en.node_parent.append(-1)
        en.node_branch.append(-1)
        en.node_root.append(r)
        stack.append((dom, a, b, 0, 0, r))
    n_low = tower.n_low
    pieces = 0
    while stack:
        dom, a, b, tau, rho, node = stack.pop()
        pieces += 1
        if pieces > max_pieces:
            en.max_pieces_hit = True
            en.trunc_node.append(node)
            en.trunc_lo.append(a)
            en.trunc_hi.append(b)
            en.trunc_tau.append(tau)
            continue
        root = en.node_root[node]
        j0 = max(int(np.searchsorted(flo, a, side="right")) - 1, 0)
        for j in range(j0, d):
            if flo[j] >= b:
                break
            aj = a if a > flo[j] else flo[j]
            bj = b if b < fhi[j] else fhi[j]
            if bj - aj <= SNAP_TOL:
                continue
            c2, c1, c0 = fc[j]
            ya = (c2 * aj + c1) * aj + c0
            yb = (c2 * bj + c1) * bj + c0
            if ya > yb:
                ya, yb = yb, ya
            nd = tower.child(dom, j)
            if nd < 0:
                continue
            new = len(en.node_parent)
            en.node_parent.append(node)
            en.node_branch.append(j)
            en.node_root.append(root)
            t1 = tau + 1
            if nd < n_low:
                cuts = tower.cuts[nd]
                ids = tower.comp_id[nd]
                k0 = int(np.searchsorted(cuts, ya + SNAP_TOL, side="left"))
                k1 = int(np.searchsorted(cuts, yb - SNAP_TOL, side="right"))
                # cut points strictly inside (ya, yb)
                pts = [ya] + [float(p) for p in cuts[k0:k1]] + [yb]
                for m in range(len(pts) - 1):
                    pa, pb = pts[m], pts[m + 1]
                    if pb - pa <= SNAP_TOL:
                        continue
                    cell = k0 - 1 + m
                    comp = int(ids[cell]) if 0 <= cell < len(ids) else -1
                    if comp >= 0:
                        if target is None:
                            if abs(pa - cuts[cell]) > 1e-9 * (1 + abs(pa)) or \
                                    abs(pb - cuts[cell + 1]) > 1e-9 * (1 + abs(pb)):
                                en.markov_violations += 1
                            en.hit_node.append(new)
                            en.hit_lo.append(float(cuts[cell]))
                            en.hit_hi.append(float(cuts[cell + 1]))
                            en.hit_tau.append(t1)
                            en.hit_dst.append(comp)
                            en.hit_rho.append(1)
                            continue
                        if nd == target[0] and cell == target[1]:
                            tlo, thi = target[2], target[3]
                            # split at the target endpoints
                            for qa, qb, inside in ((pa, min(pb, tlo), False),
                                                   (max(pa, tlo), min(pb, thi), True),
                                                   (max(pa, thi), pb, False)):
                                if qb - qa <= SNAP_TOL:
                                    continue
                                if inside:
                                    en.hit_node.append(new)
                                    en.hit_lo.append(qa)
                                    en.hit_hi.append(qb)
                                    en.hit_tau.append(t1)
                                    en.hit_dst.append(comp)
                                    en.hit_rho.append(rho + 1)
                                else:
                                    _push(en, stack, nd, qa, qb, t1, rho + 1, new, tau_max)
                            continue
                        _push(en, stack, nd, pa, pb, t1, rho + 1, new, tau_max)
                    else:
                        _push(en, stack, nd, pa, pb, t1, rho, new, tau_max)
            else:
                _push(en, stack, nd, ya, yb, t1, rho, new, tau_max)
    return en


def _push(en, stack, dom, a, b, tau, rho, node, tau_max):
    if tau >= tau_max:
        en.trunc_node.append(node)
        en.trunc_lo.append(a)
        en.trunc_hi.append(b)
        en.trunc_tau.append(tau)
    else:
        stack.append((dom, a, b, tau, rho, node))


def _words(en: _Enumeration, nodes, tau) -> np.ndarray:
    """Branch words (rows) of the given nodes, all of length ``tau``."""
    parent = np.asarray(en.node_parent)
    branch = np.asarray(en.node_branch)
    ids = np.asarray(nodes, dtype=np.int64)
    W = np.empty((len(ids), tau), dtype=np.int8)
    for k in range(tau - 1, -1, -1):
        W[:, k] = branch[ids]
        ids = parent[ids]
    return W


def _pull_back(fmap: PMMap, W: np.ndarray, y: np.ndarray):
    """Pull sample points ``y`` (rows) back along words ``W``.

    Returns the source points and sum of log|Df| along the orbit.
    """
    x = y.copy()
    dlog = np.zeros_like(x)
    for k in range(W.shape[1] - 1, -1, -1):
        j = W[:, k][:, None]
        x = fmap.inverse(j, x)
        with np.errstate(divide="ignore"):
            dlog += np.log(np.abs(fmap.deriv(j, x)))
    return x, dlog


SAMPLE_FRACS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])


def _resolve(fmap: PMMap, en: _Enumeration, nodes, lo, hi, taus):
    """Source intervals and log-derivative brackets of recorded pieces."""
    n = len(nodes)
    z_lo = np.empty(n)
    z_hi = np.empty(n)
    dmin = np.empty(n)
    dmax = np.empty(n)
    dmid = np.empty(n)
    taus = np.asarray(taus)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    nodes = np.asarray(nodes, dtype=np.int64)
    for tau in np.unique(taus):
        sel = np.nonzero(taus == tau)[0]
        W = _words(en, nodes[sel], int(tau))
        y = lo[sel, None] + SAMPLE_FRACS[None, :] * (hi[sel] - lo[sel])[:, None]
        x, dl = _pull_back(fmap, W, y)
        z0 = np.minimum(x[:, 0], x[:, -1])
        z1 = np.maximum(x[:, 0], x[:, -1])
        z_lo[sel], z_hi[sel] = z0, z1
        with np.errstate(divide="ignore"):
            sec = np.log((hi[sel] - lo[sel]) / np.maximum(z1 - z0, 1e-300))
        dmid[sel] = sec
        # samples rounded onto a critical point carry no information
        dl = np.where(np.isfinite(dl), dl, sec[:, None])
        dmin[sel] = np.minimum(np.min(dl, axis=1), sec)
        dmax[sel] = np.maximum(np.max(dl, axis=1), sec)
    return z_lo, z_hi, dmin, dmid, dmax


def _word_strings(fmap, en, nodes, taus):
    out = [None] * len(nodes)
    alpha = alphabet(fmap.d)
    taus = np.asarray(taus)
    nodes = np.asarray(nodes, dtype=np.int64)
    for tau in np.unique(taus):
        sel = np.nonzero(taus == tau)[0]
        W = _words(en, nodes[sel], int(tau))
        for i, row in zip(sel, W):
            out[i] = "".join(alpha[k] for k in row)
    return out


class CountingReport(NamedTuple):
    ok: bool
    n0: int
    n0_empirical: int
    counts: dict
    exceed_asymptotic: list
    exceed_explicit: list


def _log_explicit(n: int, R: int, d: int) -> float:
    return (2 * math.log(2 * d * R) + (n // R) * math.log(16 * d * d * R ** 3)
            + (1 + 2 * R) * math.log(d))


def counting_n0(R: int, d: int) -> int:
    """Least n0 with the explicit count bound <= exp(n eps(R)) for all n >= n0."""
    eps = tower_params(R, d, strict=False).epsilon
    # beyond the last block the slope of the explicit bound is below eps
    if math.log(16 * d * d * R ** 3) / R >= eps:
        raise TowerError("explicit count bound never drops below exp(n eps)")
    n, last_bad = 1, 0
    horizon = 4 * R + int(_log_explicit(0, R, d) / (eps - math.log(16 * d * d * R ** 3) / R)) + R
    while n <= horizon:
        if _log_explicit(n, R, d) > n * eps:
            last_bad = n
        n += 1
    return last_bad + 1


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class InducedBranch:
    omega: str
    theta: str
    theta_star: str
    tau: int
    z_lo: float
    z_hi: float
    source_component: int
    image_component: int
    dlog_min: float
    dlog_max: float


@dataclass
class InducedMap:
    """Truncated first-return map to X(R), stored column-wise."""

    params: TowerParams
    graph: HofGraph
    components: list      # (domain index, lo, hi)
    src: np.ndarray
    dst: np.ndarray
    tau: np.ndarray
    z_lo: np.ndarray
    z_hi: np.ndarray
    dlog_min: np.ndarray
    dlog_mid: np.ndarray
    dlog_max: np.ndarray
    words: list
    tau_max: int
    truncated_mass_hint: int
    truncated_length: float
    markov_violations: int = 0
    _tower: object = None

    def __len__(self):
        return len(self.src)

    @property
    def fmap(self) -> PMMap:
        return self.graph.fmap

    def branch(self, i) -> InducedBranch:
        s, t = int(self.src[i]), int(self.dst[i])
        ds, dt = self.components[s][0], self.components[t][0]
        return InducedBranch(self.words[i], self.graph.domains[ds].theta,
                             self.graph.domains[dt].theta, int(self.tau[i]),
                             float(self.z_lo[i]), float(self.z_hi[i]), s, t,
                             float(self.dlog_min[i]), float(self.dlog_max[i]))

    def tau_counts(self) -> dict:
        vals, cnt = np.unique(self.tau, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, cnt)}

    def counting_check(self) -> "CountingReport":
        """Compare #{tau = n} with exp(n eps(R)) and with the explicit count bound.

        The explicit bound (2dR)^2 (16 d^2 R^3)^floor(n/R) d^(1+2R) holds for
        every n; it drops below exp(n eps(R)) for all n >= ``n0``, so the
        asymptotic bound is asserted from ``n0`` on.  ``n0_empirical`` is the
        first n after which every enumerated count meets exp(n eps(R)).
        """
        R, d, eps = self.params.R, self.params.d, self.params.epsilon
        counts = self.tau_counts()
        n0 = counting_n0(R, d)
        explicit_bad = [n for n, c in counts.items() if math.log(c) > _log_explicit(n, R, d)]
        asym_bad = [n for n, c in counts.items() if c > math.exp(n * eps)]
        late_bad = [n for n in asym_bad if n >= n0]
        n_emp = (max(asym_bad) + 1) if asym_bad else (min(counts) if counts else 1)
        ok = not explicit_bad and not late_bad
        return CountingReport(ok, n0, n_emp, dict(counts), asym_bad, explicit_bad)

    def to_dict(self) -> dict:
        return {
            "R": self.params.R, "epsilon": self.params.epsilon, "eta": self.params.eta,
            "tau_max": self.tau_max, "truncated_mass_hint": self.truncated_mass_hint,
            "truncated_length": self.truncated_length,
            "components": [{"domain": c[0], "lo": c[1], "hi": c[2]} for c in self.components],
            "branches": [{"omega": self.words[i], "tau": int(self.tau[i]),
                          "src": int(self.src[i]), "dst": int(self.dst[i]),
                          "z_lo": float(self.z_lo[i]), "z_hi": float(self.z_hi[i]),
                          "dlog_min": float(self.dlog_min[i]),
                          "dlog_max": float(self.dlog_max[i])} for i in range(len(self))],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def level_R_induced(fmap: PMMap, R: int, tau_max: int, graph: HofGraph | None = None,
                    max_pieces: int = 5_000_000) -> InducedMap:
    """Canonical level-R induced map: first return to the non-boundary R-cylinders."""
    if tau_max < R:
        raise ValueError("tau_max must be >= R")
    params = tower_params(R, fmap.d, strict=False)
    graph = graph or build_extension(fmap, R)
    tower = _Tower(graph)
    if not tower.components:
        raise TowerError("R too large for this map: X(R) has no components")
    roots = [(c[0], c[1], c[2]) for c in tower.components]
    en = _enumerate(tower, roots, tau_max, max_pieces=max_pieces)
    root = np.asarray(en.node_root, dtype=np.int64)
    nodes = np.asarray(en.hit_node, dtype=np.int64)
    z_lo, z_hi, dmin, dmid, dmax = _resolve(fmap, en, nodes, en.hit_lo, en.hit_hi, en.hit_tau)
    words = _word_strings(fmap, en, nodes, en.hit_tau)
    t_len = 0.0
    if en.trunc_node:
        tz0, tz1, *_ = _resolve(fmap, en, en.trunc_node, en.trunc_lo, en.trunc_hi, en.trunc_tau)
        t_len = float(np.sum(tz1 - tz0))
    src = root[nodes] if len(nodes) else np.empty(0, dtype=np.int64)
    order = np.lexsort((z_lo, src))
    ind = InducedMap(params, graph, tower.components, src[order],
                     np.asarray(en.hit_dst, dtype=np.int64)[order],
                     np.asarray(en.hit_tau, dtype=np.int64)[order],
                     z_lo[order], z_hi[order], dmin[order], dmid[order], dmax[order],
                     [words[i] for i in order], tau_max, len(en.trunc_node), t_len,
                     en.markov_violations)
    ind._tower = tower
    return ind


# ----------------------------------------------------------------------
@dataclass
class PrimitivePartition:
    classes: list        # lists of component indices, largest total length first
    unassigned: list

    def __len__(self):
        return len(self.classes)


def primitive_components(ind: InducedMap) -> PrimitivePartition:
    """Linked classes of components whose self-return has at least 2 branches."""
    n = len(ind.components)
    if len(ind) == 0:
        return PrimitivePartition([], list(range(n)))
    A = coo_matrix((np.ones(len(ind)), (ind.src, ind.dst)), shape=(n, n)).tocsr()
    ncomp, labels = connected_components(A, directed=True, connection="strong")
    lengths = np.array([c[2] - c[1] for c in ind.components])
    classes, unassigned = [], []
    same = labels[ind.src] == labels[ind.dst]
    inner = np.bincount(labels[ind.src[same]], minlength=ncomp)
    size = np.bincount(labels, minlength=ncomp)
    for k in range(ncomp):
        members = np.nonzero(labels == k)[0]
        if inner[k] > size[k]:
            classes.append(sorted(members.tolist()))
        else:
            unassigned.extend(members.tolist())
    classes.sort(key=lambda m: (-float(np.sum(lengths[m])), m[0]))
    return PrimitivePartition(classes, sorted(unassigned))


# ----------------------------------------------------------------------
@dataclass
class FullBranchMap:
    """First-return map to a base interval Y0 inside X(R); every branch is onto Y0."""

    fmap: PMMap
    params: TowerParams
    y0: tuple
    y0_domain: tuple
    K: int
    z_lo: np.ndarray
    z_hi: np.ndarray
    tau0: np.ndarray
    rho: np.ndarray
    dlog_min: np.ndarray
    dlog_mid: np.ndarray
    dlog_max: np.ndarray
    words: list
    koebe_margin: float
    tau_max: int
    truncated_count: int
    truncated_length: float
    _en: object = None
    _nodes: object = None

    def __len__(self):
        return len(self.tau0)

    @property
    def y0_length(self) -> float:
        return self.y0[1] - self.y0[0]

    @property
    def budget(self) -> float:
        """Relative Lebesgue length of Y0 not covered by resolved branches."""
        return max(self.truncated_length / self.y0_length,
                   1.0 - float(np.sum(self.z_hi - self.z_lo)) / self.y0_length, 0.0)

    def expanding(self) -> bool:
        return bool(np.all(self.dlog_min > math.log(2.0)))

    def koebe_ok(self) -> bool:
        k = self.koebe_margin
        return bool(np.all(self.dlog_max - self.dlog_min <= 2.0 * math.log1p(1.0 / k) + 1e-9))

    def tail_counts(self) -> dict:
        vals, cnt = np.unique(self.tau0, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, cnt)}

    def tail_slope(self, n_from: int | None = None) -> float:
        """Least-squares slope of n -> log #{tau0 = n} over the upper half."""
        c = self.tail_counts()
        ns = np.array(sorted(c))
        if n_from is None:
            n_from = ns[len(ns) // 2] if len(ns) else 0
        sel = ns >= n_from
        if np.sum(sel) < 2:
            return float("nan")
        return float(np.polyfit(ns[sel], np.log([c[n] for n in ns[sel]]), 1)[0])

    def orbit_points(self, idx, y):
        """Orbit segments x, f(x), ..., f^{tau0-1}(x) of the points of branch ``idx``
        that land on the image points ``y`` (rows: branches, cols: samples).

        Returns a list (over tau values) of (branch indices, points with shape
        (len, samples, tau0), log|DG| at the start points).
        """
        out = []
        idx = np.asarray(idx)
        if self._en is None:
            y = np.asarray(y, dtype=float)
            j = np.arange(len(self))[idx][:, None]
            x = self.fmap.inverse(j, y)
            dlog = np.log(np.abs(self.fmap.deriv(j, x)))
            return [(idx, x[..., None], dlog)]
        taus = self.tau0[idx]
        for tau in np.unique(taus):
            sel = np.nonzero(taus == tau)[0]
            W = _words(self._en, self._nodes[idx[sel]], int(tau))
            x = np.asarray(y, dtype=float)[sel].copy()
            pts = np.empty(x.shape + (int(tau),))
            dlog = np.zeros_like(x)
            for k in range(int(tau) - 1, -1, -1):
                j = W[:, k][:, None]
                x = self.fmap.inverse(j, x)
                with np.errstate(divide="ignore"):
                    dlog += np.log(np.abs(self.fmap.deriv(j, x)))
                pts[..., k] = x
            out.append((idx[sel], pts, dlog))
        return out


def _fb_enumerate(ind: InducedMap, y0_dom, cell, ylo, yhi, tau_max, max_pieces):
    tower = ind._tower
    en = _enumerate(tower, [(y0_dom, ylo, yhi)], tau_max,
                    target=(y0_dom, cell, ylo, yhi), max_pieces=max_pieces)
    return en


def _candidates(ind: InducedMap, members, K: int, beam: int = 64):
    """Candidate base intervals: K-cylinders of the induced map in ``members``.

    Returns (length, lo, hi, component) tuples, longest first then leftmost.
    """
    mset = set(members)
    cands = [(c[2] - c[1], c[1], c[2], m, "") for m, c in
             ((m, ind.components[m]) for m in members)]
    for _ in range(K):
        nxt = []
        for length, lo, hi, m, word in cands:
            sel = np.nonzero(ind.src == m)[0]
            for i in sel:
                if int(ind.dst[i]) not in mset:
                    continue
                # sub-interval of the current cylinder that follows branch i
                if word:
                    W = np.array([[ "LR".index(ch) if ind.fmap.d == 2 else int(ch) - 1
                                    for ch in word]], dtype=np.int8)
                    pts, _ = _pull_back(ind.fmap, W, np.array([[ind.z_lo[i], ind.z_hi[i]]]))
                    a, b = float(min(pts[0])), float(max(pts[0]))
                else:
                    a, b = float(ind.z_lo[i]), float(ind.z_hi[i])
                nxt.append((b - a, a, b, m, word + ind.words[i]))
        nxt.sort(key=lambda c: (-c[0], c[1]))
        cands = nxt[:beam]
    cands.sort(key=lambda c: (-c[0], c[1]))
    return [(c[0], c[1], c[2], c[3]) for c in cands]


def full_branch_map(ind: InducedMap, primitive_index: int = 0, K: int = 0,
                    tau_max: int = 30, max_K: int = 3, tries: int = 6,
                    probe_tau: int = 8, max_pieces: int = 3_000_000) -> FullBranchMap:
    """Full-branched first-return map to a K-cylinder Y0 of the induced map.

    Candidates are tried longest first (leftmost among ties); the first
    whose return branches are all expanding (|DG| > 2) on a short probe is
    enumerated up to ``tau_max``.  K is incremented when no candidate passes.
    """
    part = primitive_components(ind)
    if not part.classes:
        raise TowerError("no primitive component")
    members = part.classes[primitive_index]
    tower = ind._tower
    for k in range(K, max_K + 1):
        for _length, lo, hi, m in _candidates(ind, members, k)[:tries]:
            dom = ind.components[m][0]
            cells = tower.comp_id[dom]
            cell = int(np.nonzero(cells == m)[0][0])
            probe = _fb_enumerate(ind, dom, cell, lo, hi, min(probe_tau, tau_max), max_pieces)
            if probe.hit_node:
                _, _, pmin, _, _ = _resolve(ind.fmap, probe, probe.hit_node,
                                            probe.hit_lo, probe.hit_hi, probe.hit_tau)
                if np.any(pmin <= math.log(2.0)):
                    continue
            en = _fb_enumerate(ind, dom, cell, lo, hi, tau_max, max_pieces)
            if not en.hit_node:
                continue
            fb = _assemble_fb(ind, en, dom, lo, hi, k, tau_max)
            if not fb.expanding():
                continue
            return fb
    raise TowerError("tails too heavy at this truncation: no expanding full-branch base found")


def _assemble_fb(ind, en, dom, lo, hi, K, tau_max) -> FullBranchMap:
    fmap = ind.fmap
    nodes = np.asarray(en.hit_node, dtype=np.int64)
    z_lo, z_hi, dmin, dmid, dmax = _resolve(fmap, en, nodes, en.hit_lo, en.hit_hi, en.hit_tau)
    words = _word_strings(fmap, en, nodes, en.hit_tau)
    t_len = 0.0
    if en.trunc_node:
        tz0, tz1, *_ = _resolve(fmap, en, en.trunc_node, en.trunc_lo, en.trunc_hi, en.trunc_tau)
        t_len = float(np.sum(tz1 - tz0))
    order = np.argsort(z_lo, kind="stable")
    D = ind.graph.domains[dom]
    margin = min(lo - D.lo, D.hi - hi) / (hi - lo)
    return FullBranchMap(
        fmap, ind.params, (lo, hi), (D.lo, D.hi), K, z_lo[order], z_hi[order],
        np.asarray(en.hit_tau, dtype=np.int64)[order],
        np.asarray(en.hit_rho, dtype=np.int64)[order],
        dmin[order], dmid[order], dmax[order], [words[i] for i in order],
        float(margin), tau_max, len(en.trunc_node), t_len, en, nodes[order])


def direct_full_branch(fmap: PMMap) -> FullBranchMap:
    """Treat a map whose branches are all onto its interval as its own full-branch map."""
    y0 = (fmap.ambient_lo, fmap.ambient_hi)
    for j in range(fmap.d):
        a, b = fmap.image(j)
        if abs(a - y0[0]) > 1e-12 or abs(b - y0[1]) > 1e-12:
            raise TowerError(f"branch {j} is not onto the interval")
    lo, hi = fmap._lo.copy(), fmap._hi.copy()
    x = lo[:, None] + SAMPLE_FRACS[None, :] * (hi - lo)[:, None]
    j = np.arange(fmap.d)[:, None]
    with np.errstate(divide="ignore"):
        dl = np.log(np.abs(fmap.deriv(j, x)))
    sec = np.log((y0[1] - y0[0]) / (hi - lo))
    dl = np.where(np.isfinite(dl), dl, sec[:, None])
    alpha = alphabet(fmap.d)
    params = tower_params(max(1, fmap.d), fmap.d, strict=False)
    return FullBranchMap(fmap, params, y0, y0, 0, lo, hi, np.ones(fmap.d, dtype=np.int64),
                         np.zeros(fmap.d, dtype=np.int64), np.minimum(dl.min(axis=1), sec),
                         sec, np.maximum(dl.max(axis=1), sec), list(alpha[:fmap.d]),
                         math.inf, 1, 0, 0.0)


def induced_pipeline(fmap: PMMap, R: int, tau_max: int, fb_tau_max: int | None = None,
                     K: int = 0, primitive_index: int = 0):
    """Convenience: extension, level-R map and full-branch map in one call."""
    graph = build_extension(fmap, R)
    ind = level_R_induced(fmap, R, tau_max, graph=graph)
    fb = full_branch_map(ind, primitive_index, K, tau_max=fb_tau_max or tau_max)
    return graph, ind, fb
