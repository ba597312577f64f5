"""
Pressure, Gibbs weights and equilibrium statistics for induced maps.

The geometric potential -t log|Df| is lifted to a full-branch first-return
map G with branches Z_i and return times tau_i.  The pressure p(t) is the
root v of

    Z(t, v) = sum_i exp(-t log|DG_i| - v tau_i) = 1,

and the equilibrium state is the spread of the Bernoulli measure with
weights nu_i = exp(-t log|DG_i| - p tau_i).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import ArpackNoConvergence, eigs
from scipy.special import logsumexp

from .hofbauer import (FullBranchMap, InducedMap, induced_pipeline, level_R_induced,
                       primitive_components)
from .maps import PMMap
from .symbolic import cylinders

V_CAP = 200.0
ROOT_TOL = 1e-14


class PressureError(RuntimeError):
    pass


@dataclass
class GibbsWeights:
    weights: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    pressure: float
    t: float
    mean_tau: float
    budget: float = 0.0

    def __len__(self):
        return len(self.weights)


@dataclass
class MeasureStats:
    T: float
    lam: float
    entropy: float
    free_energy: float
    entropy_direct: float = float("nan")


@dataclass
class IntervalMeasure:
    """Masses on a uniform grid over [lo, hi] plus a list of atoms."""

    grid_n: int
    cell_mass: np.ndarray
    lo: float = 0.0
    hi: float = 1.0
    atoms: list = field(default_factory=list)

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.grid_n + 1)

    @property
    def total(self) -> float:
        return float(np.sum(self.cell_mass) + sum(m for _, m in self.atoms))

    def density(self) -> np.ndarray:
        return self.cell_mass / ((self.hi - self.lo) / self.grid_n)

    def mass_in(self, a: float, b: float) -> float:
        """Mass of [a, b], splitting partially covered cells proportionally."""
        e = self.edges
        ov = np.clip(np.minimum(e[1:], b) - np.maximum(e[:-1], a), 0.0, None)
        m = float(np.sum(self.cell_mass * ov / (e[1] - e[0])))
        return m + sum(w for x, w in self.atoms if a <= x <= b)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell_lo", "cell_hi", "mass"])
        e = self.edges
        for i in range(self.grid_n):
            w.writerow([f"{e[i]:.17g}", f"{e[i + 1]:.17g}", f"{self.cell_mass[i]:.17g}"])
        w.writerow(["# atoms"])
        w.writerow(["location", "mass"])
        for x, m in self.atoms:
            w.writerow([f"{x:.17g}", f"{m:.17g}"])
        return buf.getvalue()


@dataclass
class PressureCurve:
    t_values: np.ndarray
    p_values: np.ndarray
    p_lo: np.ndarray
    p_hi: np.ndarray
    lambda_values: np.ndarray
    entropy_values: np.ndarray
    E_plus_values: np.ndarray
    P0_values: np.ndarray
    t_minus: float
    t_plus: float
    lambda_min: float
    lambda_max: float
    resolved: np.ndarray = None

    def convexity_defect(self) -> float:
        """Most negative discrete second difference (scaled by the step)."""
        t, p = self.t_values, self.p_values
        ok = np.isfinite(p)
        t, p = t[ok], p[ok]
        if len(t) < 3:
            return 0.0
        s = np.diff(np.diff(p) / np.diff(t))
        return float(min(0.0, np.min(s)))

    def derivative_gap(self) -> np.ndarray:
        """|central difference of p + lambda| at interior samples."""
        t, p, lam = self.t_values, self.p_values, self.lambda_values
        dp = (p[2:] - p[:-2]) / (t[2:] - t[:-2])
        return np.abs(dp + lam[1:-1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "p_lo", "p_mid", "p_hi", "lambda", "entropy", "E_plus", "P0"])
        for row in zip(self.t_values, self.p_lo, self.p_values, self.p_hi,
                       self.lambda_values, self.entropy_values, self.E_plus_values,
                       self.P0_values):
            w.writerow([f"{float(x):.17g}" for x in row])
        return buf.getvalue()


# ----------------------------------------------------------------------
def _log_z(t, v, dlog, tau):
    return float(logsumexp(-t * dlog - v * tau))


def _root(t, dlog, tau, log_extra=None):
    """Root of log Z(t, v) = 0 in v; ``log_extra(v)`` adds a tail term."""
    if len(dlog) == 0:
        raise PressureError("empty branch set")

    def g(v):
        lz = _log_z(t, v, dlog, tau)
        if log_extra is not None:
            lz = float(np.logaddexp(lz, log_extra(v)))
        return lz

    lo, hi = -1.0, 1.0
    while g(lo) <= 0.0:
        lo *= 2.0
        if lo < -V_CAP:
            raise PressureError("pressure not resolved at this truncation")
    while g(hi) >= 0.0:
        hi *= 2.0
        if hi > V_CAP:
            raise PressureError("pressure not resolved at this truncation")
    return brentq(g, lo, hi, xtol=ROOT_TOL, rtol=4 * np.finfo(float).eps, maxiter=500)


def branch_sum(fb: FullBranchMap, t: float, v: float, which: str = "mid") -> float:
    dlog = {"min": fb.dlog_min, "mid": fb.dlog_mid, "max": fb.dlog_max}[which]
    return math.exp(_log_z(t, v, dlog, fb.tau0))


def _tail_term(fb: FullBranchMap, t: float, dlog):
    """Geometric extrapolation of the per-tau sums beyond tau_max (None if not decaying)."""
    taus = np.unique(fb.tau0)
    if len(taus) < 4:
        return None
    lz = np.array([logsumexp(-t * dlog[fb.tau0 == n]) for n in taus])
    sel = taus >= taus[len(taus) // 2]
    slope, icpt = np.polyfit(taus[sel], lz[sel], 1)
    n1 = fb.tau_max + 1

    def log_extra(v):
        r = slope - v
        if r >= 0.0:
            return math.inf
        return icpt + r * n1 - math.log1p(-math.exp(r))

    return log_extra


def solve_pressure(fb: FullBranchMap, t: float):
    """Pressure p(t) and a (lower, upper) bracket.

    The lower end uses the largest derivative of every branch, the upper end
    the smallest one plus an extrapolated tail for the truncated branches.
    """
    t = float(t)
    p = _root(t, fb.dlog_mid, fb.tau0)
    big, small = (fb.dlog_max, fb.dlog_min) if t >= 0 else (fb.dlog_min, fb.dlog_max)
    p_lo = _root(t, big, fb.tau0)
    extra = _tail_term(fb, t, small)
    try:
        p_hi = _root(t, small, fb.tau0, extra)
    except PressureError:
        p_hi = math.inf
    return p, (min(p_lo, p), max(p_hi, p))


def gibbs_weights(fb: FullBranchMap, t: float, p: float | None = None,
                  brackets=None) -> GibbsWeights:
    """Bernoulli weights nu_i = exp(-t log|DG_i| - p tau_i), normalized."""
    if p is None:
        p, brackets = solve_pressure(fb, t)
    if brackets is None:
        brackets = (p, p)
    logw = -t * fb.dlog_mid - p * fb.tau0
    w = np.exp(logw - logsumexp(logw))
    cand = [-t * d - q * fb.tau0 for d in (fb.dlog_min, fb.dlog_max)
            for q in brackets if math.isfinite(q)]
    lower = np.exp(np.min(cand, axis=0))
    upper = np.exp(np.max(cand, axis=0))
    return GibbsWeights(w, lower, upper, float(p), float(t), float(np.sum(w * fb.tau0)),
                        fb.budget)


def stats(fb, w, t: float | None = None) -> MeasureStats:
    """Abramov statistics of the spread of Gibbs weights.

    Works for a FullBranchMap with GibbsWeights and for an InducedMap with
    MarkovGibbs.  The entropy is h = p + t lambda; the plain sum
    -sum nu log nu / T is kept as a diagnostic (exact only for Bernoulli
    weights on a full shift).
    """
    t = w.t if t is None else float(t)
    T = w.mean_tau
    dl = fb.dlog_mid if isinstance(w, GibbsWeights) else fb.dlog_mid[w.branches]
    lam = float(np.sum(w.weights * dl)) / T
    h = w.pressure + t * lam
    nz = w.weights[w.weights > 0]
    h_direct = float(-np.sum(nz * np.log(nz))) / T
    return MeasureStats(T, lam, h, h - t * lam, h_direct)


def tail_exponent(fb: FullBranchMap, w: GibbsWeights, n_from: int | None = None):
    """Fitted decay rate of n -> log nu(tau0 = n) on the full-branch map.

    Least squares over n >= ``n_from`` (default: the upper half of the
    enumerated inducing times).  Returns (slope, n values, masses).
    """
    ns = np.unique(fb.tau0)
    mass = np.array([w.weights[fb.tau0 == n].sum() for n in ns])
    if n_from is None:
        n_from = ns[len(ns) // 2] if len(ns) else 0
    sel = (ns >= n_from) & (mass > 0)
    if np.sum(sel) < 2:
        return math.nan, ns, mass
    return float(np.polyfit(ns[sel], np.log(mass[sel]), 1)[0]), ns, mass


def _grid_index(x, lo, hi, n):
    return np.clip(((x - lo) / (hi - lo) * n).astype(np.int64), 0, n - 1)


def _word_matrix(words, d: int) -> np.ndarray:
    raw = np.frombuffer("".join(words).encode("ascii"), dtype=np.uint8)
    if d == 2:
        ids = (raw == ord("R")).astype(np.int64)
    else:
        ids = raw.astype(np.int64) - ord("1")
    return ids.reshape(len(words), -1)


def _deposit(mass, diff, a, b, w, lo, hi, n):
    """Add mass w spread uniformly over [a, b] (points when a == b) to the grid."""
    a, b = np.minimum(a, b), np.maximum(a, b)
    h = (hi - lo) / n
    ia = _grid_index(a, lo, hi, n)
    ib = _grid_index(b, lo, hi, n)
    same = ia == ib
    np.add.at(mass, ia[same], w[same])
    a, b, w, ia, ib = a[~same], b[~same], w[~same], ia[~same], ib[~same]
    s = w / (b - a)
    np.add.at(mass, ia, s * (lo + (ia + 1) * h - a))
    np.add.at(mass, ib, s * (b - (lo + ib * h)))
    np.add.at(diff, ia + 1, s * h)
    np.add.at(diff, ib, -s * h)


def _spread_core(fmap: PMMap, words, tau, tgt_lo, tgt_hi, nu, T, t, dens, grid_n,
                 max_nodes, node_budget):
    """Deposit the orbit segments of every branch on a uniform grid.

    Branch i maps onto (tgt_lo[i], tgt_hi[i]), which is cut into m_i equal
    pieces, at most one per grid cell; about node_budget * grid_n pieces
    are shared out over all branches.  Each piece is pulled back along the branch and carries the
    induced measure's density ``dens(i, y)`` at its midpoint times the
    relative distortion |DG|^-t, scaled so the branch carries nu[i] / T per
    orbit step.  Every image f^k of a piece receives its weight spread
    uniformly.  Returns (cell masses, Birkhoff sum of log|Df|, crit hits).
    """
    lo, hi = fmap.ambient_lo, fmap.ambient_hi
    cell = (hi - lo) / grid_n
    mass = np.zeros(grid_n)
    diff = np.zeros(grid_n + 1)
    lyap = 0.0
    hits = 0
    tgt_len = np.asarray(tgt_hi) - np.asarray(tgt_lo)
    m_full = np.clip(np.ceil(tgt_len / cell), 1, max_nodes)
    # node budget split as sqrt(nu tau |target|), which minimizes the summed
    # transport error; counts are rounded up to powers of two to keep the
    # number of (tau, m) groups small
    c = np.sqrt(np.asarray(nu) * tau * tgt_len)
    share = node_budget * grid_n * c / max(float(c.sum()), 1e-300)
    m = np.minimum(np.ceil(share), m_full)
    m = np.minimum(2.0 ** np.ceil(np.log2(np.maximum(m, 1.0))), m_full).astype(np.int64)
    key = tau * (max_nodes + 1) + m
    for kv in np.unique(key):
        idx = np.nonzero(key == kv)[0]
        n_tau, mi = int(tau[idx[0]]), int(m[idx[0]])
        fr = np.arange(2 * mi + 1) / (2 * mi)
        y = tgt_lo[idx, None] + fr[None, :] * tgt_len[idx, None]
        omega = dens(idx, y[:, 1::2]) if mi > 1 else np.ones((len(idx), 1))
        W = _word_matrix([words[i] for i in idx], fmap.d)
        x = y.copy()
        pts = np.empty(y.shape + (n_tau,))
        dlog = np.zeros_like(y)
        for k in range(n_tau - 1, -1, -1):
            j = W[:, k][:, None]
            x = fmap.inverse(j, x)
            with np.errstate(divide="ignore"):
                dlog += np.log(np.abs(fmap.deriv(j, x)))
            pts[..., k] = x
        dmid = dlog[:, 1::2]
        fin = np.isfinite(dmid)
        dmid = np.where(fin, dmid, 0.0)
        centre = dmid.sum(axis=1, keepdims=True) / np.maximum(fin.sum(axis=1, keepdims=True), 1)
        rel = np.where(fin, -t * (dmid - centre), 0.0)
        wt = omega * np.exp(rel)
        wt = wt / wt.sum(axis=1, keepdims=True) * (nu[idx] / T)[:, None]
        ww = np.repeat(wt.reshape(-1), n_tau)
        a = pts[:, 0:-1:2, :].reshape(-1)
        b = pts[:, 2::2, :].reshape(-1)
        _deposit(mass, diff, a, b, ww, lo, hi, grid_n)
        mids = pts[:, 1::2, :].reshape(-1)
        j = fmap.branch_of(mids)
        ok = j >= 0
        hits += int(np.sum(~ok))
        lyap += float(np.sum(ww[ok] * np.log(np.abs(fmap.deriv(j[ok], mids[ok])))))
    mass += np.cumsum(diff)[:grid_n]
    return np.maximum(mass, 0.0), lyap, hits


def _partition_density(key_lo, key_hi, nu):
    """Density lookup for a measure given as masses on disjoint sorted intervals."""
    order = np.argsort(key_lo, kind="stable")
    a, b, w = key_lo[order], key_hi[order], nu[order]
    dens = w / np.maximum(b - a, 1e-300)

    def lookup(keys):
        k = np.clip(np.searchsorted(a, keys, side="right") - 1, 0, len(a) - 1)
        return np.where(keys <= b[k], dens[k], 0.0) + 1e-300

    return lookup


def spread(fb, w, grid_n: int, max_nodes: int = 1 << 16, node_budget: float = 64.0):
    """Spread of induced Gibbs weights to the interval, as an IntervalMeasure.

    Inside a branch the mass follows the pull-back of the induced measure
    on the branch target (read off from the branch partition itself),
    reweighted by the relative distortion |DG|^-t.  Each node is carried
    along its orbit for tau steps and deposits weight / T in every visited
    cell.  Returns the measure and the Lyapunov exponent of the same
    Birkhoff sums.
    """
    f = fb.fmap
    if isinstance(w, GibbsWeights):
        n = len(fb)
        tgt_lo = np.full(n, fb.y0[0])
        tgt_hi = np.full(n, fb.y0[1])
        look = _partition_density(fb.z_lo, fb.z_hi, w.weights)

        def dens(idx, y):
            return look(y)

        words, tau, nu = fb.words, fb.tau0, w.weights
    else:
        sel = w.branches
        comps = fb.components
        span = 2.0 * (f.ambient_hi - f.ambient_lo)
        src, dst = fb.src[sel], fb.dst[sel]
        base = f.ambient_lo
        look = _partition_density(src + (fb.z_lo[sel] - base) / span,
                                  src + (fb.z_hi[sel] - base) / span, w.weights)
        tgt_lo = np.array([comps[c][1] for c in dst])
        tgt_hi = np.array([comps[c][2] for c in dst])

        def dens(idx, y):
            return look(dst[idx][:, None] + (y - base) / span)

        words = [fb.words[i] for i in sel]
        tau, nu = fb.tau[sel], w.weights
    mass, lyap, hits = _spread_core(f, words, np.asarray(tau), tgt_lo, tgt_hi, nu,
                                    w.mean_tau, w.t, dens, grid_n, max_nodes, node_budget)
    tot = mass.sum()
    meas = IntervalMeasure(grid_n, mass / tot, f.ambient_lo, f.ambient_hi)
    meas.critical_hits = hits
    return meas, lyap / tot


# ----------------------------------------------------------------------
def periodic_orbits(fmap: PMMap, max_period: int):
    """Repelling periodic points found in n-cylinders C with C inside f^n(C).

    Returns a list of (period, point, lyapunov exponent).
    """
    out = []
    for n in range(1, max_period + 1):
        cs = cylinders(fmap, n)
        W = cs.word_ids.astype(np.int64)

        def g(x, W=W):
            y = x.copy()
            for k in range(n):
                y = fmap.value(W[:, k], y)
            return y - x

        a, b = cs.lo.copy(), cs.hi.copy()
        ga, gb = g(a), g(b)
        ok = ga * gb <= 0
        a, b, ga, W = a[ok], b[ok], ga[ok], W[ok]
        if not len(a):
            continue
        exact = ga == 0
        for _ in range(80):
            mid = 0.5 * (a + b)
            gm = g(mid, W)
            left = np.sign(gm) == np.sign(ga)
            a = np.where(left, mid, a)
            ga = np.where(left, gm, ga)
            b = np.where(left, b, mid)
        x = np.where(exact, cs.lo[ok], 0.5 * (a + b))
        dl = np.zeros_like(x)
        y = x.copy()
        for k in range(n):
            dl += np.log(np.abs(fmap.deriv(W[:, k], y)))
            y = fmap.value(W[:, k], y)
        for xi, di in zip(x, dl):
            if di > 0:
                out.append((n, float(xi), float(di) / n))
    return out


def periodic_pressure(fmap: PMMap, t: float, max_period: int):
    """(E_plus, lambda_min, lambda_max) over repelling orbits of period <= max_period."""
    if max_period < 1:
        raise PressureError("max_period must be >= 1")
    orbs = periodic_orbits(fmap, max_period)
    if not orbs:
        return -math.inf, math.nan, math.nan
    lams = np.array([o[2] for o in orbs])
    return float(np.max(-t * lams)), float(lams.min()), float(lams.max())


# ----------------------------------------------------------------------
@dataclass
class MarkovGibbs:
    """Gibbs measure of the level-R induced map viewed as a Markov shift."""

    weights: np.ndarray
    branches: np.ndarray
    pressure: float
    t: float
    mean_tau: float
    budget: float
    states: np.ndarray
    brackets: tuple = (math.nan, math.nan)

    def __len__(self):
        return len(self.weights)


def _spectral_radius(A) -> tuple:
    n = A.shape[0]
    if n <= 400:
        M = A.toarray()
        vals, vecs = np.linalg.eig(M)
        k = int(np.argmax(vals.real))
        lv, lvec = np.linalg.eig(M.T)
        kl = int(np.argmax(lv.real))
        return float(vals[k].real), np.abs(vecs[:, k].real), np.abs(lvec[:, kl].real)
    try:
        vals, vecs = eigs(A, k=1, which="LR", tol=1e-13, maxiter=50000)
        lv, lvec = eigs(A.T.tocsr(), k=1, which="LR", tol=1e-13, maxiter=50000)
    except ArpackNoConvergence as err:
        raise PressureError(f"eigenvalue iteration did not converge: {err}") from None
    return float(vals[0].real), np.abs(vecs[:, 0].real), np.abs(lvec[:, 0].real)


def _markov_system(ind: InducedMap, primitive_index: int):
    part = primitive_components(ind)
    if not part.classes:
        raise PressureError("no primitive component")
    members = np.asarray(sorted(part.classes[primitive_index]))
    pos = -np.ones(len(ind.components), dtype=np.int64)
    pos[members] = np.arange(len(members))
    sel = np.nonzero((pos[ind.src] >= 0) & (pos[ind.dst] >= 0))[0]
    return members, sel, pos[ind.src[sel]], pos[ind.dst[sel]]


def _markov_root(t, dl, tau, r, c, n):
    def mat(v):
        return coo_matrix((np.exp(-t * dl - v * tau), (r, c)), shape=(n, n)).tocsr()

    def g(v):
        return math.log(_spectral_radius(mat(v))[0])

    lo, hi = -1.0, 1.0
    while g(lo) <= 0:
        lo *= 2
        if lo < -V_CAP:
            raise PressureError("pressure not resolved at this truncation")
    while g(hi) >= 0:
        hi *= 2
        if hi > V_CAP:
            raise PressureError("pressure not resolved at this truncation")
    return brentq(g, lo, hi, xtol=1e-13), mat


def markov_pressure(ind: InducedMap, t: float, primitive_index: int = 0):
    """Pressure from the level-R induced map: spectral radius of W(t, v) equal to 1.

    W_AB(t, v) sums exp(-t log|DF_i| - v tau_i) over branches from component
    A to component B.  This resolves the sum over all first returns to any
    base interval at once, so it needs no full-branch enumeration.
    Returns (p, (p_lo, p_hi)).
    """
    t = float(t)
    members, sel, r, c = _markov_system(ind, primitive_index)
    tau = ind.tau[sel]
    n = len(members)
    p, _ = _markov_root(t, ind.dlog_mid[sel], tau, r, c, n)
    big, small = (ind.dlog_max, ind.dlog_min) if t >= 0 else (ind.dlog_min, ind.dlog_max)
    p_lo, _ = _markov_root(t, big[sel], tau, r, c, n)
    p_hi, _ = _markov_root(t, small[sel], tau, r, c, n)
    # truncated returns can only add weight
    comp_len = sum(ind.components[m][2] - ind.components[m][1] for m in members)
    p_hi += ind.truncated_length / max(comp_len, 1e-300)
    return p, (min(p_lo, p), max(p_hi, p))


def markov_gibbs(ind: InducedMap, t: float, primitive_index: int = 0) -> MarkovGibbs:
    """Gibbs weights of the level-R induced map on a primitive class.

    With v = p(t) the spectral radius of W is 1; branch i from A to B gets
    weight l_A exp(phi_i) h_B / <l, h> (left and right Perron vectors).
    """
    t = float(t)
    members, sel, r, c = _markov_system(ind, primitive_index)
    dl, tau = ind.dlog_mid[sel], ind.tau[sel]
    v, mat = _markov_root(t, dl, tau, r, c, len(members))
    rho, hvec, lvec = _spectral_radius(mat(v))
    phi = np.exp(-t * dl - v * tau)
    w = lvec[r] * phi * hvec[c] / (rho * float(lvec @ hvec))
    w = w / w.sum()
    comp_len = np.array([ind.components[m][2] - ind.components[m][1] for m in members])
    lost = ind.truncated_length / max(float(comp_len.sum()), 1e-300)
    return MarkovGibbs(w, sel, float(v), t, float(np.sum(w * tau)), float(lost), members)


# ----------------------------------------------------------------------
def pressure_curve(fmap: PMMap, t_grid, R: int = 4, tau_max: int = 40, K: int = 0,
                   max_period: int = 8, method: str = "markov", source=None,
                   tol: float = 1e-6) -> PressureCurve:
    """Sample p(t), lambda, h, E_plus and P0 over ``t_grid``.

    ``method`` is "markov" (level-R induced map, the default) or
    "full_branch"; ``source`` may pass a prebuilt InducedMap or
    FullBranchMap respectively.
    """
    if method not in ("markov", "full_branch"):
        raise ValueError(f"unknown method {method!r}")
    if source is None:
        if method == "markov":
            source = level_R_induced(fmap, R, tau_max)
        else:
            source = induced_pipeline(fmap, R, tau_max, K=K)[2]
    t = np.asarray(t_grid, dtype=float)
    n = len(t)
    p, plo, phi, lam, h = (np.full(n, np.nan) for _ in range(5))
    res = np.zeros(n, dtype=bool)
    for i, ti in enumerate(t):
        try:
            if method == "markov":
                pi, (a, b) = markov_pressure(source, ti)
                w = markov_gibbs(source, ti)
            else:
                pi, (a, b) = solve_pressure(source, ti)
                w = gibbs_weights(source, ti, pi, (a, b))
        except PressureError:
            continue
        s = stats(source, w, ti)
        p[i], plo[i], phi[i], lam[i], h[i] = pi, a, b, s.lam, s.entropy
        res[i] = True
    orbs = periodic_orbits(fmap, max_period)
    lams = np.array([o[2] for o in orbs]) if orbs else np.array([np.nan])
    lmin, lmax = float(np.nanmin(lams)), float(np.nanmax(lams))
    E = np.array([np.nanmax(-ti * lams) for ti in t])
    P0 = np.maximum(-t * lmin, -t * lmax)
    above = np.nonzero(res & (p - P0 > tol))[0]
    t_minus = float(t[above[0]]) if len(above) else math.nan
    t_plus = float(t[above[-1]]) if len(above) else math.nan
    return PressureCurve(t, p, plo, phi, lam, h, E, P0, t_minus, t_plus, lmin, lmax, res)
