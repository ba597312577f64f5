"""
Ulam discretization of the transfer operator: acip densities and Lyapunov
exponents on a uniform grid, used as an independent oracle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from .maps import PMMap
from .thermo import IntervalMeasure


class UlamError(ValueError):
    pass


@dataclass
class UlamResult:
    density: IntervalMeasure
    lam: float
    residual: float
    converged: bool
    iterations: int
    matrix: csr_matrix = None


def ulam_matrix(fmap: PMMap, grid_n: int, lo: float | None = None,
                hi: float | None = None) -> csr_matrix:
    """M[i, j] = |cell_i  intersect  f^-1(cell_j)| / |cell_i| on a uniform grid.

    Each branch domain is cut at the grid points and at the exact preimages
    of the grid points, so every piece lies in one source and one target
    cell.  Mass leaving [lo, hi] is dropped (rows then sum to less than 1).
    """
    lo = fmap.ambient_lo if lo is None else float(lo)
    hi = fmap.ambient_hi if hi is None else float(hi)
    edges = np.linspace(lo, hi, grid_n + 1)
    h = (hi - lo) / grid_n
    rows, cols, vals = [], [], []
    for j in range(fmap.d):
        a, b = fmap._lo[j], fmap._hi[j]
        ia, ib = fmap.image(j)
        xs = edges[(edges > a) & (edges < b)]
        ys = edges[(edges > ia) & (edges < ib)]
        xp = fmap.inverse(j, ys)
        cuts = np.unique(np.concatenate([[a, b], xs, xp]))
        cuts = cuts[(cuts >= a) & (cuts <= b)]
        left, right = cuts[:-1], cuts[1:]
        keep = right - left > 0
        left, right = left[keep], right[keep]
        mid = 0.5 * (left + right)
        fm = fmap.value(j, mid)
        inside = (mid > lo) & (mid < hi) & (fm > lo) & (fm < hi)
        src = np.clip(((mid - lo) / h).astype(np.int64), 0, grid_n - 1)
        dst = np.clip(((fm - lo) / h).astype(np.int64), 0, grid_n - 1)
        rows.append(src[inside])
        cols.append(dst[inside])
        vals.append((right - left)[inside] / h)
    M = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(grid_n, grid_n)).tocsr()
    M.sum_duplicates()
    return M


def ulam_acip(fmap: PMMap, grid_n: int = 1024, iters: int = 20000, tol: float = 1e-10,
              lo: float | None = None, hi: float | None = None,
              start: np.ndarray | None = None) -> UlamResult:
    """Invariant density by power iteration of the Ulam matrix from the uniform vector."""
    if grid_n < 64:
        raise UlamError("grid_n must be >= 64")
    lo = fmap.ambient_lo if lo is None else float(lo)
    hi = fmap.ambient_hi if hi is None else float(hi)
    M = ulam_matrix(fmap, grid_n, lo, hi)
    MT = M.T.tocsr()
    p = np.full(grid_n, 1.0 / grid_n) if start is None else np.asarray(start, float)
    p = p / p.sum()
    converged = False
    it = 0
    for it in range(1, iters + 1):
        q = MT @ p
        s = q.sum()
        if s <= 0:
            raise UlamError("all mass escaped the interval")
        q /= s
        step = float(np.abs(q - p).sum())
        p = q
        if step < tol:
            converged = True
            break
    q = MT @ p
    residual = float(np.abs(q / q.sum() - p).sum())
    edges = np.linspace(lo, hi, grid_n + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    j = fmap.branch_of(mid)
    ok = j >= 0
    lam = float(np.sum(p[ok] * np.log(np.abs(fmap.deriv(j[ok], mid[ok])))))
    return UlamResult(IntervalMeasure(grid_n, p, lo, hi), lam, residual, converged, it, M)


def chebyshev_cell_masses(grid_n: int) -> np.ndarray:
    """Exact cell masses of the density 1 / (pi sqrt(x (1 - x))) on [0, 1]."""
    e = np.linspace(0.0, 1.0, grid_n + 1)
    return np.diff(np.arcsin(np.sqrt(e))) * 2.0 / np.pi
