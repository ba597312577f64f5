"""
Piecewise-monotone interval maps and the named families used throughout
the package.

A map is a finite ordered list of open branch intervals, each carrying a
closed-form formula that is either affine or a quadratic arc.  Every
formula is stored as a coefficient triple ``(c2, c1, c0)`` for
``x -> c2*x**2 + c1*x + c0``, which keeps evaluation, derivatives and
branch inverses vectorised over numpy arrays.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# geometric merge tolerance on the unit interval
TOL = 1e-12


class MapError(ValueError):
    """Raised for invalid parameters, invalid branches or undefined points."""


@dataclass(frozen=True)
class BranchSpec:
    """One monotone branch ``x -> c2 x^2 + c1 x + c0`` on ``(lo, hi)``."""

    lo: float
    hi: float
    kind: str
    coeffs: tuple
    orientation: int

    def value(self, x):
        c2, c1, c0 = self.coeffs
        return (c2 * x + c1) * x + c0

    def deriv(self, x):
        c2, c1, _ = self.coeffs
        return 2.0 * c2 * x + c1


@dataclass(frozen=True)
class PMMap:
    """A d-branched piecewise-monotone map of ``[ambient_lo, ambient_hi]``.

    Branch intervals are open and ordered left to right.  ``family`` and
    ``param`` record how the map was built (``"custom"`` / ``None`` for
    hand-made maps).
    """

    ambient_lo: float
    ambient_hi: float
    branches: tuple
    family: str = "custom"
    param: float | None = None
    # packed arrays for vectorised evaluation
    _lo: np.ndarray = field(init=False, repr=False, compare=False)
    _hi: np.ndarray = field(init=False, repr=False, compare=False)
    _c: np.ndarray = field(init=False, repr=False, compare=False)
    _orient: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        br = tuple(self.branches)
        if len(br) < 2:
            raise MapError("a piecewise-monotone map needs at least 2 branches")
        object.__setattr__(self, "branches", br)
        lo = np.array([b.lo for b in br], dtype=float)
        hi = np.array([b.hi for b in br], dtype=float)
        if np.any(hi <= lo):
            raise MapError("branch intervals must have lo < hi")
        if np.any(lo[1:] < hi[:-1] - TOL):
            raise MapError("branch intervals must be ordered and disjoint")
        if lo[0] < self.ambient_lo - TOL or hi[-1] > self.ambient_hi + TOL:
            raise MapError("branch intervals must lie in the ambient interval")
        c = np.array([b.coeffs for b in br], dtype=float)
        orient = np.array([b.orientation for b in br], dtype=int)
        for j, b in enumerate(br):
            d_lo, d_hi = b.deriv(b.lo), b.deriv(b.hi)
            # the derivative is affine, so checking both ends suffices
            if min(d_lo * b.orientation, d_hi * b.orientation) < -TOL:
                raise MapError(f"branch {j}: derivative sign disagrees with orientation")
            if d_lo == 0.0 and d_hi == 0.0:
                raise MapError(f"branch {j}: constant branch")
            v_lo, v_hi = b.value(b.lo), b.value(b.hi)
            span = self.ambient_hi - self.ambient_lo
            if min(v_lo, v_hi) < self.ambient_lo - 1e-9 * span or \
                    max(v_lo, v_hi) > self.ambient_hi + 1e-9 * span:
                raise MapError(f"branch {j}: image leaves the ambient interval")
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)
        object.__setattr__(self, "_c", c)
        object.__setattr__(self, "_orient", orient)

    # ------------------------------------------------------------------
    @property
    def d(self) -> int:
        return len(self.branches)

    @property
    def length(self) -> float:
        return self.ambient_hi - self.ambient_lo

    @property
    def breakpoints(self) -> np.ndarray:
        """Sorted distinct branch endpoints."""
        return _dedup(np.concatenate([self._lo, self._hi]))

    def branch_of(self, x):
        """Index of the branch whose open interval contains ``x``, else -1."""
        x = np.asarray(x, dtype=float)
        j = np.searchsorted(self._lo, x, side="right") - 1
        jj = np.clip(j, 0, self.d - 1)
        inside = (j >= 0) & (x > self._lo[jj]) & (x < self._hi[jj])
        return np.where(inside, jj, -1)

    def value(self, j, x):
        """Branch ``j`` formula at ``x`` (vectorised, endpoints allowed)."""
        c = self._c[j]
        return (c[..., 0] * x + c[..., 1]) * x + c[..., 2]

    def deriv(self, j, x):
        c = self._c[j]
        return 2.0 * c[..., 0] * x + c[..., 1]

    def second(self, j, x):
        return 2.0 * self._c[j][..., 0] + 0.0 * np.asarray(x)

    def image(self, j):
        """Closed image interval of branch ``j``."""
        b = self.branches[j]
        a, c = b.value(b.lo), b.value(b.hi)
        return (min(a, c), max(a, c))

    def __call__(self, x):
        """Evaluate f at points inside branches (NaN at critical points)."""
        x = np.asarray(x, dtype=float)
        j = self.branch_of(x)
        out = self.value(np.maximum(j, 0), x)
        return np.where(j >= 0, out, np.nan)

    def inverse(self, j, y, polish=True):
        """Closed-form inverse of branch ``j`` at ``y`` (vectorised in both).

        Values of ``y`` outside the branch image are clipped to the branch
        interval.
        """
        j = np.asarray(j)
        y = np.asarray(y, dtype=float)
        c = self._c[j]
        c2, c1, c0 = c[..., 0], c[..., 1], c[..., 2] - y
        lo, hi = self._lo[j], self._hi[j]
        quad = c2 != 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            lin = -c0 / c1
            disc = np.maximum(c1 * c1 - 4.0 * c2 * c0, 0.0)
            sgn = np.where(c1 >= 0.0, 1.0, -1.0)
            q = -0.5 * (c1 + sgn * np.sqrt(disc))
            r1 = q / c2
            r2 = np.where(q != 0.0, c0 / q, r1)
        d1 = np.maximum(lo - r1, 0) + np.maximum(r1 - hi, 0)
        d2 = np.maximum(lo - r2, 0) + np.maximum(r2 - hi, 0)
        d1 = np.where(np.isfinite(r1), d1, np.inf)
        d2 = np.where(np.isfinite(r2), d2, np.inf)
        root = np.where(d1 <= d2, r1, r2)
        x = np.where(quad, root, lin)
        x = np.clip(x, lo, hi)
        if polish:
            # one Newton step away from the turning point
            df = 2.0 * c2 * x + c1
            fx = (c2 * x + c1) * x + c0
            ok = np.abs(df) > 1e-3
            step = np.where(ok, fx / np.where(ok, df, 1.0), 0.0)
            x = np.clip(x - step, lo, hi)
        return x

    def inverse_bisect(self, j, y, tol=1e-15, maxit=200):
        """Scalar branch inverse by bisection; reference for ``inverse``."""
        b = self.branches[j]
        a, c = b.lo, b.hi
        fa = b.value(a) - y
        for _ in range(maxit):
            m = 0.5 * (a + c)
            fm = b.value(m) - y
            if (fm > 0) == (fa > 0):
                a, fa = m, fm
            else:
                c = m
            if c - a < tol:
                break
        return 0.5 * (a + c)

    def pullback(self, word, y):
        """Pull ``y`` back along ``word`` (a sequence of branch indices).

        Returns x with f^n(x) = y following the word, where n = len(word).
        """
        x = np.asarray(y, dtype=float)
        for j in reversed(list(word)):
            x = self.inverse(j, x)
        return x

    def to_dict(self) -> dict:
        if self.family != "custom":
            return {"family": self.family, "param": self.param}
        return {"custom": {
            "ambient": [self.ambient_lo, self.ambient_hi],
            "branches": [{"lo": b.lo, "hi": b.hi, "kind": b.kind,
                          "coeffs": list(b.coeffs[1:] if b.kind == "affine" else b.coeffs)}
                         for b in self.branches],
        }}


@dataclass(frozen=True)
class CriticalData:
    critical_points: np.ndarray
    critical_values: np.ndarray


# ----------------------------------------------------------------------
def _dedup(values, tol=TOL) -> np.ndarray:
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return v
    keep = np.concatenate([[True], np.diff(v) > tol])
    return v[keep]


def _branch(lo, hi, c2, c1, c0) -> BranchSpec:
    mid = 0.5 * (lo + hi)
    slope = 2.0 * c2 * mid + c1
    kind = "affine" if c2 == 0.0 else "quadratic_arc"
    return BranchSpec(float(lo), float(hi), kind, (float(c2), float(c1), float(c0)),
                      1 if slope > 0 else -1)


def make_branch(lo, hi, kind, coeffs) -> BranchSpec:
    """Build a branch from ``kind`` in {affine, quadratic_arc}.

    affine coeffs are ``(slope, intercept)``; quadratic_arc coeffs are
    ``(a, b, c)`` for ``a x^2 + b x + c``.
    """
    if kind == "affine":
        slope, icpt = coeffs
        return _branch(lo, hi, 0.0, slope, icpt)
    if kind == "quadratic_arc":
        a, b, c = coeffs
        return _branch(lo, hi, a, b, c)
    raise MapError(f"unknown branch kind {kind!r}")


def quadratic(a: float) -> PMMap:
    """Logistic map x -> a x (1 - x), split at the turning point 1/2."""
    if not 0.0 < a <= 4.0:
        raise MapError(f"quadratic: parameter a={a} outside (0, 4]")
    br = (_branch(0.0, 0.5, -a, a, 0.0), _branch(0.5, 1.0, -a, a, 0.0))
    return PMMap(0.0, 1.0, br, "quadratic", float(a))


def tent(s: float) -> PMMap:
    if not 1.0 < s <= 2.0:
        raise MapError(f"tent: slope s={s} outside (1, 2]")
    br = (_branch(0.0, 0.5, 0.0, s, 0.0), _branch(0.5, 1.0, 0.0, -s, s))
    return PMMap(0.0, 1.0, br, "tent", float(s))


def exo1(a: float) -> PMMap:
    """1 - 2x on (0, 1/2) and a (x - 1/2)(x - 1) + 1 on (1/2, 1)."""
    if not 0.0 < a < 16.0:
        raise MapError(f"exo1: parameter a={a} outside (0, 16)")
    right = (a, -1.5 * a, 0.5 * a + 1.0)
    br = (_branch(0.0, 0.5, 0.0, -2.0, 1.0),
          _branch(0.5, 0.75, *right), _branch(0.75, 1.0, *right))
    return PMMap(0.0, 1.0, br, "exo1", float(a))


def keller_map(eps: float) -> PMMap:
    """W-shaped map: tip (1/2, 1/2 + eps), inner slopes 2 - eps, full outer branches.

    ``eps = 0`` gives the limit map whose tip sits on the diagonal.  When
    the inner branches already reach the ambient endpoints (eps >= 1/3)
    there is no room for outer branches and the map is clipped to its two
    inner branches.
    """
    s = 2.0 - eps
    tip = 0.5 + eps
    x_e = 0.5 - tip / s
    inner_l = (0.0, s, -s * x_e)
    inner_r = (0.0, -s, s * (1.0 - x_e))
    if x_e <= TOL:
        br = (_branch(0.0, 0.5, *inner_l), _branch(0.5, 1.0, *inner_r))
    else:
        br = (_branch(0.0, x_e, 0.0, -1.0 / x_e, 1.0),
              _branch(x_e, 0.5, *inner_l), _branch(0.5, 1.0 - x_e, *inner_r),
              _branch(1.0 - x_e, 1.0, 0.0, 1.0 / x_e, 1.0 - 1.0 / x_e))
    return PMMap(0.0, 1.0, br, "keller", float(eps))


def keller(eps: float) -> PMMap:
    if not 0.0 < eps < 0.5:
        raise MapError(f"keller: eps={eps} outside (0, 1/2)")
    return keller_map(eps)


# escape threshold for the normalized quadratic family
NQ_BOUND = 16.0


def normalized_quadratic(kappa: float, bound: float = NQ_BOUND) -> PMMap:
    """y -> y^2 + kappa on [-bound, bound], kept where the image stays inside.

    For kappa > 1/4 every orbit escapes, so the branches cover only the part
    of the ambient interval that maps back into it.
    """
    if not kappa > 0.25:
        raise MapError(f"normalized_quadratic: kappa={kappa} must exceed 1/4")
    if kappa >= bound:
        raise MapError(f"normalized_quadratic: kappa={kappa} must be below {bound}")
    r = math.sqrt(bound - kappa)
    br = (_branch(-r, 0.0, 1.0, 0.0, kappa), _branch(0.0, r, 1.0, 0.0, kappa))
    return PMMap(-bound, bound, br, "normalized_quadratic", float(kappa))


FAMILIES = {
    "quadratic": quadratic,
    "tent": tent,
    "exo1": exo1,
    "keller": keller,
    "normalized_quadratic": normalized_quadratic,
}


def make_family(tag: str, param: float) -> PMMap:
    """Build a named family member, e.g. ``make_family("tent", 1.9)``."""
    try:
        ctor = FAMILIES[tag]
    except KeyError:
        raise MapError(f"unknown family {tag!r}") from None
    return ctor(float(param))


def custom_map(ambient: Sequence[float], branches: Sequence[dict]) -> PMMap:
    br = tuple(make_branch(b["lo"], b["hi"], b["kind"], b["coeffs"]) for b in branches)
    return PMMap(float(ambient[0]), float(ambient[1]), br)


# ----------------------------------------------------------------------
def eval_df(fmap: PMMap, x: float) -> tuple[float, float]:
    """Exact value and derivative of the branch containing ``x``."""
    j = int(fmap.branch_of(x))
    if j < 0:
        raise MapError(f"x={x} is a critical point or outside all branches")
    return float(fmap.value(j, x)), float(fmap.deriv(j, x))


def critical_data(fmap: PMMap) -> CriticalData:
    pts = fmap.breakpoints
    vals = []
    for b in fmap.branches:
        vals += [b.value(b.lo), b.value(b.hi)]
    return CriticalData(pts, _dedup(vals))


def schwarzian_check(fmap: PMMap, n_samples: int = 64, tol: float = 1e-9) -> list[bool]:
    """Sampled convexity of 1/sqrt|Df| on every branch."""
    out = []
    for j, b in enumerate(fmap.branches):
        x = np.linspace(b.lo, b.hi, n_samples + 4)[1:-1]
        df = np.abs(fmap.deriv(j, x))
        if np.any(df == 0.0):
            raise MapError(f"branch {j}: derivative vanishes inside the branch")
        g = 1.0 / np.sqrt(df)
        scale = max(1.0, float(np.max(g)))
        sd = g[:-2] - 2.0 * g[1:-1] + g[2:]
        out.append(bool(np.all(sd >= -tol * scale)))
    return out


def inverse_image(fmap: PMMap, j: int, lo: float, hi: float):
    """Sub-interval of branch ``j`` mapped into ``[lo, hi]``, or None."""
    ilo, ihi = fmap.image(j)
    a, c = max(lo, ilo), min(hi, ihi)
    if c - a <= TOL:
        return None
    x = fmap.inverse(j, np.array([a, c]))
    return float(min(x)), float(max(x))


# ----------------------------------------------------------------------
def map_from_spec(spec) -> PMMap:
    """Build a map from a dict, a JSON string, or a ``family:param`` string."""
    if isinstance(spec, PMMap):
        return spec
    if isinstance(spec, str):
        s = spec.strip()
        if s.startswith("{"):
            spec = json.loads(s)
        elif ":" in s:
            tag, val = s.split(":", 1)
            return make_family(tag.strip(), float(val))
        else:
            raise MapError(f"cannot parse map spec {spec!r}")
    if "custom" in spec:
        c = spec["custom"]
        return custom_map(c["ambient"], c["branches"])
    if "family" in spec:
        return make_family(spec["family"], spec["param"])
    raise MapError("map spec needs a 'family' or 'custom' key")


def map_to_json(fmap: PMMap) -> str:
    return json.dumps(fmap.to_dict(), sort_keys=True)


def load_map(path) -> PMMap:
    with open(path) as fh:
        return map_from_spec(json.load(fh))
