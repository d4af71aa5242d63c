"""Dielectric profiles and path-averaged permittivities.

Planar profiles depend only on the first coordinate (the normal direction).
A susceptibility of ``math.inf`` marks the Dirichlet limit: it is never used
as an arithmetic value, and integrands switch to a touch indicator instead.

Boundary points belong to the dielectric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .bridges import ScaledPath, StandardBridge
from .errors import InvalidArgument

__all__ = [
    "Vacuum",
    "HalfSpace",
    "Gap",
    "UserField",
    "PhysicalConstants",
    "is_dirichlet",
    "eps_at",
    "occupation_trapezoid",
    "occupation_interpolated",
    "path_average_trapezoid",
    "path_average_interpolated",
    "first_touch_time",
    "first_touch_times",
    "cp_integrand_from_fraction",
    "casimir_integrand_from_fractions",
    "renorm_integrand_cp",
    "renorm_integrand_casimir",
]


def is_dirichlet(chi) -> bool:
    return math.isinf(chi) and chi > 0


def _check_chi(chi, name="chi"):
    if math.isnan(chi) or chi < 0:
        raise InvalidArgument(f"{name} must be non-negative (or inf for the Dirichlet limit), got {chi!r}")


@dataclass(frozen=True)
class Vacuum:
    def to_dict(self):
        return {"kind": "vacuum"}


@dataclass(frozen=True)
class HalfSpace:
    """Dielectric filling z >= boundary (side=+1) or z <= boundary (side=-1)."""

    boundary: float
    chi: float
    side: int = 1

    def __post_init__(self):
        _check_chi(self.chi)
        if self.side not in (1, -1):
            raise InvalidArgument("side must be +1 or -1")
        if not math.isfinite(self.boundary):
            raise InvalidArgument("boundary must be finite")

    def inside(self, z):
        z = np.asarray(z, dtype=float)
        return z >= self.boundary if self.side == 1 else z <= self.boundary

    def to_dict(self):
        return {"kind": "halfspace", "boundary": self.boundary, "chi": self.chi, "side": self.side}


@dataclass(frozen=True)
class Gap:
    """Body 1 fills z <= d1, body 2 fills z >= d2, vacuum in between."""

    d1: float
    d2: float
    chi1: float
    chi2: float

    def __post_init__(self):
        _check_chi(self.chi1, "chi1")
        _check_chi(self.chi2, "chi2")
        if not (math.isfinite(self.d1) and math.isfinite(self.d2)) or not self.d2 > self.d1:
            raise InvalidArgument(f"Gap requires finite d2 > d1, got d1={self.d1}, d2={self.d2}")

    @property
    def width(self) -> float:
        return self.d2 - self.d1

    def body1(self) -> HalfSpace:
        return HalfSpace(self.d1, self.chi1, side=-1)

    def body2(self) -> HalfSpace:
        return HalfSpace(self.d2, self.chi2, side=1)

    def to_dict(self):
        return {"kind": "gap", "d1": self.d1, "d2": self.d2, "chi1": self.chi1, "chi2": self.chi2}


@dataclass(frozen=True)
class UserField:
    """Arbitrary permittivity eps(r) >= 1.

    ``line_average(a, b)`` may be supplied to return the mean of eps along the
    straight segment from a to b; without it the interpolated estimator
    integrates each segment with a fixed Gauss-Legendre rule.
    """

    eps: Callable[[np.ndarray], float]
    line_average: Optional[Callable[[np.ndarray, np.ndarray], float]] = None

    def to_dict(self):
        return {"kind": "user"}


@dataclass(frozen=True)
class PhysicalConstants:
    """Unit system and atomic polarizability. Defaults are natural units."""

    hbar: float = 1.0
    c: float = 1.0
    eps0: float = 1.0
    alpha0: float = 1.0
    D: int = 4

    def __post_init__(self):
        if int(self.D) != self.D or self.D < 2:
            raise InvalidArgument(f"spacetime dimension D must be an integer >= 2, got {self.D!r}")
        for name in ("hbar", "c", "eps0"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.alpha0 < 0:
            raise InvalidArgument("alpha0 must be non-negative")

    @classmethod
    def si(cls, alpha0: float = 1.0, D: int = 4) -> "PhysicalConstants":
        from scipy import constants as k

        return cls(hbar=k.hbar, c=k.c, eps0=k.epsilon_0, alpha0=alpha0, D=D)


# ---------------------------------------------------------------------------
# point values


def _planar_eps(profile, z):
    z = np.asarray(z, dtype=float)
    if isinstance(profile, Vacuum):
        return np.ones_like(z)
    if isinstance(profile, HalfSpace):
        return np.where(profile.inside(z), 1.0 + profile.chi, 1.0)
    if isinstance(profile, Gap):
        out = np.ones_like(z)
        out = np.where(profile.body1().inside(z), 1.0 + profile.chi1, out)
        return np.where(profile.body2().inside(z), 1.0 + profile.chi2, out)
    raise InvalidArgument(f"not a planar profile: {type(profile).__name__}")


def eps_at(profile, r):
    """Relative permittivity at point r (first coordinate is the normal).

    Returns ``inf`` inside a Dirichlet body.
    """
    if isinstance(profile, UserField):
        r = np.asarray(r, dtype=float)
        val = float(profile.eps(r))
        if not val >= 1.0:
            raise InvalidArgument(f"user permittivity must be >= 1, got {val} at {r}")
        return val
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise InvalidArgument("point must be finite")
    z = r.reshape(-1)[0] if r.ndim else r
    return float(_planar_eps(profile, z))


# ---------------------------------------------------------------------------
# occupation fractions (vectorized over leading axes; last axis is k = 0..N)


def occupation_trapezoid(x, boundary: float, side: int = 1):
    """Fraction of the N nodes x_0..x_{N-1} lying in the dielectric.

    For closed paths this is the trapezoidal rule for the time fraction spent
    past the boundary.
    """
    x = np.asarray(x, dtype=float)
    pts = x[..., :-1]
    inside = pts >= boundary if side == 1 else pts <= boundary
    return inside.mean(axis=-1)


def occupation_interpolated(x, boundary: float, side: int = 1):
    """Mean over segments of the fraction of each straight segment past the boundary."""
    x = np.asarray(x, dtype=float)
    a = x[..., :-1]
    b = x[..., 1:]
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    span = hi - lo
    if side == 1:
        num = hi - boundary
        point = a >= boundary
    else:
        num = boundary - lo
        point = a <= boundary
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        frac = np.clip(num / span, 0.0, 1.0)
    frac = np.where(span > 0, frac, point.astype(float))
    return frac.mean(axis=-1)


def _coords(path):
    if isinstance(path, ScaledPath):
        return path.points
    if isinstance(path, StandardBridge):
        return path.values
    arr = np.asarray(path, dtype=float)
    return arr[None, :] if arr.ndim == 1 else arr


def _planar_average(profile, z, occupation):
    if isinstance(profile, Vacuum):
        return 1.0
    if isinstance(profile, HalfSpace):
        f = occupation(z, profile.boundary, profile.side)
        return _eps_from_fraction(profile.chi, f)
    if isinstance(profile, Gap):
        f1 = occupation(z, profile.d1, -1)
        f2 = occupation(z, profile.d2, 1)
        return _eps_from_fraction(profile.chi1, f1) + _eps_from_fraction(profile.chi2, f2) - 1.0
    raise InvalidArgument(f"not a planar profile: {type(profile).__name__}")


def _eps_from_fraction(chi, f):
    """1 + chi*f with the Dirichlet marker mapped to inf only where f > 0."""
    f = np.asarray(f, dtype=float)
    if is_dirichlet(chi):
        out = np.where(f > 0, np.inf, 1.0)
    else:
        out = 1.0 + chi * f
    return out if out.ndim else float(out)


def path_average_trapezoid(profile, path) -> float:
    """(1/N) sum_k eps(x_k), the trapezoidal rule on a closed path."""
    pts = _coords(path)
    if isinstance(profile, UserField):
        vals = [eps_at(profile, pts[:, k]) for k in range(pts.shape[1] - 1)]
        return float(np.mean(vals))
    return float(_planar_average(profile, pts[0], occupation_trapezoid))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def path_average_interpolated(profile, path) -> float:
    """Mean over segments of the straight-line average of eps."""
    pts = _coords(path)
    if isinstance(profile, UserField):
        total = 0.0
        n = pts.shape[1] - 1
        for j in range(n):
            a, b = pts[:, j], pts[:, j + 1]
            if np.all(a == b):
                total += eps_at(profile, a)
            elif profile.line_average is not None:
                total += float(profile.line_average(a, b))
            else:
                t = 0.5 * (_GL_X + 1.0)
                vals = [eps_at(profile, a + tk * (b - a)) for tk in t]
                total += 0.5 * float(np.dot(_GL_W, vals))
        return total / n
    return float(_planar_average(profile, pts[0], occupation_interpolated))


# ---------------------------------------------------------------------------
# first-touch times


def first_touch_times(bmin, bmax, x0, profile):
    """Vectorized first-touch proper times from bridge extremes.

    ``bmin``/``bmax`` are the extremes of the standard bridge along the normal
    axis. Returns +inf where the relevant extreme is zero.
    """
    bmin = np.asarray(bmin, dtype=float)
    bmax = np.asarray(bmax, dtype=float)
    x0 = np.asarray(x0, dtype=float)

    def up(dist):
        with np.errstate(divide="ignore"):
            return np.where(bmax > 0, (dist / np.where(bmax > 0, bmax, 1.0)) ** 2, np.inf)

    def down(dist):
        with np.errstate(divide="ignore"):
            return np.where(bmin < 0, (dist / np.where(bmin < 0, -bmin, 1.0)) ** 2, np.inf)

    if isinstance(profile, HalfSpace):
        inside = profile.inside(x0)
        gap = np.abs(profile.boundary - x0)
        if profile.side == 1:
            return np.where(inside, down(gap), up(gap))
        return np.where(inside, up(gap), down(gap))
    if isinstance(profile, Gap):
        t_up = up(profile.d2 - x0)
        t_down = down(x0 - profile.d1)
        in1 = profile.body1().inside(x0)
        in2 = profile.body2().inside(x0)
        return np.where(in1, t_up, np.where(in2, t_down, np.maximum(t_up, t_down)))
    raise InvalidArgument(f"first-touch times need a planar profile, got {type(profile).__name__}")


def first_touch_time(bridge: StandardBridge, x0, profile, tol: float = 1e-12) -> float:
    """Smallest proper time at which the renormalized integrand can be nonzero.

    For user fields the bound is found by bracketing and bisection on the
    scaled path: the largest T whose integrand magnitude stays below ``tol``.
    """
    if isinstance(profile, UserField):
        return _user_touch_time(bridge, x0, profile, tol)
    row = bridge.values[0]
    z0 = float(np.asarray(x0, dtype=float).reshape(-1)[0])
    return float(first_touch_times(row.min(), row.max(), z0, profile))


def _user_touch_time(bridge, x0, profile, tol):
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (bridge.n_axes,))
    e0 = eps_at(profile, x0)

    def size(T):
        pts = x0[:, None] + math.sqrt(T) * bridge.values
        return abs(path_average_trapezoid(profile, pts) ** -1.5 - e0 ** -1.5)

    lo, hi = 1e-12, 1e-12
    while size(hi) < tol:
        lo, hi = hi, hi * 4.0
        if hi > 1e12:
            return math.inf
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if size(mid) < tol:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-12:
            break
    return lo


# ---------------------------------------------------------------------------
# renormalized integrands


def cp_integrand_from_fraction(chi, fraction, embedded: bool = False):
    """<eps>^(-3/2) - eps(x0)^(-3/2) for a half-space with occupation ``fraction``.

    ``fraction`` is the fraction of the path inside the dielectric. For an
    embedded atom eps(x0) = 1+chi. In the Dirichlet limit a vacuum-side atom
    gives -1 for any touching path.
    """
    f = np.asarray(fraction, dtype=float)
    if is_dirichlet(chi):
        if embedded:
            raise InvalidArgument("the Dirichlet limit has no embedded-atom integrand")
        return np.where(f > 0, -1.0, 0.0)
    if embedded:
        return (1.0 + chi * f) ** -1.5 - (1.0 + chi) ** -1.5
    return (1.0 + chi * f) ** -1.5 - 1.0


def _inv_sqrt_eps(chi, f):
    f = np.asarray(f, dtype=float)
    if is_dirichlet(chi):
        return np.where(f > 0, 0.0, 1.0)
    return (1.0 + chi * f) ** -0.5


def casimir_integrand_from_fractions(chi1, chi2, f1, f2, eps1_x0=1.0, eps2_x0=1.0):
    """Three-term pathwise-subtracted integrand for a two-body configuration.

    ``f1``/``f2`` are the occupation fractions in bodies 1 and 2, and
    ``eps*_x0`` the one-body permittivities at the source point (inf inside a
    Dirichlet body).
    """
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    g1 = _inv_sqrt_eps(chi1, f1)
    g2 = _inv_sqrt_eps(chi2, f2)
    # eps12 = 1 + chi1 f1 + chi2 f2; in the Dirichlet limit inverse roots vanish
    if is_dirichlet(chi1) or is_dirichlet(chi2):
        touched = ((f1 > 0) & is_dirichlet(chi1)) | ((f2 > 0) & is_dirichlet(chi2))
        c1 = 0.0 if is_dirichlet(chi1) else chi1
        c2 = 0.0 if is_dirichlet(chi2) else chi2
        g12 = np.where(touched, 0.0, (1.0 + c1 * f1 + c2 * f2) ** -0.5)
    else:
        g12 = (1.0 + chi1 * f1 + chi2 * f2) ** -0.5
    h1 = 0.0 if math.isinf(eps1_x0) else eps1_x0 ** -0.5
    h2 = 0.0 if math.isinf(eps2_x0) else eps2_x0 ** -0.5
    h12 = 0.0 if math.isinf(eps1_x0) or math.isinf(eps2_x0) else (eps1_x0 + eps2_x0 - 1.0) ** -0.5
    return (h12 - g12) - (h1 - g1) - (h2 - g2)


def _fractions_for(profile, path, average):
    pts = _coords(path)[0]
    occ = occupation_trapezoid if average == "trapezoid" else occupation_interpolated
    if average not in ("trapezoid", "interpolation"):
        raise InvalidArgument(f"unknown average {average!r}")
    return pts, occ


def renorm_integrand_cp(profile, path, x0, average: str = "trapezoid") -> float:
    """<eps>^(-3/2) - eps(x0)^(-3/2) on one path."""
    if isinstance(profile, Vacuum):
        return 0.0
    if isinstance(profile, UserField):
        e0 = eps_at(profile, x0)
        avg = path_average_trapezoid(profile, path) if average == "trapezoid" else path_average_interpolated(profile, path)
        return float(avg ** -1.5 - e0 ** -1.5)
    if not isinstance(profile, HalfSpace):
        raise InvalidArgument("CP integrand needs a HalfSpace or UserField profile")
    pts, occ = _fractions_for(profile, path, average)
    f = occ(pts, profile.boundary, profile.side)
    embedded = bool(profile.inside(np.asarray(x0, dtype=float).reshape(-1)[0]))
    return float(cp_integrand_from_fraction(profile.chi, f, embedded))


def renorm_integrand_casimir(profile: Gap, path, x0, average: str = "trapezoid") -> float:
    """Two-body integrand minus both one-body integrands, on the same path."""
    if not isinstance(profile, Gap):
        raise InvalidArgument("Casimir integrand needs a Gap profile")
    pts, occ = _fractions_for(profile, path, average)
    f1 = occ(pts, profile.d1, -1)
    f2 = occ(pts, profile.d2, 1)
    z0 = float(np.asarray(x0, dtype=float).reshape(-1)[0])
    e1 = eps_at(profile.body1(), z0) if not (is_dirichlet(profile.chi1) and z0 <= profile.d1) else math.inf
    e2 = eps_at(profile.body2(), z0) if not (is_dirichlet(profile.chi2) and z0 >= profile.d2) else math.inf
    return float(casimir_integrand_from_fractions(profile.chi1, profile.chi2, f1, f2, e1, e2))
