"""Occupation time of a pinned Brownian path past a boundary.

For a Brownian bridge y from y(0) = a to y(t) = c, the sojourn time
T_s = int_0^t Theta(y - d) has a law with up to two atoms (at 0 and t) and a
continuous part. Everything here is computed in scaled variables

    v = (d - a)/sqrt(t),   w = (d - c)/sqrt(t),   sigma = x/t,

since T_s/t depends only on (v, w). The four orderings of a, c relative to
d are handled by two base laws and the reflection y -> -y:

* one-sided (v, w >= 0): atom 1 - P at zero, P = exp(-2 v w), and
  conditional density g1(sigma; kappa) with kappa = v + w;
* crossing (v >= 0 >= w): density f2(sigma; u, v) with u = -w;
* the other two orderings are mirror images with sigma -> 1 - sigma.

All exp(+quadratic) * erfc products are evaluated through ``erfcx``.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate, ndimage, special

from ._kernels import crossing_products, one_sided_products
from .errors import InvalidArgument, NumericalError

__all__ = [
    "SojournParams",
    "SojournDensity",
    "GridSpec",
    "SojournTables",
    "MgfTables",
    "density",
    "mgf",
    "mean",
    "crossing_probability",
    "build_tables",
    "build_mgf_tables",
    "sample_sojourn",
    "sample_sojourn_many",
    "save_tables",
    "load_tables",
    "trapezoid_step_average",
    "mean_step_average",
]

_SEAM = 1e-12
_SQRT_2_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class SojournParams:
    a: float
    c: float
    t: float
    d: float

    def __post_init__(self):
        if not self.t > 0 or not math.isfinite(self.t):
            raise InvalidArgument(f"elapsed time must be positive and finite, got {self.t!r}")

    @property
    def v(self) -> float:
        return (self.d - self.a) / math.sqrt(self.t)

    @property
    def w(self) -> float:
        return (self.d - self.c) / math.sqrt(self.t)


@dataclass(frozen=True)
class SojournDensity:
    """Law of T_s: two atoms plus a continuous density on (0, t)."""

    atom_at_zero: float
    atom_at_t: float
    continuous_part: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    t: float = 1.0

    def continuous_mass(self) -> float:
        return _integrate_on_interval(lambda x: self.continuous_part(x), self.t)

    def total_mass(self) -> float:
        return self.atom_at_zero + self.atom_at_t + self.continuous_mass()

    def laplace(self, s: float) -> float:
        """atom_at_zero + atom_at_t e^{-st} + int e^{-sx} f(x) dx."""
        cont = _integrate_on_interval(lambda x: np.exp(-s * x) * self.continuous_part(x), self.t)
        return self.atom_at_zero + self.atom_at_t * math.exp(-s * self.t) + cont

    def first_moment(self) -> float:
        return self.atom_at_t * self.t + _integrate_on_interval(lambda x: x * self.continuous_part(x), self.t)


def _integrate_on_interval(f, t):
    # x = t sin^2(theta) absorbs the inverse-square-root endpoint behavior
    def g(th):
        s = math.sin(th)
        c = math.cos(th)
        return f(t * s * s) * 2.0 * t * s * c

    val, _ = integrate.quad(g, 0.0, math.pi / 2, epsabs=1e-14, epsrel=1e-12, limit=400)
    return float(val)


# ---------------------------------------------------------------------------
# base laws on the unit interval; s = sigma and cs = 1 - sigma are passed
# separately so neither end loses precision


def _g1(s, cs, kappa):
    """Conditional density of sigma for a one-sided segment, given it touches."""
    s = np.asarray(s, dtype=float)
    cs = np.asarray(cs, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = s / cs
        first = kappa * np.sqrt(2.0 / (math.pi * ratio)) * np.exp(-0.5 * kappa**2 * ratio)
        first = np.where(kappa > 0, first, 0.0)
        second = (1.0 - kappa**2) * special.erfc(kappa * np.sqrt(0.5 * ratio))
    return np.where(cs > 0, first + second, 0.0)


def _f2(s, cs, u, v):
    """Density of sigma for a crossing segment from below to above."""
    s = np.asarray(s, dtype=float)
    cs = np.asarray(cs, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    prod = s * cs
    root = np.sqrt(prod)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        expo = (u * cs - v * s) ** 2 / (2.0 * prod)
        first = _SQRT_2_PI * (u * s + v * cs) / root
        z = (u * cs + v * s) / np.sqrt(2.0 * prod)
        second = (1.0 - (v - u) ** 2) * special.erfcx(z)
        out = np.exp(-expo) * (first + second)
    return np.where(prod > 0, np.nan_to_num(out, nan=0.0, posinf=0.0), 0.0)


def _orderings(v, w):
    """Cases that apply at scaled distances (v, w); two or more near a seam."""
    cases = []
    if v >= -_SEAM and w >= -_SEAM:
        cases.append(1)
    if v >= -_SEAM and w <= _SEAM:
        cases.append(2)
    if v <= _SEAM and w <= _SEAM:
        cases.append(3)
    if v <= _SEAM and w >= -_SEAM:
        cases.append(4)
    return cases


def _case_density(case, v, w, t):
    if case == 1:
        kappa = v + w
        p = math.exp(-2.0 * max(v * w, 0.0))
        return 1.0 - p, 0.0, lambda x: p * _g1(np.asarray(x) / t, 1.0 - np.asarray(x) / t, kappa) / t
    if case == 3:
        kappa = -(v + w)
        p = math.exp(-2.0 * max(v * w, 0.0))
        return 0.0, 1.0 - p, lambda x: p * _g1(1.0 - np.asarray(x) / t, np.asarray(x) / t, kappa) / t
    if case == 2:
        u, vv = max(-w, 0.0), max(v, 0.0)
        return 0.0, 0.0, lambda x: _f2(np.asarray(x) / t, 1.0 - np.asarray(x) / t, u, vv) / t
    # case 4: mirror of a crossing segment, with u' = w and v' = -v
    u, vv = max(w, 0.0), max(-v, 0.0)
    return 0.0, 0.0, lambda x: _f2(1.0 - np.asarray(x) / t, np.asarray(x) / t, u, vv) / t


def density(params: SojournParams) -> SojournDensity:
    """Law of T_s for the bridge described by ``params``."""
    v, w, t = params.v, params.w, params.t
    parts = [_case_density(k, v, w, t) for k in _orderings(v, w)]
    n = len(parts)
    a0 = sum(p[0] for p in parts) / n
    at = sum(p[1] for p in parts) / n
    funcs = [p[2] for p in parts]
    if n == 1:
        cont = funcs[0]
    else:
        cont = lambda x: sum(f(x) for f in funcs) / n
    return SojournDensity(atom_at_zero=a0, atom_at_t=at, continuous_part=cont, t=t)


# ---------------------------------------------------------------------------
# moment-generating function from the single-integral representations


def _e1ratio(x):
    """(1 - e^{-x})/x, equal to 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.expm1(-x) / x
    return np.where(x > 1e-10, out, 1.0 - 0.5 * x)


def _e1ratio_scalar(x):
    return -math.expm1(-x) / x if x > 1e-10 else 1.0 - 0.5 * x


def _quad_checked(f, a, b, what, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-11, limit=400, points=points)
        except integrate.IntegrationWarning as exc:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                val, err = integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-11, limit=400, points=points)
            if err > 1e-8:
                raise NumericalError(f"{what}: {exc}", estimate=val, error=err) from None
    return val


def _knee_points(kappa, S):
    # S*y crosses 1 near z = kappa/sqrt(S); large S makes that a sharp knee
    if S <= 1.0 or kappa == 0.0:
        return None
    z = kappa / math.sqrt(S)
    pts = [z * f for f in (0.1, 1.0, 10.0) if 0.0 < z * f < 40.0]
    return pts or None


def _z_fraction(z, kappa):
    # z^2/(kappa^2 + z^2) without underflow for tiny kappa and z
    if z <= 0.0:
        return 1.0 if kappa == 0.0 else 0.0
    r = kappa / z
    return 1.0 / (1.0 + r * r)


def _phi(kappa, S):
    # int_0^1 g1 e^{-S sigma}, via sigma = kappa^2/(kappa^2 + z^2)

    def f(z):
        y = _z_fraction(z, kappa)
        return math.exp(-0.5 * z * z) * float(_e1ratio(S * y))

    return _SQRT_2_PI * _quad_checked(f, 0.0, 40.0, "one-sided mgf", points=_knee_points(kappa, S))


def _psi(kappa, S):
    # int_0^1 g1 e^{-S (1 - sigma)}

    def f(z):
        y = _z_fraction(z, kappa)
        return math.exp(-0.5 * z * z - S * (1.0 - y)) * float(_e1ratio(S * y))

    return _SQRT_2_PI * _quad_checked(f, 0.0, 40.0, "one-sided mirror mgf", points=_knee_points(kappa, S))


def _crossing_kernel(s, cs, u, v):
    # numerator over (s cs)^2 times exp(-E); d sigma = 2 sqrt(s cs) d theta is
    # folded in, leaving 2 num / (s cs)^2 e^{-E}
    num = v * cs * (u * u - s) - u * s * (v * v - cs)
    prod = s * cs
    expo = (u * cs - v * s) ** 2 / (2.0 * prod)
    return 2.0 * num / (prod * prod) * math.exp(-expo)


def _crossing_mgf(u, v, S, mirrored):
    if u + v < _SEAM:
        # both endpoints on the boundary: the law is uniform
        return float(_e1ratio(S))

    # The kernel integrates to zero, so any constant may be subtracted from
    # e^{-S sigma}/S. Subtracting its value at the end nearer the boundary
    # removes a 1/v (or 1/u) cancellation when an endpoint sits close to it.
    shift = -_e1ratio_scalar(S) if v < u else 0.0

    def f(th):
        s = math.sin(th) ** 2
        cs = math.cos(th) ** 2
        if s == 0.0 or cs == 0.0:
            return 0.0
        ker = _crossing_kernel(s, cs, u, v)
        if not math.isfinite(ker) or ker == 0.0:
            return 0.0
        factor = -s * _e1ratio_scalar(S * s)
        if mirrored:
            factor *= math.exp(-S * cs)
        return ker * (factor - shift)

    peak = u / (u + v) if u + v > 0 else 0.5
    th_peak = math.asin(math.sqrt(min(max(peak, 0.0), 1.0)))
    # an endpoint close to the boundary leaves a layer of width ~u (or ~v)
    # in theta at the matching end of the interval
    pts = [th_peak]
    for k in (0.5, 2.0, 8.0):
        pts += [k * u, math.pi / 2 - k * v]
    pts = sorted(p for p in set(pts) if 0.0 < p < math.pi / 2) or None
    return _quad_checked(f, 0.0, math.pi / 2, "crossing mgf", points=pts) / math.sqrt(2.0 * math.pi)


def _case_mgf(case, v, w, S):
    if math.isinf(S):
        return 1.0 - math.exp(-2.0 * max(v * w, 0.0)) if case == 1 else 0.0
    if case == 1:
        p = math.exp(-2.0 * max(v * w, 0.0))
        return 1.0 - p + p * _phi(v + w, S)
    if case == 3:
        p = math.exp(-2.0 * max(v * w, 0.0))
        return math.exp(-S) * (1.0 - p) + p * _psi(-(v + w), S)
    if case == 2:
        return _crossing_mgf(max(-w, 0.0), max(v, 0.0), S, mirrored=False)
    return _crossing_mgf(max(w, 0.0), max(-v, 0.0), S, mirrored=True)


def mgf(params: SojournParams, s: float) -> float:
    """E[exp(-s T_s)] by adaptive quadrature of the integral representations.

    ``s = inf`` returns the probability that the segment never crosses.
    """
    if s < 0 or math.isnan(s):
        raise InvalidArgument("s must be non-negative")
    if s == 0:
        return 1.0
    S = s * params.t
    cases = _orderings(params.v, params.w)
    if len(cases) > 1:
        # on a seam the laws coincide; the one-sided representations stay
        # regular there while the crossing ones degenerate
        cases = [k for k in cases if k in (1, 3)] or cases
    return sum(_case_mgf(k, params.v, params.w, S) for k in cases) / len(cases)


def mean(params: SojournParams) -> float:
    """Closed-form E[T_s]."""
    a, c, t, d = params.a, params.c, params.t, params.d
    k = 2 * d - a - c
    one_side = (d - a) * (d - c) if (d >= a and d >= c) else ((a - d) * (c - d) if (a >= d and c >= d) else 0.0)
    first = t / 2 + math.copysign(1.0, k) * (t / 2) * math.expm1(-2 * one_side / t) if k != 0 else t / 2
    z = (abs(d - a) + abs(d - c)) / math.sqrt(2 * t)
    # e^{(c-a)^2/2t} erfc(z) = e^{(c-a)^2/2t - z^2} erfcx(z), exponent <= 0
    expo = (c - a) ** 2 / (2 * t) - z * z
    second = math.sqrt(math.pi * t / 8) * k * math.exp(expo) * special.erfcx(z)
    return float(first - second)


def crossing_probability(d: float, T: float) -> float:
    """Probability that a bridge of duration T from 0 to 0 reaches level d."""
    if not T > 0:
        raise InvalidArgument("T must be positive")
    if d <= 0:
        return 1.0
    return math.exp(-2.0 * d * d / T)


# ---------------------------------------------------------------------------
# trapezoid identity helpers


def trapezoid_step_average(d, dt):
    """Gaussian-step average of the trapezoidal sojourn estimate, closed form."""
    return 0.5 * dt * special.erfc(math.sqrt(2.0) * d / math.sqrt(dt))


def mean_step_average(d, dt, rtol=1e-12):
    """Gaussian-step average of the exact mean sojourn time, by quadrature."""

    def f(dx):
        return math.exp(-dx * dx / (2 * dt)) / math.sqrt(2 * math.pi * dt) * mean(SojournParams(-dx / 2, dx / 2, dt, d))

    s = math.sqrt(dt)
    pts = [-2 * abs(d), 0.0, 2 * abs(d)]
    val, _ = integrate.quad(f, -40 * s - 2 * abs(d), 40 * s + 2 * abs(d), points=sorted(set(pts)), epsabs=1e-15, epsrel=rtol, limit=400)
    return val


# ---------------------------------------------------------------------------
# composite quadrature in theta (sigma = sin^2 theta) with geometric
# refinement toward both ends, used for tables


def _theta_rule(n_panels=64, n_geo=34, order=8):
    h = (math.pi / 2) / n_panels
    brk = [h * 2.0**-k for k in range(n_geo, -1, -1)]
    brk = [0.0] + brk + [h * j for j in range(2, n_panels - 1)]
    top = [math.pi / 2 - h * 2.0**-k for k in range(0, n_geo + 1)]
    brk = brk + top + [math.pi / 2]
    brk = np.array(sorted(set(brk)))
    x, wts = np.polynomial.legendre.leggauss(order)
    lo, hi = brk[:-1, None], brk[1:, None]
    nodes = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
    weights = (0.5 * (hi - lo) * wts).ravel()
    s = np.sin(nodes) ** 2
    cs = np.cos(nodes) ** 2
    jac = 2.0 * np.sin(nodes) * np.cos(nodes)
    return s, cs, weights * jac


_RULE = None


def _rule():
    global _RULE
    if _RULE is None:
        _RULE = _theta_rule()
    return _RULE


# ---------------------------------------------------------------------------
# inverse-CDF tables


@dataclass(frozen=True)
class GridSpec:
    """Ranges and resolutions of the sampling tables.

    One-sided segments are tabulated over kappa in [0, kappa_max]; crossing
    segments over (u, v) in [0, uv_max]^2. Grid points are uniform in the
    square root of each variable, which resolves the boundary layer at small
    distances. Quantiles use Chebyshev nodes so theta = arccos(1 - 2q) is
    uniform.
    """

    kappa_max: float = 10.0
    n_kappa: int = 401
    uv_max: float = 6.0
    n_uv: int = 97
    n_quantiles: int = 512
    n_cdf: int = 8193

    def __post_init__(self):
        if self.n_quantiles < 4 or self.n_cdf < 65 or self.n_kappa < 4 or self.n_uv < 4:
            raise InvalidArgument("grid too coarse")
        if not (self.kappa_max > 0 and self.uv_max > 0):
            raise InvalidArgument("table ranges must be positive")

    def kappa_grid(self):
        return np.linspace(0.0, math.sqrt(self.kappa_max), self.n_kappa) ** 2

    def uv_grid(self):
        return np.linspace(0.0, math.sqrt(self.uv_max), self.n_uv) ** 2

    def kappa_index(self, kappa):
        return np.sqrt(np.asarray(kappa, dtype=float)) * ((self.n_kappa - 1) / math.sqrt(self.kappa_max))

    def uv_index(self, x):
        return np.sqrt(np.asarray(x, dtype=float)) * ((self.n_uv - 1) / math.sqrt(self.uv_max))

    def quantiles(self):
        i = np.arange(self.n_quantiles)
        return 0.5 * (1.0 - np.cos(math.pi * i / (self.n_quantiles - 1)))


def _cdf_theta_grid(n):
    # endpoints nudged inward so both sin and cos stay nonzero
    th = np.linspace(1e-12, math.pi / 2 - 1e-12, n)
    return th, np.sin(th) ** 2, np.cos(th) ** 2, 2.0 * np.sin(th) * np.cos(th)


def _invert_rows(dens_theta, th, q):
    """Rows of a density in theta -> sigma at quantiles q."""
    cdf = integrate.cumulative_simpson(dens_theta, x=th, axis=-1, initial=0.0)
    cdf = np.maximum.accumulate(np.maximum(cdf, 0.0), axis=-1)
    total = cdf[:, -1:]
    cdf = cdf / np.where(total > 0, total, 1.0)
    out = np.empty((dens_theta.shape[0], q.size))
    for i in range(dens_theta.shape[0]):
        theta_q = np.interp(q, cdf[i], th)
        out[i] = np.sin(theta_q) ** 2
    return out


def _q1_rows(kappas, spec, q):
    th, s, cs, jac = _cdf_theta_grid(spec.n_cdf)
    dens = _g1(s[None, :], cs[None, :], np.asarray(kappas)[:, None]) * jac
    return _invert_rows(dens, th, q)


def _q2_rows(us, vs, spec, q, chunk=256):
    th, s, cs, jac = _cdf_theta_grid(spec.n_cdf)
    us = np.asarray(us, dtype=float)
    vs = np.asarray(vs, dtype=float)
    out = np.empty((us.size, q.size))
    for lo in range(0, us.size, chunk):
        sl = slice(lo, lo + chunk)
        dens = _f2(s[None, :], cs[None, :], us[sl, None], vs[sl, None]) * jac
        out[sl] = _invert_rows(dens, th, q)
    return out


@dataclass
class SojournTables:
    """Inverse-CDF tables for one-sided (2D) and crossing (3D) segments.

    Values are spline coefficients for cubic interpolation; ``error_bound``
    holds the maximum deviation from direct inversion observed at cell
    midpoints during the build, in units of sigma = x/t.
    """

    spec: GridSpec
    q1_coeffs: np.ndarray = field(repr=False)
    q2_coeffs: np.ndarray = field(repr=False)
    error_bound: dict = field(default_factory=dict)

    def _q_index(self, q):
        theta = np.arccos(np.clip(1.0 - 2.0 * np.asarray(q, dtype=float), -1.0, 1.0))
        return theta * (self.spec.n_quantiles - 1) / math.pi

    def quantile_one_sided(self, kappa, q):
        coords = np.vstack([self.spec.kappa_index(kappa).ravel(), self._q_index(q).ravel()])
        out = ndimage.map_coordinates(self.q1_coeffs, coords, order=3, prefilter=False, mode="nearest")
        return np.clip(out, 0.0, 1.0)

    def quantile_crossing(self, u, v, q):
        sp = self.spec
        coords = np.vstack([sp.uv_index(u).ravel(), sp.uv_index(v).ravel(), self._q_index(q).ravel()])
        out = ndimage.map_coordinates(self.q2_coeffs, coords, order=3, prefilter=False, mode="nearest")
        return np.clip(out, 0.0, 1.0)

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.q1_coeffs).tobytes())
        h.update(np.ascontiguousarray(self.q2_coeffs).tobytes())
        return h.hexdigest()


def build_tables(spec: GridSpec = GridSpec(), validate: bool = True, seed: int = 0) -> SojournTables:
    """Tabulate inverse CDFs and measure the interpolation error."""
    q = spec.quantiles()
    kap = spec.kappa_grid()
    q1 = _q1_rows(kap, spec, q)
    g = spec.uv_grid()
    uu, vv = np.meshgrid(g, g, indexing="ij")
    q2 = _q2_rows(uu.ravel(), vv.ravel(), spec, q).reshape(g.size, g.size, q.size)
    tables = SojournTables(
        spec=spec,
        q1_coeffs=ndimage.spline_filter(q1, order=3, mode="nearest"),
        q2_coeffs=ndimage.spline_filter(q2, order=3, mode="nearest"),
    )
    if validate:
        tables.error_bound = _measure_error(tables, seed)
    return tables


def _measure_error(tables, seed, n_params=128, n_q=64):
    rng = np.random.default_rng(seed)
    spec = tables.spec
    qs = rng.uniform(0.0, 1.0, n_q)
    kap = rng.uniform(0.0, spec.kappa_max, n_params) * rng.uniform(0.0, 1.0, n_params)
    direct1 = _q1_rows(kap, spec, qs)
    approx1 = tables.quantile_one_sided(np.repeat(kap, n_q), np.tile(qs, n_params)).reshape(n_params, n_q)
    # uniform draws plus draws concentrated near the boundary
    us = rng.uniform(0.0, spec.uv_max, n_params) * rng.uniform(0.0, 1.0, n_params)
    vs = rng.uniform(0.0, spec.uv_max, n_params) * rng.uniform(0.0, 1.0, n_params)
    direct2 = _q2_rows(us, vs, spec, qs)
    approx2 = tables.quantile_crossing(np.repeat(us, n_q), np.repeat(vs, n_q), np.tile(qs, n_params)).reshape(n_params, n_q)
    return {
        "one_sided": float(np.max(np.abs(direct1 - approx1))),
        "crossing": float(np.max(np.abs(direct2 - approx2))),
    }


# versioned persistence: magic, u32 version, u32 header length, JSON header
# (grid spec, shapes, sha256 of the payload, error bounds), then raw float64
_TABLE_MAGIC = b"WLSOJTAB"
_TABLE_VERSION = 1


def save_tables(tables: SojournTables, path) -> None:
    header = {
        "spec": asdict(tables.spec),
        "q1_shape": list(tables.q1_coeffs.shape),
        "q2_shape": list(tables.q2_coeffs.shape),
        "sha256": tables.checksum(),
        "error_bound": tables.error_bound,
    }
    raw = json.dumps(header, sort_keys=True).encode()
    with open(Path(path), "wb") as fh:
        fh.write(_TABLE_MAGIC + struct.pack("<II", _TABLE_VERSION, len(raw)) + raw)
        fh.write(np.ascontiguousarray(tables.q1_coeffs, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(tables.q2_coeffs, dtype="<f8").tobytes())


def load_tables(path) -> SojournTables:
    buf = Path(path).read_bytes()
    if buf[:8] != _TABLE_MAGIC:
        raise InvalidArgument("not a sojourn table file")
    version, hlen = struct.unpack_from("<II", buf, 8)
    if version != _TABLE_VERSION:
        raise InvalidArgument(f"unsupported table version {version}")
    header = json.loads(buf[16 : 16 + hlen])
    off = 16 + hlen
    n1 = int(np.prod(header["q1_shape"]))
    n2 = int(np.prod(header["q2_shape"]))
    body = np.frombuffer(buf, dtype="<f8", offset=off)
    if body.size != n1 + n2:
        raise InvalidArgument("table payload size mismatch")
    tables = SojournTables(
        spec=GridSpec(**header["spec"]),
        q1_coeffs=body[:n1].reshape(header["q1_shape"]).copy(),
        q2_coeffs=body[n1:].reshape(header["q2_shape"]).copy(),
        error_bound=header.get("error_bound", {}),
    )
    if tables.checksum() != header["sha256"]:
        raise InvalidArgument("table checksum mismatch")
    return tables


# ---------------------------------------------------------------------------
# sampling


def _direct_quantile(case, p1, p2, q, spec):
    """Slow path: invert a freshly computed CDF (no table)."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if case == "one_sided":
        return _q1_rows([p1], spec, q)[0]
    return _q2_rows([p1], [p2], spec, q)[0]


def sample_sojourn_many(tables: SojournTables, a, c, t, d, u) -> np.ndarray:
    """Vectorized sojourn draws for segments (a_j -> c_j over time t_j)."""
    a, c, t, d, u = np.broadcast_arrays(*(np.asarray(z, dtype=float) for z in (a, c, t, d, u)))
    a, c, t, d, u = (z.ravel() for z in (a, c, t, d, u))
    if np.any(t <= 0):
        raise InvalidArgument("segment durations must be positive")
    rt = np.sqrt(t)
    v = (d - a) / rt
    w = (d - c) / rt
    out = np.zeros_like(a)

    with np.errstate(over="ignore"):
        p = np.exp(-2.0 * np.maximum(v * w, 0.0))
    below = (v >= 0) & (w >= 0)
    above = (v < 0) & (w < 0)
    up = (v >= 0) & (w < 0)
    down = (v < 0) & (w >= 0)

    # one-sided below: atom at zero with weight 1 - p
    hit = below & (u >= 1.0 - p)
    q = np.where(hit, (u - (1.0 - p)) / np.where(p > 0, p, 1.0), 0.0)
    _fill_one_sided(out, hit, v + w, q, tables, t, mirrored=False)
    # one-sided above: atom at t with weight 1 - p
    full = above & (u < 1.0 - p)
    out[full] = t[full]
    part = above & ~full
    q = np.where(part, (u - (1.0 - p)) / np.where(p > 0, p, 1.0), 0.0)
    _fill_one_sided(out, part, -(v + w), q, tables, t, mirrored=True)
    # crossings
    _fill_crossing(out, up, -w, v, u, tables, t, mirrored=False)
    _fill_crossing(out, down, w, -v, u, tables, t, mirrored=True)
    return out


def _fill_one_sided(out, mask, kappa, q, tables, t, mirrored):
    if not np.any(mask):
        return
    idx = np.flatnonzero(mask)
    k = kappa[idx]
    sig = np.empty(idx.size)
    inside = k <= tables.spec.kappa_max
    sig[inside] = tables.quantile_one_sided(k[inside], q[idx][inside])
    for j in np.flatnonzero(~inside):
        sig[j] = _direct_quantile("one_sided", k[j], None, q[idx][j], tables.spec)[0]
    out[idx] = t[idx] * (1.0 - sig) if mirrored else t[idx] * sig


def _fill_crossing(out, mask, uu, vv, q, tables, t, mirrored):
    if not np.any(mask):
        return
    idx = np.flatnonzero(mask)
    us, vs, qs = uu[idx], vv[idx], q[idx]
    sig = np.empty(idx.size)
    inside = (us <= tables.spec.uv_max) & (vs <= tables.spec.uv_max)
    sig[inside] = tables.quantile_crossing(us[inside], vs[inside], qs[inside])
    for j in np.flatnonzero(~inside):
        sig[j] = _direct_quantile("crossing", us[j], vs[j], qs[j], tables.spec)[0]
    out[idx] = t[idx] * (1.0 - sig) if mirrored else t[idx] * sig


def sample_sojourn(tables: SojournTables, params: SojournParams, u: float) -> float:
    """One draw of T_s by inverse CDF; atoms are resolved by comparing u."""
    if not 0.0 <= u < 1.0:
        raise InvalidArgument("u must lie in [0, 1)")
    return float(sample_sojourn_many(tables, params.a, params.c, params.t, params.d, u)[0])


# ---------------------------------------------------------------------------
# MGF tables at a fixed list of scaled rates S = s t


@dataclass
class MgfTables:
    """Per-segment MGF values at fixed scaled rates ``S`` (one row per rate).

    Tables are built from the density by composite quadrature on grids
    uniform in sqrt(kappa) and sqrt(u), sqrt(v), and read back with cubic
    splines. Segments outside the grids are evaluated directly.
    """

    S: np.ndarray
    kappa_max: float
    uv_max: float
    phi_coeffs: np.ndarray = field(repr=False)  # (nS, nk): int g1 e^{-S sigma}
    psi_coeffs: np.ndarray = field(repr=False)  # (nS, nk): int g1 e^{-S(1-sigma)}
    cross_coeffs: np.ndarray = field(repr=False)  # (nS, nuv, nuv)

    def evaluate(self, v, w, skip_below: float = 1e-17) -> np.ndarray:
        """M_j(S_i) for segments with scaled distances v, w; shape (nS, nseg).

        One-sided segments whose touch probability is below ``skip_below``
        are returned as exactly 1.
        """
        v = np.asarray(v, dtype=float).ravel()
        w = np.asarray(w, dtype=float).ravel()
        return self.path_products(v, w, np.arange(v.size), v.size, skip_below).T

    def path_products(self, v, w, rows, n_rows, skip_below: float = 0.0) -> np.ndarray:
        """Product of segment MGFs per path, shape (n_rows, nS).

        ``rows[j]`` names the path that segment j belongs to.
        """
        v = np.asarray(v, dtype=float).ravel()
        w = np.asarray(w, dtype=float).ravel()
        rows = np.asarray(rows, dtype=np.intp).ravel()
        prod = np.ones((n_rows, self.S.size))
        if v.size == 0:
            return prod
        phi_t, psi_t, cross_t = self._transposed()
        with np.errstate(over="ignore"):
            p = np.exp(-2.0 * np.maximum(v * w, 0.0))
        e_s = np.exp(-self.S)
        k_scale = (phi_t.shape[0] - 1) / math.sqrt(self.kappa_max)
        uv_scale = (cross_t.shape[0] - 1) / math.sqrt(self.uv_max)
        kappa = np.abs(v + w)

        for mirrored, sel in ((False, (v >= 0) & (w >= 0) & (p >= skip_below)), (True, (v < 0) & (w < 0))):
            tab = sel & (kappa <= self.kappa_max)
            one_sided_products(psi_t if mirrored else phi_t, k_scale, kappa[tab], p[tab], rows[tab], e_s, mirrored, prod)
            slow = np.flatnonzero(sel & ~tab)
            if slow.size:
                val = np.clip(_direct_mgf_one_sided(kappa[slow], self.S, mirrored).T, 0.0, 1.0)
                base = (e_s[None, :] if mirrored else 1.0) * (1.0 - p[slow, None])
                np.multiply.at(prod, rows[slow], base + p[slow, None] * val)
        # a downward crossing is an upward one run backwards with the distances swapped
        for sel, uu, vv in (((v >= 0) & (w < 0), -w, v), ((v < 0) & (w >= 0), -v, w)):
            tab = sel & (uu <= self.uv_max) & (vv <= self.uv_max)
            crossing_products(cross_t, uv_scale, uu[tab], vv[tab], rows[tab], prod)
            slow = np.flatnonzero(sel & ~tab)
            if slow.size:
                val = _direct_mgf_crossing(uu[slow], vv[slow], self.S).T
                np.multiply.at(prod, rows[slow], np.clip(val, 0.0, 1.0))
        return prod

    def _transposed(self):
        cached = self.__dict__.get("_t")
        if cached is None:
            cached = (
                np.ascontiguousarray(self.phi_coeffs.T),
                np.ascontiguousarray(self.psi_coeffs.T),
                np.ascontiguousarray(np.moveaxis(self.cross_coeffs, 0, -1)),
            )
            self.__dict__["_t"] = cached
        return cached


def _direct_mgf_one_sided(kappa, S, mirrored):
    """int g1 e^{-S sigma} (or e^{-S(1-sigma)}) by composite quadrature; shape (nS, nk)."""
    s, cs, wts = _rule()
    g = _g1(s[None, :], cs[None, :], np.asarray(kappa, dtype=float)[:, None]) * wts
    g /= g.sum(axis=1, keepdims=True)
    return (g @ np.exp(-np.outer(cs if mirrored else s, S))).T


def _direct_mgf_crossing(u, v, S):
    s, cs, wts = _rule()
    f = _f2(s[None, :], cs[None, :], np.asarray(u, dtype=float)[:, None], np.asarray(v, dtype=float)[:, None]) * wts
    f /= f.sum(axis=1, keepdims=True)
    return (f @ np.exp(-np.outer(s, S))).T


def build_mgf_tables(S, kappa_max: float = 12.0, n_kappa: int = 513, uv_max: float = 6.0, n_uv: int = 97) -> MgfTables:
    """Tabulate segment MGFs at the scaled rates ``S``."""
    S = np.atleast_1d(np.asarray(S, dtype=float))
    if np.any(~(S >= 0)) or np.any(~np.isfinite(S)):
        raise InvalidArgument("rates must be finite and non-negative")
    kap = np.linspace(0.0, math.sqrt(kappa_max), n_kappa) ** 2
    phi = np.empty((S.size, kap.size))
    psi = np.empty((S.size, kap.size))
    for lo in range(0, kap.size, 512):
        sl = slice(lo, lo + 512)
        phi[:, sl] = _direct_mgf_one_sided(kap[sl], S, mirrored=False)
        psi[:, sl] = _direct_mgf_one_sided(kap[sl], S, mirrored=True)
    g = np.linspace(0.0, math.sqrt(uv_max), n_uv) ** 2
    uu, vv = np.meshgrid(g, g, indexing="ij")
    flat_u, flat_v = uu.ravel(), vv.ravel()
    cross = np.empty((S.size, flat_u.size))
    for lo in range(0, flat_u.size, 512):
        sl = slice(lo, lo + 512)
        cross[:, sl] = _direct_mgf_crossing(flat_u[sl], flat_v[sl], S)
    cross = cross.reshape(S.size, n_uv, n_uv)

    def filt(a):
        return np.stack([ndimage.spline_filter(a[i], order=3, mode="nearest") for i in range(a.shape[0])])

    return MgfTables(
        S=S,
        kappa_max=kappa_max,
        uv_max=uv_max,
        phi_coeffs=filt(phi),
        psi_coeffs=filt(psi),
        cross_coeffs=filt(cross),
    )
