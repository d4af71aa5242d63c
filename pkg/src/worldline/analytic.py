"""Closed forms and quadrature oracles for planar dielectric geometries.

All quantities are in natural units (hbar = c = eps0 = 1) unless a
:class:`~worldline.media.PhysicalConstants` instance is passed.

Efficiency factors compare against perfect-conductor references:

* eta_te: Casimir-Polder potential of a vacuum-side atom, relative to
  -3 alpha0 / (32 pi^2 d^4).
* eta_te_prime: potential of an atom embedded in the dielectric, same scale.
* gamma_te: two-body energy per area, relative to -pi^2 / (720 d^3).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import InvalidArgument, NumericalError, UnsupportedConfiguration
from .media import PhysicalConstants

__all__ = [
    "EfficiencyResult",
    "FkParams",
    "reflection",
    "eta_te",
    "eta_te_quadrature",
    "eta_te_prime",
    "eta_te_prime_quadrature",
    "gamma_te",
    "fk_one_step",
    "fk_two_step",
    "fk_one_body_integral",
    "fk_two_body_integral",
    "casimir_density_quadrature",
    "vcp_perfect_conductor",
    "cp_reference_magnitude",
    "casimir_reference_magnitude",
]


@dataclass(frozen=True)
class EfficiencyResult:
    value: float
    method: str  # "closed_form" or "quadrature"
    error: float = 0.0

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class FkParams:
    """Laplace variables and interface data for the Feynman-Kac closed forms."""

    lam: float
    s: float = 0.0
    chi1: float = 0.0
    chi2: float = 0.0
    d1: float = 0.0
    d2: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidArgument(f"lambda must be positive, got {self.lam!r}")
        if self.s < 0:
            raise InvalidArgument("s must be non-negative")


def _quad(f, a, b, rtol, what, limit=200):
    """scipy quad with warnings promoted to NumericalError."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=rtol, limit=limit)
        except integrate.IntegrationWarning as exc:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=rtol, limit=limit)
            if err > 1e3 * rtol * abs(val) + 1e-300:
                raise NumericalError(f"{what}: {exc}", estimate=val, error=err) from None
    return val, err


def _check_chi(chi, name="chi"):
    if math.isnan(chi) or chi < 0:
        raise InvalidArgument(f"{name} must be non-negative, got {chi!r}")


# ---------------------------------------------------------------------------
# Casimir-Polder efficiencies

_ETA_SERIES = (1 / 40, -1 / 112, 5 / 1152, -7 / 2816, 21 / 13312, -11 / 10240)
_ETA_PRIME_SERIES = (1 / 40, -3 / 56, 95 / 1152, -39 / 352, 1841 / 13312, -2533 / 15360)
_SERIES_BELOW = 1e-3


def _poly(coeffs, x):
    return x * np.polyval(coeffs[::-1], x)


def eta_te(chi: float) -> EfficiencyResult:
    """Vacuum-side atom efficiency; rises from chi/40 to 1/6."""
    _check_chi(chi)
    if math.isinf(chi):
        return EfficiencyResult(1.0 / 6.0, "closed_form")
    if chi < _SERIES_BELOW:
        return EfficiencyResult(float(_poly(_ETA_SERIES, chi)), "closed_form")
    rc = math.sqrt(chi)
    v = 1 / 6 + 1 / chi - math.sqrt(1 + chi) / (2 * chi) - math.asinh(rc) / (2 * chi * rc)
    return EfficiencyResult(v, "closed_form")


def eta_te_prime(chi: float) -> EfficiencyResult:
    """Embedded-atom efficiency; positive for every chi > 0."""
    _check_chi(chi)
    if math.isinf(chi):
        return EfficiencyResult(0.0, "closed_form")
    if chi < _SERIES_BELOW:
        return EfficiencyResult(float(_poly(_ETA_PRIME_SERIES, chi)), "closed_form")
    rc = math.sqrt(chi)
    q = 1 + chi
    bracket = 5 / 6 + 1 / chi - math.sqrt(q) / (2 * chi) - q**1.5 / (2 * chi * rc) * math.atan(rc)
    return EfficiencyResult(bracket * q**-1.5, "closed_form")


def _ratio(q, extra):
    # (sqrt(q+extra) - sqrt(q)) / (sqrt(q+extra) + sqrt(q)), without cancellation
    a = np.sqrt(q + extra)
    b = np.sqrt(q)
    return extra / (a + b) ** 2


def _eta_double(chi, embedded, rtol):
    # eta = (4/3) int ds sqrt(s) int dlam  e^{-2 sqrt(2 q)} / sqrt(q) * R,
    # q = lam + s (vacuum side) or lam + s(1+chi) (embedded), R the reflection
    # magnitude at (lam + s, s chi).
    err_acc = [0.0]

    def inner(s):
        shift = s * (1 + chi) if embedded else s

        def g(lam):
            q = lam + shift
            return math.exp(-2 * math.sqrt(2 * q)) / math.sqrt(q) * _ratio(lam + s, s * chi)

        val, err = _quad(g, 0.0, np.inf, rtol * 0.1, "eta inner integral")
        err_acc[0] = max(err_acc[0], err)
        return math.sqrt(s) * val

    val, err = _quad(inner, 0.0, np.inf, rtol, "eta outer integral")
    total_err = 4 / 3 * (err + err_acc[0])
    return 4 / 3 * val, total_err


def eta_te_quadrature(chi: float, rtol: float = 1e-8) -> EfficiencyResult:
    """eta_te from its (s, lambda) double-integral representation."""
    _check_chi(chi)
    if not chi > 0 or math.isinf(chi):
        raise InvalidArgument("quadrature route needs 0 < chi < inf")
    val, err = _eta_double(chi, False, rtol)
    return EfficiencyResult(val, "quadrature", err)


def eta_te_prime_quadrature(chi: float, rtol: float = 1e-8) -> EfficiencyResult:
    _check_chi(chi)
    if not chi > 0 or math.isinf(chi):
        raise InvalidArgument("quadrature route needs 0 < chi < inf")
    val, err = _eta_double(chi, True, rtol)
    return EfficiencyResult(val, "quadrature", err)


# ---------------------------------------------------------------------------
# two-body efficiency


def reflection(lam, chi):
    """TE Fresnel factor (sqrt(lam) - sqrt(lam+chi)) / (sqrt(lam) + sqrt(lam+chi)).

    ``chi = inf`` gives -1.
    """
    if np.isscalar(chi) and math.isinf(chi):
        return -1.0 + 0.0 * np.asarray(lam, dtype=float)
    return -_ratio(lam, chi)


def _fresnel_p(p, chi):
    if math.isinf(chi):
        return -1.0
    return -chi / (p + math.sqrt(p * p + chi)) ** 2


def gamma_te(chi1: float, chi2: float, rtol: float = 1e-9) -> EfficiencyResult:
    """Two-half-space efficiency, -(180/pi^4) int dxi xi^2 int dp p log(1 - r1 r2 e^{-2 p xi})."""
    _check_chi(chi1, "chi1")
    _check_chi(chi2, "chi2")
    if chi1 == 0 or chi2 == 0:
        return EfficiencyResult(0.0, "quadrature")
    err_acc = [0.0]

    def inner(p):
        a = _fresnel_p(p, chi1) * _fresnel_p(p, chi2)

        def g(xi):
            y = a * math.exp(-2 * p * xi)
            # log1p keeps full precision when the product is small
            return xi * xi * math.log1p(-y)

        # integrand decays like e^{-2 p xi}; 40/p is far in the tail
        val, err = _quad(g, 0.0, 40.0 / p, rtol * 0.1, "gamma inner integral")
        err_acc[0] = max(err_acc[0], p * err)
        return p * val

    val, err = _quad(inner, 1.0, np.inf, rtol, "gamma outer integral")
    scale = 180 / math.pi**4
    return EfficiencyResult(-scale * val, "quadrature", scale * (err + err_acc[0]))


# ---------------------------------------------------------------------------
# Feynman-Kac closed forms


def _shifted(lam, s_strength, chi):
    if s_strength is None:
        return lam, chi
    if s_strength < 0:
        raise InvalidArgument("s_strength must be non-negative")
    return lam + s_strength, (math.inf if math.isinf(chi) else s_strength * chi)


def fk_one_step(lam, s_strength, chi, d):
    """f(0) for one interface at distance d (d > 0: source in vacuum).

    With ``s_strength = s`` the substitutions lam -> lam + s, chi -> s chi are
    applied first; pass ``None`` to use lam and chi as given.
    """
    if not lam > 0:
        raise InvalidArgument("lambda must be positive")
    _check_chi(chi)
    lam, chi = _shifted(lam, s_strength, chi)
    r = reflection(lam, chi)
    if d > 0:
        return (1 + r * math.exp(-2 * math.sqrt(2 * lam) * d)) / math.sqrt(2 * lam)
    if math.isinf(chi):
        return 0.0
    k = math.sqrt(2 * (lam + chi))
    return (1 - r * math.exp(2 * k * d)) / k


_REGIONS = ("I", "II", "III")


def fk_two_step(lam, chi1, chi2, d1, d2, region=None):
    """f(0) for body 1 at x < d1 and body 2 at x > d2, source at x = 0.

    Region I has the source inside body 1 (0 < d1), II in the gap
    (d1 < 0 < d2), III inside body 2 (d2 < 0). ``region`` is inferred when
    omitted and checked against the signs when given.
    """
    if not lam > 0:
        raise InvalidArgument("lambda must be positive")
    _check_chi(chi1, "chi1")
    _check_chi(chi2, "chi2")
    if not d2 > d1:
        raise InvalidArgument("need d2 > d1")
    actual = "I" if d1 > 0 else ("III" if d2 < 0 else "II")
    if region is not None and region not in _REGIONS:
        raise InvalidArgument(f"region must be one of {_REGIONS}")
    if region is not None and region != actual:
        raise InvalidArgument(f"region {region} inconsistent with d1={d1}, d2={d2} (source is in {actual})")
    d = d2 - d1
    r1 = reflection(lam, chi1)
    r2 = reflection(lam, chi2)
    k = math.sqrt(2 * lam)
    e = math.exp(-2 * k * d)
    delta = 1 - r1 * r2 * e
    if actual == "I":
        if math.isinf(chi1):
            return 0.0
        k1 = math.sqrt(2 * (lam + chi1))
        return (1 + (r2 * e - r1) / delta * math.exp(-2 * k1 * d1)) / k1
    if actual == "III":
        if math.isinf(chi2):
            return 0.0
        k2 = math.sqrt(2 * (lam + chi2))
        return (1 + (r1 * e - r2) / delta * math.exp(2 * k2 * d2)) / k2
    return (1 + 2 * r1 * r2 * e / delta + (r1 * math.exp(2 * k * d1) + r2 * math.exp(-2 * k * d2)) / delta) / k


def _inv(lam, chi):
    return 0.0 if math.isinf(chi) else 1.0 / (lam + chi)


def fk_one_body_integral(lam, s, chi):
    """Renormalized source-integrated one-body term at (lam + s, s chi)."""
    _check_chi(chi)
    if chi == 0:
        return 0.0
    lam, chi = _shifted(lam, s, chi)
    if not lam > 0:
        raise InvalidArgument("lambda + s must be positive")
    return (1 / (4 * lam) - _inv(lam, chi) / 4) * reflection(lam, chi)


def fk_two_body_integral(lam, s, chi1, chi2, d):
    """Renormalized source-integrated two-body term at (lam + s, s chi_i).

    The interaction part is ``fk_two_body_integral - fk_one_body_integral(chi1)
    - fk_one_body_integral(chi2)``.
    """
    _check_chi(chi1, "chi1")
    _check_chi(chi2, "chi2")
    if not d > 0:
        raise InvalidArgument("separation must be positive")
    lam0 = lam
    lam, c1 = _shifted(lam0, s, chi1)
    _, c2 = _shifted(lam0, s, chi2)
    if not lam > 0:
        raise InvalidArgument("lambda + s must be positive")
    r1 = reflection(lam, c1)
    r2 = reflection(lam, c2)
    k = math.sqrt(2 * lam)
    e = math.exp(-2 * k * d)
    delta = 1 - r1 * r2 * e
    return (
        2 * r1 * r2 * e * d / (k * delta)
        + (r1 + r2) * (1 - e) / (4 * lam * delta)
        + (r2 * e - r1) * _inv(lam, c1) / (4 * delta)
        + (r1 * e - r2) * _inv(lam, c2) / (4 * delta)
    )


def _casimir_integrand(lam, s, chi1, chi2, d):
    # (1/sqrt(s (lam+s))) * x/(1-x) * (sqrt2 d + 1/sqrt(lam+s(1+chi1)) + ...),
    # x = r1 r2 e^{-2 sqrt(2(lam+s)) d}; this equals the two-body integral
    # minus both one-body integrals, divided by sqrt(s).
    q = lam + s

    def parts(chi):
        if math.isinf(chi):
            return -1.0, 0.0
        a = math.sqrt(lam + s * (1 + chi))
        return -(s * chi) / (math.sqrt(q) + a) ** 2, 1.0 / a

    r1, i1 = parts(chi1)
    r2, i2 = parts(chi2)
    x = r1 * r2 * math.exp(-2 * math.sqrt(2 * q) * d)
    return x / (1 - x) / math.sqrt(s * q) * (math.sqrt(2) * d + i1 + i2)


def casimir_density_quadrature(chi1, chi2, d, rtol: float = 1e-9) -> float:
    """Energy per area from the (lambda, s) double integral, natural units."""
    _check_chi(chi1, "chi1")
    _check_chi(chi2, "chi2")
    if not d > 0:
        raise InvalidArgument("separation must be positive")
    if chi1 == 0 or chi2 == 0:
        return 0.0
    err_acc = [0.0]

    def inner(lam):
        # s = w^2 removes the s^{-1/2} endpoint singularity
        g = lambda w: 2 * w * _casimir_integrand(lam, w * w, chi1, chi2, d) if w > 0 else 0.0
        val, err = _quad(g, 0.0, np.inf, rtol * 0.1, "casimir inner integral")
        err_acc[0] = max(err_acc[0], lam * err)
        return lam * val

    val, err = _quad(inner, 0.0, np.inf, rtol, "casimir outer integral")
    pref = -math.sqrt(2) / (8 * math.pi**2)
    total = pref * val
    if abs(pref) * (err + err_acc[0]) > 1e3 * rtol * abs(total):
        raise NumericalError("casimir density tolerance not met", estimate=total, error=abs(pref) * err)
    return total


# ---------------------------------------------------------------------------
# references


def vcp_perfect_conductor(d, constants: PhysicalConstants = PhysicalConstants()):
    """TE part of the perfect-conductor Casimir-Polder potential, -hbar c alpha0/(64 pi^2 eps0 d^4)."""
    if constants.D != 4:
        raise UnsupportedConfiguration("perfect-conductor reference is only defined for D = 4")
    if not d > 0:
        raise InvalidArgument("distance must be positive")
    k = constants
    return -k.hbar * k.c * k.alpha0 / (64 * math.pi**2 * k.eps0 * d**4)


def cp_reference_magnitude(d, constants: PhysicalConstants = PhysicalConstants()):
    """3 hbar c alpha0 / (32 pi^2 eps0 d^4), the full perfect-conductor CP magnitude."""
    k = constants
    return 3 * k.hbar * k.c * k.alpha0 / (32 * math.pi**2 * k.eps0 * d**4)


def casimir_reference_magnitude(d, constants: PhysicalConstants = PhysicalConstants()):
    """hbar c pi^2 / (720 d^3), the perfect-conductor Casimir energy per area."""
    return constants.hbar * constants.c * math.pi**2 / (720 * d**3)
