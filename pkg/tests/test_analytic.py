import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from worldline import analytic as an
from worldline.errors import InvalidArgument, UnsupportedConfiguration
from worldline.media import PhysicalConstants

ETA_1 = 0.018873091970347644
ETA_PRIME_1 = 0.005482134388944497
GAMMA_11 = 0.0033138544203469883


def test_frozen_values():
    assert float(an.eta_te(1.0)) == pytest.approx(ETA_1, rel=1e-12)
    assert float(an.eta_te_prime(1.0)) == pytest.approx(ETA_PRIME_1, rel=1e-12)
    assert float(an.gamma_te(1.0, 1.0)) == pytest.approx(GAMMA_11, rel=1e-9)
    assert float(an.eta_te(10.0)) == pytest.approx(0.07129103981321963, rel=1e-12)


@pytest.mark.parametrize("chi", [0.1, 1.0, 10.0, 1e3])
def test_closed_forms_match_quadrature(chi):
    assert float(an.eta_te(chi)) == pytest.approx(float(an.eta_te_quadrature(chi)), rel=1e-8)
    assert float(an.eta_te_prime(chi)) == pytest.approx(float(an.eta_te_prime_quadrature(chi)), rel=1e-8)


def test_limits():
    assert float(an.eta_te(math.inf)) == pytest.approx(1 / 6, rel=1e-12)
    assert float(an.eta_te_quadrature(1e6)) == pytest.approx(1 / 6, abs=1e-3)
    assert float(an.eta_te(0.01)) == pytest.approx(0.01 / 40, rel=0.05)
    assert float(an.eta_te_quadrature(1e-4)) / 1e-4 == pytest.approx(1 / 40, rel=1e-3)
    assert float(an.eta_te_prime(1e-9)) < 1e-9
    assert float(an.gamma_te(math.inf, math.inf)) == pytest.approx(0.5, rel=1e-6)
    assert float(an.gamma_te(0.0, 7.0)) == 0.0


def test_small_chi_series_is_continuous():
    lo, hi = float(an.eta_te(0.999e-3)), float(an.eta_te(1.001e-3))
    assert hi > lo and (hi - lo) / lo < 3e-3
    lo, hi = float(an.eta_te_prime(0.999e-3)), float(an.eta_te_prime(1.001e-3))
    assert hi > lo and (hi - lo) / lo < 3e-3


@given(st.floats(1e-3, 1e5), st.floats(1.01, 10))
def test_eta_monotone_and_bounded(chi, factor):
    a, b = float(an.eta_te(chi)), float(an.eta_te(chi * factor))
    assert 0 < a < b < 1 / 6
    assert float(an.eta_te_prime(chi)) > 0


@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_gamma_symmetric_and_bounded(c1, c2):
    g = float(an.gamma_te(c1, c2))
    assert g == pytest.approx(float(an.gamma_te(c2, c1)), rel=1e-8)
    assert 0 < g < 0.5


def test_casimir_density_dual_route():
    assert an.casimir_density_quadrature(1.0, 1.0, 1.0) == pytest.approx(-math.pi**2 / 720 * GAMMA_11, rel=1e-6)
    assert an.casimir_density_quadrature(math.inf, math.inf, 1.0) == pytest.approx(-math.pi**2 / 1440, rel=1e-6)
    assert an.casimir_density_quadrature(0.0, 1.0, 1.0) == 0.0


def test_reflection():
    assert an.reflection(1.0, 0.0) == 0.0
    assert an.reflection(1.0, math.inf) == -1.0
    assert an.reflection(1.0, 3.0) == pytest.approx((1 - 2) / (1 + 2))


def test_fk_one_step_examples():
    assert an.fk_one_step(2.0, None, 0.0, 0.3) == pytest.approx(0.5)
    assert an.fk_one_step(2.0, None, 5.0, 60.0) == pytest.approx(0.5, rel=1e-12)
    assert an.fk_one_step(1.0, None, 1.0, 0.5) == pytest.approx(0.6776117754398903, rel=1e-12)
    # the solution is continuous across the interface
    assert an.fk_one_step(1.0, None, 1.0, 1e-12) == pytest.approx(an.fk_one_step(1.0, None, 1.0, -1e-12), rel=1e-9)


def test_fk_two_step_reductions():
    for d1, d2 in [(0.2, 0.9), (-0.4, 0.6), (-0.9, -0.1)]:
        assert an.fk_two_step(2.0, 0.0, 0.0, d1, d2) == pytest.approx(0.5, rel=1e-12)
    # zeroing body 2 leaves the one-interface solution (mirrored geometry)
    assert an.fk_two_step(1.0, 1.3, 0.0, -0.4, 0.6) == pytest.approx(an.fk_one_step(1.0, None, 1.3, 0.4), abs=1e-12)
    assert an.fk_two_step(1.0, 0.0, 1.3, -0.4, 0.6) == pytest.approx(an.fk_one_step(1.0, None, 1.3, 0.6), abs=1e-12)
    assert an.fk_two_step(1.0, 1.0, 1.0, -0.5, 0.5) == pytest.approx(0.6504788474927381, rel=1e-12)


def test_fk_two_step_region_checks():
    with pytest.raises(InvalidArgument):
        an.fk_two_step(1.0, 1.0, 1.0, -0.5, 0.5, region="I")
    with pytest.raises(InvalidArgument):
        an.fk_two_step(1.0, 1.0, 1.0, 0.5, -0.5)
    with pytest.raises(InvalidArgument):
        an.fk_one_step(0.0, None, 1.0, 0.5)


def test_body_integrals():
    assert an.fk_one_body_integral(1.0, 1.0, 0.0) == 0.0
    i1 = an.fk_one_body_integral(1.0, 1.0, 1.0)
    assert an.fk_two_body_integral(1.0, 1.0, 1.0, 1.0, 60.0) == pytest.approx(2 * i1, rel=1e-10)
    # like media: the two-body excess carries r1 r2 > 0
    assert an.fk_two_body_integral(1.0, 1.0, 1.0, 1.0, 1.0) - 2 * i1 > 0


def test_perfect_conductor_reference():
    assert an.vcp_perfect_conductor(1.0) == pytest.approx(-1 / (64 * math.pi**2))
    assert an.vcp_perfect_conductor(2.0) == pytest.approx(an.vcp_perfect_conductor(1.0) / 16)
    with pytest.raises(UnsupportedConfiguration):
        an.vcp_perfect_conductor(1.0, PhysicalConstants(D=3))
    assert an.cp_reference_magnitude(1.0) == pytest.approx(3 / (32 * math.pi**2))
    assert an.casimir_reference_magnitude(1.0) == pytest.approx(math.pi**2 / 720)


def test_invalid_chi():
    with pytest.raises(InvalidArgument):
        an.eta_te(-1.0)
    with pytest.raises(InvalidArgument):
        an.gamma_te(float("nan"), 1.0)
