import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from worldline.errors import InvalidArgument
from worldline.sojourn import (
    SojournParams,
    build_mgf_tables,
    crossing_probability,
    density,
    load_tables,
    mean,
    mean_step_average,
    mgf,
    sample_sojourn,
    sample_sojourn_many,
    save_tables,
    trapezoid_step_average,
)

# one parameter set for each ordering of the endpoints against the boundary
FOUR_CASES = [
    SojournParams(-0.3, -0.6, 1.0, 0.2),  # both below
    SojournParams(-0.2, 0.5, 0.7, 0.1),  # crossing upward
    SojournParams(0.6, -0.1, 1.3, 0.3),  # crossing downward
    SojournParams(0.5, 0.8, 0.9, 0.2),  # both above
]


@pytest.mark.parametrize("p", FOUR_CASES)
def test_density_normalization(p):
    assert density(p).total_mass() == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("p", FOUR_CASES)
@pytest.mark.parametrize("s", [0.3, 2.0, 15.0])
def test_mgf_is_laplace_transform(p, s):
    assert mgf(p, s) == pytest.approx(density(p).laplace(s), abs=1e-6)


@pytest.mark.parametrize("p", FOUR_CASES)
def test_mean_is_first_moment(p):
    assert mean(p) == pytest.approx(density(p).first_moment(), abs=1e-7)


def test_mgf_examples():
    p = SojournParams(0.0, 0.0, 1.0, 1.0)
    assert mgf(p, 0.0) == pytest.approx(1.0, abs=1e-12)
    assert mgf(p, 1.0) == pytest.approx(density(p).laplace(1.0), abs=1e-6)
    assert mgf(p, 1.0) == pytest.approx(0.9903890413289829, rel=1e-9)
    assert mgf(SojournParams(0.0, 0.0, 1.0, 40.0), 3.0) == pytest.approx(1.0, abs=1e-12)


def test_mean_examples():
    t = 1.7
    assert mean(SojournParams(0.4, 0.4, t, 0.4)) == t / 2
    assert mean(SojournParams(0.0, 0.0, 1.0, 50.0)) == pytest.approx(0.0, abs=1e-300)
    d, t = 1.0, 1.0
    closed = t / 2 * math.exp(-2 * d * d / t) - math.sqrt(math.pi * d * d * t / 2) * math.erfc(math.sqrt(2 * d * d / t))
    assert mean(SojournParams(0.0, 0.0, t, d)) == pytest.approx(closed, rel=1e-10)
    assert mean(SojournParams(0.0, 0.0, 1.0, 1.0)) == pytest.approx(0.010641517625414258, rel=1e-10)


def test_density_limits():
    far_above = density(SojournParams(0.0, 0.0, 1.0, 30.0))
    assert far_above.atom_at_zero == pytest.approx(1.0)
    far_below = density(SojournParams(0.0, 0.0, 1.0, -30.0))
    assert far_below.atom_at_t == pytest.approx(1.0)


def test_crossing_probability():
    assert crossing_probability(0.0, 2.0) == 1.0
    assert crossing_probability(1.5, 1.5**2) == pytest.approx(math.exp(-2))
    with pytest.raises(InvalidArgument):
        crossing_probability(1.0, 0.0)


@pytest.mark.parametrize("d", [-0.4, 0.0, 0.1, 0.5, 1.2])
@pytest.mark.parametrize("dt", [0.01, 0.3])
def test_trapezoid_identity(d, dt):
    assert mean_step_average(d, dt) == pytest.approx(trapezoid_step_average(d, dt), abs=1e-8 * dt, rel=1e-8)


@given(a=st.floats(-2, 2), c=st.floats(-2, 2), t=st.floats(0.05, 3), d=st.floats(-2, 2))
def test_mean_within_bounds(a, c, t, d):
    m = mean(SojournParams(a, c, t, d))
    assert -1e-12 <= m <= t + 1e-12


@given(a=st.floats(-2, 2), c=st.floats(-2, 2), t=st.floats(0.05, 3), d=st.floats(-2, 2), s=st.floats(0, 30))
def test_mgf_in_unit_interval(a, c, t, d, s):
    m = mgf(SojournParams(a, c, t, d), s)
    assert math.exp(-s * t) - 1e-9 <= m <= 1 + 1e-9


def test_invalid_params():
    with pytest.raises(InvalidArgument):
        SojournParams(0.0, 0.0, 0.0, 1.0)
    with pytest.raises(InvalidArgument):
        mgf(SojournParams(0.0, 0.0, 1.0, 1.0), -1.0)


def test_mgf_tables_match_direct(rng):
    S = np.array([0.05, 1.0, 30.0])
    tab = build_mgf_tables(S)
    for p in FOUR_CASES:
        v, w = p.v, p.w
        got = tab.evaluate(np.array([v]), np.array([w]))[:, 0]
        # tables are in units t = 1 with the boundary above both endpoints for v, w > 0
        want = [mgf(SojournParams(-v, -w, 1.0, 0.0), s) for s in S]
        np.testing.assert_allclose(got, want, atol=1e-6)


def test_sampler_atoms(sojourn_tables):
    p = SojournParams(0.0, 0.1, 1.0, 0.5)
    p0 = density(p).atom_at_zero
    assert sample_sojourn(sojourn_tables, p, 0.5 * p0) == 0.0
    assert sample_sojourn(sojourn_tables, SojournParams(0.0, 0.0, 2.0, -40.0), 0.3) == pytest.approx(2.0)


@pytest.mark.parametrize("p", FOUR_CASES)
def test_sampler_mean(sojourn_tables, p):
    n = 200_000
    u = np.random.default_rng(1).random(n)
    x = sample_sojourn_many(sojourn_tables, np.full(n, p.a), np.full(n, p.c), p.t, p.d, u)
    assert np.all((x >= 0) & (x <= p.t))
    assert abs(x.mean() - mean(p)) < 4 * x.std() / math.sqrt(n)


def test_tables_roundtrip(tmp_path, sojourn_tables):
    save_tables(sojourn_tables, tmp_path / "t.bin")
    back = load_tables(tmp_path / "t.bin")
    assert back.checksum() == sojourn_tables.checksum()
    raw = bytearray((tmp_path / "t.bin").read_bytes())
    raw[-9] ^= 0xFF
    (tmp_path / "bad.bin").write_bytes(bytes(raw))
    with pytest.raises(Exception):
        load_tables(tmp_path / "bad.bin")


@pytest.mark.parametrize("eps", [1e-3, 1e-6, 1e-9, 0.0])
def test_mgf_continuous_at_boundary_endpoint(eps):
    limit = mgf(SojournParams(0.0, 1.0, 1.0, 0.0), 1.0)
    for p in (SojournParams(-eps, 1.0, 1.0, 0.0), SojournParams(eps, 1.0, 1.0, 0.0), SojournParams(1.0, -eps, 1.0, 0.0)):
        assert mgf(p, 1.0) == pytest.approx(limit, abs=2 * eps + 1e-8)
