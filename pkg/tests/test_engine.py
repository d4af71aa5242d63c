import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from worldline import analytic as an
from worldline.engine import (
    RunConfig,
    convergence_sweep,
    estimate_casimir,
    estimate_cp,
    estimate_cp_dirichlet_closed,
    fit_difference_slope,
    run_blocks,
    sample_T,
    sample_x0,
    sweep_casimir,
    sweep_cp,
)
from worldline.errors import InvalidArgument
from worldline.media import Gap, HalfSpace, PhysicalConstants
from worldline.stats import EstimatorAccumulator


def test_sample_T_examples():
    assert sample_T(1.0, 4, 0.0) == (1.0, 0.5)
    assert sample_T(3.0, 4, 0.75)[0] == pytest.approx(6.0)
    T, w = sample_T(np.array([np.inf, 2.0]), 4, np.array([0.3, 0.3]))
    assert T[0] == np.inf and w[0] == 0.0
    with pytest.raises(InvalidArgument):
        sample_T(0.0, 4, 0.5)
    with pytest.raises(InvalidArgument):
        sample_T(1.0, 4, 1.0)


@given(st.floats(0.01, 100), st.integers(2, 6), st.floats(0, 0.999))
def test_sample_T_above_T0(T0, D, u):
    T, w = sample_T(T0, D, u)
    assert T >= T0
    assert w == pytest.approx(2.0 / (D * T0 ** (D / 2)))


def test_sample_T_weighting_integrates_power():
    # E[w f(T)] = int_T0^inf T^{-1-D/2} f(T) dT with f = 1 gives T0^{-D/2} (2/D)
    u = np.random.default_rng(0).random(200_000)
    T, w = sample_T(2.0, 4, u)
    val = np.mean(w * T ** 3 * T ** -3)
    assert val == pytest.approx(0.5 * 2.0**-2)


def test_sample_x0_examples():
    assert sample_x0(1.0, 0.5) == (0.0, pytest.approx(8 / 3))
    u = np.random.default_rng(1).random(400_000)
    x, w = sample_x0(0.7, u)
    inside = np.abs(x) < 0.7
    assert inside.mean() == pytest.approx(0.75, abs=4 * math.sqrt(0.1875 / u.size))
    # importance weights integrate any test function: int e^{-x^2} dx = sqrt(pi)
    assert np.mean(w * np.exp(-x * x)) == pytest.approx(math.sqrt(math.pi), rel=0.01)
    assert sample_x0(1.0, 0.5, center=0.5)[0] == 0.5


def test_run_config_validation():
    h = HalfSpace(0.0, 1.0)
    with pytest.raises(InvalidArgument):
        RunConfig(h, 0, 10)
    with pytest.raises(InvalidArgument):
        RunConfig(h, 10, 10, estimator="nope")
    with pytest.raises(InvalidArgument):
        RunConfig(h, 10, 10, estimator="dirichlet")
    with pytest.raises(InvalidArgument):
        RunConfig(h, 10, 10, chi_list=(-1.0,))
    with pytest.raises(InvalidArgument):
        RunConfig(h, 10, 10, reduction="chaotic")
    assert RunConfig(h, 10, 10).to_dict()["geometry"]["kind"] == "halfspace"


def _square(block, count):
    rng = np.random.default_rng(block)
    return EstimatorAccumulator.from_samples(rng.random(count))


def test_run_blocks_partition_invariance():
    a = run_blocks(_square, (), 1000, 64, workers=1)
    b = run_blocks(_square, (), 1000, 64, workers=3)
    assert a.count == 1000
    assert a.mean == b.mean and a.m2 == b.m2


def test_frozen_cp_estimate():
    r = estimate_cp(RunConfig(HalfSpace(0.0, 1.0), 64, 8192, seed=7))
    assert r.estimate == pytest.approx(-0.00016977319195396993, rel=1e-12)
    assert r.std_error == pytest.approx(6.7915088345807366e-06, rel=1e-10)
    assert r.n_paths_used == 8192


def test_frozen_casimir_estimate():
    r = estimate_casimir(RunConfig(Gap(0.0, 1.0, 1.0, 1.0), 64, 8192, seed=7))
    assert r.estimate == pytest.approx(-4.5317771735903074e-05, rel=1e-12)


def test_zero_chi_gives_zero():
    r = estimate_cp(RunConfig(HalfSpace(0.0, 0.0), 32, 2000))
    assert r.estimate == 0.0 and r.std_error == 0.0
    r = estimate_casimir(RunConfig(Gap(0.0, 1.0, 0.0, 0.0), 32, 2000))
    assert r.estimate == 0.0


def test_cp_agrees_with_oracle():
    rs = sweep_cp(RunConfig(HalfSpace(0.0, 1.0), 256, 60_000, seed=3, chi_list=(1.0, 10.0)))
    for r in rs:
        assert abs(r.normalized - float(an.eta_te(r.chi))) < 3.5 * r.normalized_error


def test_embedded_sign():
    r = estimate_cp(RunConfig(HalfSpace(0.0, 1.0), 256, 40_000, seed=4), mode="embedded")
    assert r.estimate > 0
    assert abs(r.normalized - float(an.eta_te_prime(1.0))) < 3.5 * r.normalized_error


def test_casimir_agrees_with_oracle():
    r = estimate_casimir(RunConfig(Gap(0.0, 1.0, 1.0, 1.0), 256, 60_000, seed=5))
    assert abs(r.normalized - float(an.gamma_te(1.0, 1.0))) < 3.5 * r.normalized_error


def test_dirichlet_biased_below():
    cfg = RunConfig(HalfSpace(0.0, math.inf), 128, 40_000, seed=6)
    closed = estimate_cp_dirichlet_closed(cfg)
    assert closed.normalized < 1 / 6
    trap = estimate_cp(cfg)
    assert trap.normalized == pytest.approx(closed.normalized, rel=0.05)
    cas = sweep_casimir(RunConfig(Gap(0.0, 1.0, math.inf, math.inf), 128, 40_000, estimator="dirichlet", seed=6))[0]
    assert cas.normalized < 0.5


def test_units_scale_estimate():
    cfg = RunConfig(HalfSpace(0.0, 1.0), 32, 4096, seed=1)
    base = estimate_cp(cfg)
    scaled = estimate_cp(cfg, PhysicalConstants(hbar=2.0, alpha0=3.0))
    assert scaled.estimate == pytest.approx(6.0 * base.estimate, rel=1e-12)
    assert scaled.normalized == pytest.approx(base.normalized, rel=1e-12)


def test_distance_scaling():
    a = estimate_cp(RunConfig(HalfSpace(0.0, 1.0), 32, 4096, seed=1))
    b = estimate_cp(RunConfig(HalfSpace(0.0, 1.0), 32, 4096, seed=1, distance=2.0))
    assert b.estimate == pytest.approx(a.estimate / 16, rel=1e-10)


def test_estimator_mismatch_rejected():
    with pytest.raises(InvalidArgument):
        estimate_casimir(RunConfig(HalfSpace(0.0, 1.0), 32, 100))
    with pytest.raises(InvalidArgument):
        estimate_cp(RunConfig(Gap(0.0, 1.0, 1.0, 1.0), 32, 100))
    with pytest.raises(InvalidArgument):
        estimate_cp(RunConfig(HalfSpace(0.0, math.inf), 32, 100), mode="embedded")


def test_fit_difference_slope_recovers_power():
    n = np.array([32, 64, 128, 256, 512])
    diff = 3.0 * (n**-1.5 - 512.0**-1.5)
    p, perr, C = fit_difference_slope(n, diff, np.full(n.size, 1e-6), 512)
    assert p == pytest.approx(-1.5, abs=1e-6)
    assert C == pytest.approx(3.0, rel=1e-5)


def test_convergence_sweep_shape():
    table = convergence_sweep(RunConfig(HalfSpace(0.0, 1.0), 64, 4096, seed=2), [16, 32, 64], [1.0, math.inf], ("trapezoid", "dirichlet"))
    assert len(table.rows) == 2 * 2 * 3 - 3  # dirichlet only at chi = inf
    finest = [r for r in table.rows if r.n_steps == 64]
    assert all(r.diff_to_finest == 0.0 for r in finest)
    assert ("trapezoid", 1.0) in table.slopes
