"""Finite-temperature, dispersive worldline sums.

Each Matsubara mode s_n = 2 pi n / (hbar beta) contributes a path average
of exp(-s_n^2 <eps(is_n)> T / 2) (natural units). Modes are renormalized
one at a time with the pattern of the zero-temperature integrands: the
path-averaged exponential minus the same exponential with the permittivity
at the source point. This per-mode subtraction is a construction of this
package; the bare mode sums are divergent.

All modes of one path share its bridge, proper time and source point, so
their sum inherits the variance of the zero-temperature estimator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_genlaguerre

from ._kernels import occupation_rows, row_extremes
from .engine import RunConfig, _atom_position, _draw_block, run_blocks, sample_T, sample_x0
from .errors import InvalidArgument
from .media import Gap, HalfSpace, PhysicalConstants, first_touch_times
from .stats import EstimatorAccumulator

__all__ = [
    "Constant",
    "Lorentz",
    "ThermalConfig",
    "ThermalResult",
    "matsubara_frequencies",
    "default_n_max",
    "cp_thermal",
    "free_energy_thermal",
    "free_energy_zero_T",
    "TruncationWarning",
]


class TruncationWarning(UserWarning):
    """The Matsubara tail bound exceeds the requested tolerance."""


@dataclass(frozen=True)
class Constant:
    """Frequency-independent susceptibility."""

    chi0: float

    def __post_init__(self):
        if not (self.chi0 >= 0 and math.isfinite(self.chi0)):
            raise InvalidArgument("chi0 must be finite and non-negative")

    def chi(self, s):
        return np.full(np.shape(s), float(self.chi0)) if np.ndim(s) else float(self.chi0)

    def to_dict(self):
        return {"kind": "constant", "chi0": self.chi0}


@dataclass(frozen=True)
class Lorentz:
    """Single undamped oscillator: chi(is) = chi0 w0^2 / (w0^2 + s^2)."""

    chi0: float
    omega0: float

    def __post_init__(self):
        if not (self.chi0 >= 0 and math.isfinite(self.chi0)):
            raise InvalidArgument("chi0 must be finite and non-negative")
        if not self.omega0 > 0:
            raise InvalidArgument("omega0 must be positive")

    def chi(self, s):
        s = np.asarray(s, dtype=float)
        if math.isinf(self.omega0):
            out = np.full(s.shape, float(self.chi0))
        else:
            w2 = self.omega0 * self.omega0
            out = self.chi0 * w2 / (w2 + s * s)
        return out if out.ndim else float(out)

    def to_dict(self):
        return {"kind": "lorentz", "chi0": self.chi0, "omega0": self.omega0}


@dataclass(frozen=True)
class ThermalConfig:
    beta: float
    n_max: int
    constants: PhysicalConstants = PhysicalConstants()
    tolerance: float = 1e-4

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise InvalidArgument("beta must be positive and finite")
        if int(self.n_max) != self.n_max or self.n_max < 0:
            raise InvalidArgument("n_max must be a non-negative integer")


@dataclass(frozen=True)
class ThermalResult:
    value: float
    std_error: float
    modes: np.ndarray = field(repr=False)
    mode_errors: np.ndarray = field(repr=False)
    truncation_bound: float
    truncated: bool
    n_paths_used: int


def matsubara_frequencies(tc: ThermalConfig) -> np.ndarray:
    """s_0 .. s_{n_max}."""
    k = tc.constants
    return 2.0 * math.pi * np.arange(tc.n_max + 1) / (k.hbar * tc.beta)


def default_n_max(beta: float, length: float, constants: PhysicalConstants = PhysicalConstants(), rel_tail: float = 1e-8) -> int:
    """Mode count after which modes, damped like exp(-2 s_n length/c), fall below ``rel_tail``."""
    s1 = 2.0 * math.pi / (constants.hbar * beta)
    return int(math.ceil(math.log(1.0 / rel_tail) * constants.c / (2.0 * s1 * length))) + 2


def _primed(n):
    w = np.ones(n)
    w[0] = 0.5
    return w


def _tail_bound(modes, primed_sum):
    """Geometric bound on the omitted modes from the last two retained ones."""
    m = np.abs(modes)
    if m.size < 3:
        return math.inf
    if m[-1] == 0.0:
        return 0.0
    r = m[-1] / m[-2] if m[-2] > 0 else math.inf
    if not r < 1.0:
        return math.inf
    return float(m[-1] * r / (1.0 - r))


# ---------------------------------------------------------------------------
# Casimir-Polder


def _cp_modes_block(config, dispersion, s, block, count):
    geom = config.geometry
    b, u, _ = _draw_block(config, block, count, 1)
    x0 = _atom_position(geom, config.distance, False)
    lo, hi = row_extremes(b, 1)
    T0 = first_touch_times(lo, hi, x0, geom)
    T, wT = sample_T(T0, config.D, u[:, 0])
    ok = wT > 0
    Ts = np.where(ok, T, 0.0)
    thresh = np.where(ok, (geom.boundary - x0) / np.sqrt(np.where(ok, T, 1.0)), np.inf)
    trap, interp = occupation_rows(b, thresh, geom.side, 1)
    f = trap if config.estimator == "trapezoid" else interp
    chi = np.asarray(dispersion.chi(s), dtype=float)
    half = 0.5 * Ts[:, None] * s[None, :] ** 2
    vals = s[None, :] ** 2 * (np.exp(-half * (1.0 + chi[None, :] * f[:, None])) - np.exp(-half))
    # T^{-(D-1)/2} / p(T) = T^{3/2} * wT for the tail density of the engine
    vals *= (Ts ** 1.5 * wT)[:, None]
    vals = np.where(ok[:, None], vals, 0.0)
    pw = _primed(s.size)
    return EstimatorAccumulator.from_samples(np.concatenate([vals, (vals @ pw)[:, None]], axis=1))


def _split(acc):
    mean = np.atleast_1d(acc.mean)
    m2 = np.atleast_1d(acc.m2)
    modes = EstimatorAccumulator(acc.count, mean[:-1], m2[:-1])
    total = EstimatorAccumulator(acc.count, mean[-1], m2[-1])
    return modes, total


def _result(acc, scale, tc):
    modes, total = _split(acc)
    mean = np.atleast_1d(modes.mean) * scale
    err = np.atleast_1d(modes.std_error) * abs(scale)
    value = float(total.mean * scale)
    bound = _tail_bound(mean, value)
    truncated = value != 0.0 and not bound <= tc.tolerance * abs(value)
    if truncated:
        warnings.warn(f"Matsubara tail bound {bound:.3g} exceeds {tc.tolerance:g} of the sum", TruncationWarning, stacklevel=3)
    return ThermalResult(value, float(total.std_error * abs(scale)), mean, err, bound, truncated, acc.count)


def _run_config(geometry, n_steps, n_paths, seed, distance=1.0, **kw):
    return RunConfig(geometry, n_steps, n_paths, distance=distance, seed=seed, **kw)


def cp_thermal(
    geometry: HalfSpace,
    dispersion,
    tc: ThermalConfig,
    d: float,
    n_steps: int = 1000,
    n_paths: int = 100_000,
    seed: int = 0,
    estimator: str = "trapezoid",
    workers: int = 1,
    reduction: str = "ordered",
    block_size: int = 4096,
) -> ThermalResult:
    """Thermal Casimir-Polder potential of a vacuum-side atom at distance d.

    The primed Matsubara sum runs over n = 0..n_max; ``truncation_bound``
    estimates the omitted tail. The atomic polarizability is taken as
    frequency independent (``constants.alpha0``).
    """
    if not isinstance(geometry, HalfSpace):
        raise InvalidArgument("thermal Casimir-Polder runs need a HalfSpace geometry")
    if estimator not in ("trapezoid", "interpolation"):
        raise InvalidArgument("thermal runs support the trapezoid and interpolation estimators")
    config = _run_config(geometry, n_steps, n_paths, seed, distance=d, estimator=estimator,
                         workers=workers, reduction=reduction, block_size=block_size)
    k = tc.constants
    s = matsubara_frequencies(tc) / k.c
    acc = run_blocks(_cp_modes_block, (config, dispersion, s), n_paths, block_size, workers, reduction)
    D = config.D
    scale = k.alpha0 / (2.0 * (2.0 * math.pi) ** ((D - 1) / 2) * k.eps0 * tc.beta)
    return _result(acc, scale, tc)


# ---------------------------------------------------------------------------
# Casimir free energy


def _gap_eps(chi1, chi2, f1, f2, in1, in2):
    """Path-averaged and source-point permittivities for the three configurations."""
    g12 = 1.0 + chi1 * f1 + chi2 * f2
    g1 = 1.0 + chi1 * f1
    g2 = 1.0 + chi2 * f2
    h1 = np.where(in1, 1.0 + chi1, 1.0)
    h2 = np.where(in2, 1.0 + chi2, 1.0)
    h12 = h1 + h2 - 1.0
    return (g12, g1, g2), (h12, h1, h2)


def _gap_paths(config, d0, block, count):
    geom = config.geometry
    b, u, _ = _draw_block(config, block, count, 2)
    x0, wx = sample_x0(d0, u[:, 0], center=0.5 * (geom.d1 + geom.d2))
    lo, hi = row_extremes(b, 1)
    T0 = first_touch_times(lo, hi, x0, geom)
    T, wT = sample_T(T0, config.D, u[:, 1])
    ok = wT > 0
    sq = np.sqrt(np.where(ok, T, 1.0))
    a1, i1 = occupation_rows(b, np.where(ok, (geom.d1 - x0) / sq, np.inf), -1, 1)
    a2, i2 = occupation_rows(b, np.where(ok, (geom.d2 - x0) / sq, np.inf), 1, 1)
    f1, f2 = (a1, a2) if config.estimator == "trapezoid" else (i1, i2)
    return x0, np.where(ok, T, 0.0), np.where(ok, wT * wx, 0.0), f1, f2, ok


def _combine(G, path, point):
    """(G(h12)-G(g12)) - (G(h1)-G(g1)) - (G(h2)-G(g2))."""
    (g12, g1, g2), (h12, h1, h2) = path, point
    return (G(h12) - G(g12)) - (G(h1) - G(g1)) - (G(h2) - G(g2))


def _free_modes_block(config, d0, disp1, disp2, s, block, count):
    geom = config.geometry
    x0, T, w, f1, f2, ok = _gap_paths(config, d0, block, count)
    in1 = (x0 <= geom.d1)[:, None]
    in2 = (x0 >= geom.d2)[:, None]
    c1 = np.asarray(disp1.chi(s), dtype=float)[None, :]
    c2 = np.asarray(disp2.chi(s), dtype=float)[None, :]
    path, point = _gap_eps(c1, c2, f1[:, None], f2[:, None], in1, in2)
    half = 0.5 * T[:, None] * s[None, :] ** 2
    vals = _combine(lambda a: np.exp(-half * a), path, point)
    # T^{-(D+1)/2} / p(T) = T^{1/2} * wT
    vals *= (np.sqrt(T) * w)[:, None]
    vals = np.where(ok[:, None], vals, 0.0)
    pw = _primed(s.size)
    return EstimatorAccumulator.from_samples(np.concatenate([vals, (vals @ pw)[:, None]], axis=1))


def _check_gap(geometry, dispersion, dispersion2):
    if not isinstance(geometry, Gap):
        raise InvalidArgument("free-energy runs need a Gap geometry")
    return dispersion, dispersion if dispersion2 is None else dispersion2


def free_energy_thermal(
    geometry: Gap,
    dispersion,
    tc: ThermalConfig,
    n_steps: int = 1000,
    n_paths: int = 100_000,
    seed: int = 0,
    d0=None,
    dispersion2=None,
    estimator: str = "trapezoid",
    workers: int = 1,
    reduction: str = "ordered",
    block_size: int = 4096,
) -> ThermalResult:
    """Casimir free energy per unit area as a primed Matsubara sum."""
    disp1, disp2 = _check_gap(geometry, dispersion, dispersion2)
    d0 = geometry.width if d0 is None else d0
    config = _run_config(geometry, n_steps, n_paths, seed, estimator=estimator, workers=workers,
                         reduction=reduction, block_size=block_size)
    k = tc.constants
    s = matsubara_frequencies(tc) / k.c
    acc = run_blocks(_free_modes_block, (config, d0, disp1, disp2, s), n_paths, block_size, workers, reduction)
    scale = 1.0 / ((2.0 * math.pi) ** ((config.D - 1) / 2) * tc.beta)
    return _result(acc, scale, tc)


def _free_zero_block(config, d0, disp1, disp2, nodes, weights, block, count):
    geom = config.geometry
    x0, T, w, f1, f2, ok = _gap_paths(config, d0, block, count)
    in1 = (x0 <= geom.d1)[:, None]
    in2 = (x0 >= geom.d2)[:, None]
    Ts = np.where(ok, T, 1.0)[:, None]
    # s = sqrt(2y/T): int ds e^{-s^2 T a/2} g = (2T)^{-1/2} int dy y^{-1/2} e^{-y} e^{-y(a-1)} g
    s = np.sqrt(2.0 * nodes[None, :] / Ts)
    c1 = np.asarray(disp1.chi(s), dtype=float)
    c2 = np.asarray(disp2.chi(s), dtype=float)
    path, point = _gap_eps(c1, c2, f1[:, None], f2[:, None], in1, in2)
    y = nodes[None, :]
    vals = _combine(lambda a: np.exp(-y * (a - 1.0)), path, point) @ weights
    # (2T)^{-1/2} from the substitution times T^{1/2} wT from the T sampling
    vals = np.where(ok, vals * w / math.sqrt(2.0), 0.0)
    return EstimatorAccumulator.from_samples(vals[:, None])


def free_energy_zero_T(
    geometry: Gap,
    dispersion,
    constants: PhysicalConstants = PhysicalConstants(),
    n_steps: int = 1000,
    n_paths: int = 100_000,
    seed: int = 0,
    d0=None,
    dispersion2=None,
    s_nodes: int = 64,
    estimator: str = "trapezoid",
    workers: int = 1,
    reduction: str = "ordered",
    block_size: int = 4096,
):
    """Zero-temperature Casimir energy per area with the frequency integral done by quadrature.

    Returns (estimate, std_error). For a Constant dispersion this is the
    dispersion-free Casimir estimate evaluated through a frequency integral.
    """
    disp1, disp2 = _check_gap(geometry, dispersion, dispersion2)
    d0 = geometry.width if d0 is None else d0
    config = _run_config(geometry, n_steps, n_paths, seed, estimator=estimator, workers=workers,
                         reduction=reduction, block_size=block_size)
    nodes, weights = roots_genlaguerre(int(s_nodes), -0.5)
    acc = run_blocks(_free_zero_block, (config, d0, disp1, disp2, nodes, weights), n_paths, block_size, workers, reduction)
    scale = constants.hbar * constants.c / (2.0 * math.pi) ** ((config.D + 1) / 2)
    return float(acc.mean[0] * scale), float(acc.std_error[0] * scale)
