"""Monte-Carlo estimation of Casimir-Polder potentials and Casimir energies.

Each path gets one proper-time draw from the tail density
p(T) = (D/2) T0^{D/2} / T^{1+D/2} above its first-touch time T0, so the
weight T^{-1-D/2}/p(T) depends on T0 only. Casimir runs also draw the source
point from a flat-core, x^-4-tail density centred on the gap.

Work is split into blocks of ``block_size`` paths; block b uses the random
stream (seed, b) and yields its own accumulator. Ordered reduction merges
block accumulators in a fixed tree, so results do not depend on the number
of workers.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import analytic
from ._kernels import occupation_rows, row_extremes
from .bridges import RngStreamSpec, bridge_block
from .errors import InvalidArgument
from .media import (
    Gap,
    HalfSpace,
    PhysicalConstants,
    casimir_integrand_from_fractions,
    cp_integrand_from_fraction,
    first_touch_times,
    is_dirichlet,
)
from .stats import EstimatorAccumulator, merge, tree_merge

__all__ = [
    "ESTIMATORS",
    "RunConfig",
    "RunResult",
    "SweepRow",
    "ConvergenceTable",
    "sample_T",
    "sample_x0",
    "cp_prefactor",
    "casimir_prefactor",
    "estimate_cp",
    "sweep_cp",
    "estimate_cp_dirichlet_closed",
    "estimate_casimir",
    "sweep_casimir",
    "run_blocks",
    "convergence_sweep",
    "fit_difference_slope",
]

ESTIMATORS = ("trapezoid", "interpolation", "dirichlet", "mgf_segment", "sojourn_sample")


# ---------------------------------------------------------------------------
# importance samplers


def sample_T(T0, D, u):
    """Proper time above T0 and its Monte-Carlo weight [(D/2) T0^{D/2}]^{-1}.

    Vectorized. Paths with T0 = inf get T = inf and weight 0.
    """
    T0 = np.asarray(T0, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(~(T0 > 0)):
        raise InvalidArgument("T0 must be positive")
    if np.any((u < 0) | (u >= 1)):
        raise InvalidArgument("u must lie in [0, 1)")
    finite = np.isfinite(T0)
    safe = np.where(finite, T0, 1.0)
    T = np.where(finite, safe * (1.0 - u) ** (-2.0 / D), np.inf)
    w = np.where(finite, 1.0 / (0.5 * D * safe ** (0.5 * D)), 0.0)
    if T.ndim == 0:
        return float(T), float(w)
    return T, w


def sample_x0(d0, u, center: float = 0.0):
    """Source point from p(x) = (3 d0^3/8) min(d0^-4, x^-4) about ``center``.

    Returns (x0, 1/p(x0)); vectorized in ``u``.
    """
    if not d0 > 0:
        raise InvalidArgument("d0 must be positive")
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u >= 1)):
        raise InvalidArgument("u must lie in [0, 1)")
    with np.errstate(divide="ignore"):
        lower = -d0 * (8.0 * u) ** (-1.0 / 3.0)
        upper = d0 * (8.0 * (1.0 - u)) ** (-1.0 / 3.0)
    core = d0 * (8.0 * u - 4.0) / 3.0
    x = np.where(u < 0.125, lower, np.where(u <= 0.875, core, upper))
    ax = np.abs(x)
    with np.errstate(over="ignore"):
        w = np.where(ax < d0, 8.0 * d0 / 3.0, 8.0 * ax**4 / (3.0 * d0**3))
    x = x + center
    if x.ndim == 0:
        return float(x), float(w)
    return x, w


def cp_prefactor(constants: PhysicalConstants, D: int) -> float:
    k = constants
    return k.hbar * k.c * k.alpha0 / (4.0 * (2.0 * math.pi) ** (D / 2) * k.eps0)


def casimir_prefactor(constants: PhysicalConstants, D: int) -> float:
    # positive: the renormalized integrand is negative for attracting bodies
    return constants.hbar * constants.c / (2.0 * (2.0 * math.pi) ** (D / 2))


# ---------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class RunConfig:
    """One Monte-Carlo run.

    ``geometry`` is a HalfSpace for CP runs (the atom sits ``distance`` away
    from its boundary) or a Gap for Casimir runs. ``chi_list`` evaluates
    several susceptibilities on the same paths; for a Gap each entry is used
    for both bodies. When empty, the susceptibilities of ``geometry`` are used.
    """

    geometry: object
    n_steps: int
    n_paths: int
    estimator: str = "trapezoid"
    distance: float = 1.0
    d0: Optional[float] = None
    D: int = 4
    seed: int = 0
    chi_list: tuple = ()
    block_size: int = 4096
    workers: int = 1
    reduction: str = "ordered"
    bridge_method: str = "vloop"
    s_nodes: int = 64

    def __post_init__(self):
        for name in ("n_steps", "n_paths", "block_size", "workers", "s_nodes"):
            val = getattr(self, name)
            if isinstance(val, bool) or int(val) != val or val < 1:
                raise InvalidArgument(f"{name} must be a positive integer, got {val!r}")
            object.__setattr__(self, name, int(val))
        if self.estimator not in ESTIMATORS:
            raise InvalidArgument(f"unknown estimator {self.estimator!r}; expected one of {ESTIMATORS}")
        if self.reduction not in ("ordered", "free"):
            raise InvalidArgument("reduction must be 'ordered' or 'free'")
        if int(self.D) != self.D or self.D < 2:
            raise InvalidArgument("D must be an integer >= 2")
        if not self.distance > 0 or not math.isfinite(self.distance):
            raise InvalidArgument("distance must be positive and finite")
        if self.d0 is not None and not self.d0 > 0:
            raise InvalidArgument("d0 must be positive")
        if self.seed < 0 or self.seed >= 2**64:
            raise InvalidArgument("seed must be a 64-bit unsigned integer")
        chis = tuple(float(c) for c in self.chi_list)
        for c in chis:
            if math.isnan(c) or c < 0:
                raise InvalidArgument(f"susceptibilities must be >= 0 or inf, got {c!r}")
        object.__setattr__(self, "chi_list", chis)
        if not isinstance(self.geometry, (HalfSpace, Gap)):
            raise InvalidArgument(f"Monte-Carlo runs need a HalfSpace or Gap geometry, got {type(self.geometry).__name__}")
        if self.estimator == "dirichlet" and not all(math.isinf(c) for c in self.chis()):
            raise InvalidArgument("the dirichlet estimator needs chi = inf markers only")

    def chis(self) -> tuple:
        if self.chi_list:
            return self.chi_list
        g = self.geometry
        return (g.chi,) if isinstance(g, HalfSpace) else (g.chi1,)

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "geometry"}
        out["geometry"] = self.geometry.to_dict()
        out["chi_list"] = list(self.chi_list)
        return out


@dataclass(frozen=True)
class RunResult:
    """Estimate with its standard error and the perfect-conductor normalization."""

    estimate: float
    std_error: float
    n_paths_used: int
    normalized: float
    normalized_error: float
    chi: object
    metadata: dict = field(default_factory=dict, compare=False)


# ---------------------------------------------------------------------------
# block runner


def _block_counts(n_paths, block_size):
    n_blocks = -(-n_paths // block_size)
    return [min(block_size, n_paths - b * block_size) for b in range(n_blocks)]


def _run_range(fn, args, lo, hi, counts):
    return [(b, fn(*args, b, counts[b])) for b in range(lo, hi)]


def run_blocks(fn, args, n_paths, block_size, workers=1, reduction="ordered") -> EstimatorAccumulator:
    """Evaluate ``fn(*args, block_index, count)`` for every block and reduce.

    ``fn`` must be a module-level function returning an EstimatorAccumulator.
    """
    counts = _block_counts(n_paths, block_size)
    n_blocks = len(counts)
    workers = max(1, min(int(workers), n_blocks))
    if workers == 1:
        parts = [fn(*args, b, counts[b]) for b in range(n_blocks)]
        return tree_merge(parts)
    per = -(-n_blocks // workers)
    ranges = [(lo, min(lo + per, n_blocks)) for lo in range(0, n_blocks, per)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(_run_range, fn, args, lo, hi, counts) for lo, hi in ranges]
        if reduction == "free":
            acc = EstimatorAccumulator()
            for fut in as_completed(futs):
                for _, part in fut.result():
                    acc = merge(acc, part)
            return acc
        parts = {}
        for fut in futs:
            parts.update(dict(fut.result()))
    return tree_merge(parts[b] for b in range(n_blocks))


def _draw_block(config, block, count, n_uniform):
    gen = RngStreamSpec(config.seed, block).generator()
    b = bridge_block(config.n_steps, count, gen, method=config.bridge_method)
    u = gen.random((count, n_uniform))
    return b, u, gen


# ---------------------------------------------------------------------------
# Casimir-Polder


def _atom_position(geom: HalfSpace, distance, embedded):
    return geom.boundary + (geom.side if embedded else -geom.side) * distance


def _cp_block(config, embedded, block, count):
    geom = config.geometry
    b, u, gen = _draw_block(config, block, count, 1)
    x0 = _atom_position(geom, config.distance, embedded)
    lo, hi = row_extremes(b, 1)
    accelerated_run = config.estimator in ("mgf_segment", "sojourn_sample")
    if accelerated_run:
        from . import accelerated

        margin = accelerated.reach_margin(config.n_steps)
        lo, hi = lo - margin, hi + margin
    T0 = first_touch_times(lo, hi, x0, geom)
    chis = config.chis()
    if config.estimator == "dirichlet":
        vals = np.where(np.isfinite(T0), -(2.0 / config.D) * np.where(np.isfinite(T0), T0, 1.0) ** (-0.5 * config.D), 0.0)
        return EstimatorAccumulator.from_samples(np.repeat(vals[:, None], len(chis), axis=1))
    T, wT = sample_T(T0, config.D, u[:, 0])
    if accelerated_run:
        vals = accelerated.cp_block_values(config, embedded, b, x0, T, gen)
        return EstimatorAccumulator.from_samples(vals * wT[:, None])
    with np.errstate(divide="ignore", invalid="ignore"):
        thresh = np.where(np.isfinite(T), (geom.boundary - x0) / np.sqrt(T), np.inf)
    trap, interp = occupation_rows(b, thresh, geom.side, 1)
    f = trap if config.estimator == "trapezoid" else interp
    cols = [np.where(wT > 0, cp_integrand_from_fraction(c, f, embedded), 0.0) * wT for c in chis]
    return EstimatorAccumulator.from_samples(np.stack(cols, axis=1))


def _cp_result(config, constants, embedded, acc, chi, col, wall):
    pref = cp_prefactor(constants, config.D)
    est = pref * float(np.atleast_1d(acc.mean)[col])
    err = pref * float(np.atleast_1d(acc.std_error)[col])
    ref = analytic.cp_reference_magnitude(config.distance, constants)
    sign = 1.0 if embedded else -1.0
    meta = {"config": config.to_dict(), "mode": "embedded" if embedded else "vacuum", "wall_time": wall}
    return RunResult(est, err, acc.count, sign * est / ref, err / ref, chi, meta)


def _check_cp(config, mode):
    if mode not in ("vacuum", "embedded"):
        raise InvalidArgument("mode must be 'vacuum' or 'embedded'")
    if not isinstance(config.geometry, HalfSpace):
        raise InvalidArgument("Casimir-Polder runs need a HalfSpace geometry")
    if mode == "embedded" and any(is_dirichlet(c) for c in config.chis()):
        raise InvalidArgument("an embedded atom needs a finite susceptibility")
    return mode == "embedded"


def sweep_cp(config: RunConfig, constants: PhysicalConstants = PhysicalConstants(), mode: str = "vacuum"):
    """One RunResult per susceptibility, all from the same paths."""
    embedded = _check_cp(config, mode)
    if config.estimator in ("mgf_segment", "sojourn_sample"):
        from . import accelerated

        accelerated.prepare(config)
    t = time.perf_counter()
    acc = run_blocks(_cp_block, (config, embedded), config.n_paths, config.block_size, config.workers, config.reduction)
    wall = time.perf_counter() - t
    return [_cp_result(config, constants, embedded, acc, c, i, wall) for i, c in enumerate(config.chis())]


def estimate_cp(config: RunConfig, constants: PhysicalConstants = PhysicalConstants(), mode: str = "vacuum") -> RunResult:
    """Casimir-Polder potential for an atom facing (or inside) a half-space."""
    return sweep_cp(config, constants, mode)[0]


def estimate_cp_dirichlet_closed(config: RunConfig, constants: PhysicalConstants = PhysicalConstants()) -> RunResult:
    """Dirichlet-limit CP potential with the proper-time integral done per path."""
    geom = config.geometry
    if not isinstance(geom, HalfSpace) or not is_dirichlet(geom.chi):
        raise InvalidArgument("the closed Dirichlet estimator needs a HalfSpace with chi = inf")
    return estimate_cp(replace(config, estimator="dirichlet", chi_list=()), constants, "vacuum")


# ---------------------------------------------------------------------------
# Casimir energy


def _gap_for(geom: Gap, chi):
    return geom if chi is None else replace(geom, chi1=chi, chi2=chi)


def _x0_eps(chi, inside):
    """One-body permittivity at the source point."""
    if is_dirichlet(chi):
        return np.where(inside, np.inf, 1.0)
    return np.where(inside, 1.0 + chi, 1.0)


def _casimir_values(chi1, chi2, f1, f2, in1, in2):
    e1 = _x0_eps(chi1, in1)
    e2 = _x0_eps(chi2, in2)
    out = np.empty(f1.shape)
    for mask in (in1, in2, ~(in1 | in2)):
        if np.any(mask):
            out[mask] = casimir_integrand_from_fractions(chi1, chi2, f1[mask], f2[mask], float(e1[mask][0]), float(e2[mask][0]))
    return out


def _casimir_block(config, d0, block, count):
    geom = config.geometry
    b, u, _ = _draw_block(config, block, count, 2)
    x0, wx = sample_x0(d0, u[:, 0], center=0.5 * (geom.d1 + geom.d2))
    lo, hi = row_extremes(b, 1)
    T0 = first_touch_times(lo, hi, x0, geom)
    chis = config.chi_list or ((geom.chi1, geom.chi2),)
    pairs = [c if isinstance(c, tuple) else (c, c) for c in chis]
    D = config.D
    if config.estimator == "dirichlet":
        ok = np.isfinite(T0)
        v = np.where(ok, -(2.0 / D) * np.where(ok, T0, 1.0) ** (-0.5 * D), 0.0) * np.where(ok, wx, 0.0)
        return EstimatorAccumulator.from_samples(np.repeat(v[:, None], len(pairs), axis=1))
    if config.estimator not in ("trapezoid", "interpolation"):
        raise InvalidArgument(f"estimator {config.estimator!r} is not available for Casimir runs")
    T, wT = sample_T(T0, D, u[:, 1])
    ok = wT > 0
    sq = np.sqrt(np.where(ok, T, 1.0))
    t1 = np.where(ok, (geom.d1 - x0) / sq, np.inf)
    t2 = np.where(ok, (geom.d2 - x0) / sq, np.inf)
    a1, i1 = occupation_rows(b, t1, -1, 1)
    a2, i2 = occupation_rows(b, t2, 1, 1)
    f1, f2 = (a1, a2) if config.estimator == "trapezoid" else (i1, i2)
    in1 = x0 <= geom.d1
    in2 = x0 >= geom.d2
    w = np.where(ok, wT * wx, 0.0)
    cols = [np.where(ok, _casimir_values(c1, c2, f1, f2, in1, in2), 0.0) * w for c1, c2 in pairs]
    return EstimatorAccumulator.from_samples(np.stack(cols, axis=1))


def sweep_casimir(config: RunConfig, constants: PhysicalConstants = PhysicalConstants()):
    geom = config.geometry
    if not isinstance(geom, Gap):
        raise InvalidArgument("Casimir runs need a Gap geometry")
    d0 = config.d0 if config.d0 is not None else geom.width
    t = time.perf_counter()
    acc = run_blocks(_casimir_block, (config, d0), config.n_paths, config.block_size, config.workers, config.reduction)
    wall = time.perf_counter() - t
    pref = casimir_prefactor(constants, config.D)
    ref = analytic.casimir_reference_magnitude(geom.width, constants)
    chis = config.chi_list or ((geom.chi1, geom.chi2),)
    out = []
    for i, c in enumerate(chis):
        est = pref * float(np.atleast_1d(acc.mean)[i])
        err = pref * float(np.atleast_1d(acc.std_error)[i])
        meta = {"config": config.to_dict(), "d0": d0, "wall_time": wall}
        out.append(RunResult(est, err, acc.count, -est / ref, err / ref, c, meta))
    return out


def estimate_casimir(config: RunConfig, constants: PhysicalConstants = PhysicalConstants()) -> RunResult:
    """TE Casimir energy per unit area between two half-spaces."""
    return sweep_casimir(config, constants)[0]


# ---------------------------------------------------------------------------
# convergence with nested common random numbers


@dataclass(frozen=True)
class SweepRow:
    estimator: str
    chi: float
    n_steps: int
    normalized: float
    std_error: float
    relative_error: float
    diff_to_finest: float
    diff_std_error: float


@dataclass
class ConvergenceTable:
    rows: list
    oracle: dict
    n_paths: int
    slopes: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def select(self, estimator, chi):
        return [r for r in self.rows if r.estimator == estimator and (r.chi == chi or (math.isinf(chi) and math.isinf(r.chi)))]


def _nested_block(config, n_list, chis, estimators, embedded, block, count):
    geom = config.geometry
    n_max = n_list[-1]
    b, u, _ = _draw_block(replace(config, n_steps=n_max), block, count, 1)
    x0 = _atom_position(geom, config.distance, embedded)
    D = config.D
    lo, hi = row_extremes(b, 1)
    T0 = first_touch_times(lo, hi, x0, geom)
    T, wT = sample_T(T0, D, u[:, 0])
    ok = wT > 0
    thresh = np.where(ok, (geom.boundary - x0) / np.sqrt(np.where(ok, T, 1.0)), np.inf)
    cols = []
    for n in n_list:
        stride = n_max // n
        trap, interp = occupation_rows(b, thresh, geom.side, stride)
        for est in estimators:
            if est == "dirichlet":
                lo_n, hi_n = row_extremes(b, stride)
                t0n = first_touch_times(lo_n, hi_n, x0, geom)
                fin = np.isfinite(t0n)
                cols.append(np.where(fin, -(2.0 / D) * np.where(fin, t0n, 1.0) ** (-0.5 * D), 0.0))
                continue
            f = trap if est == "trapezoid" else interp
            for c in chis:
                cols.append(np.where(ok, cp_integrand_from_fraction(c, f, embedded), 0.0) * wT)
    vals = np.stack(cols, axis=1)
    width = vals.shape[1] // len(n_list)
    diffs = vals - np.tile(vals[:, -width:], len(n_list))
    return EstimatorAccumulator.from_samples(np.concatenate([vals, diffs], axis=1))


def _nested_casimir_block(config, n_list, chis, estimators, d0, block, count):
    geom = config.geometry
    n_max = n_list[-1]
    b, u, _ = _draw_block(replace(config, n_steps=n_max), block, count, 2)
    x0, wx = sample_x0(d0, u[:, 0], center=0.5 * (geom.d1 + geom.d2))
    D = config.D
    lo, hi = row_extremes(b, 1)
    T0 = first_touch_times(lo, hi, x0, geom)
    T, wT = sample_T(T0, D, u[:, 1])
    ok = wT > 0
    w = np.where(ok, wT * wx, 0.0)
    sq = np.sqrt(np.where(ok, T, 1.0))
    t1 = np.where(ok, (geom.d1 - x0) / sq, np.inf)
    t2 = np.where(ok, (geom.d2 - x0) / sq, np.inf)
    in1 = x0 <= geom.d1
    in2 = x0 >= geom.d2
    cols = []
    for n in n_list:
        stride = n_max // n
        a1, i1 = occupation_rows(b, t1, -1, stride)
        a2, i2 = occupation_rows(b, t2, 1, stride)
        for est in estimators:
            if est == "dirichlet":
                lo_n, hi_n = row_extremes(b, stride)
                t0n = first_touch_times(lo_n, hi_n, x0, geom)
                fin = np.isfinite(t0n)
                cols.append(np.where(fin, -(2.0 / D) * np.where(fin, t0n, 1.0) ** (-0.5 * D) * np.where(fin, wx, 0.0), 0.0))
                continue
            f1, f2 = (a1, a2) if est == "trapezoid" else (i1, i2)
            for c in chis:
                cols.append(np.where(ok, _casimir_values(c, c, f1, f2, in1, in2), 0.0) * w)
    vals = np.stack(cols, axis=1)
    width = vals.shape[1] // len(n_list)
    diffs = vals - np.tile(vals[:, -width:], len(n_list))
    return EstimatorAccumulator.from_samples(np.concatenate([vals, diffs], axis=1))


def fit_difference_slope(n, diff, err, n_max):
    """Fit diff(N) = C (N^p - n_max^p) by weighted least squares; returns (p, p_err, C)."""
    from scipy.optimize import curve_fit

    n = np.asarray(n, dtype=float)
    diff = np.asarray(diff, dtype=float)
    err = np.asarray(err, dtype=float)
    keep = n < n_max
    n, diff, err = n[keep], diff[keep], err[keep]
    if n.size < 2:
        raise InvalidArgument("need at least two levels below the finest one")
    # start from the slope of the two coarsest levels
    p0 = math.log(abs(diff[1]) / abs(diff[0])) / math.log(n[1] / n[0]) if diff[0] * diff[1] > 0 else -1.0
    p0 = min(max(p0, -3.0), -0.1)
    c0 = diff[0] / (n[0] ** p0 - n_max**p0)

    def model(x, c, p):
        return c * (x**p - n_max**p)

    popt, pcov = curve_fit(model, n, diff, p0=(c0, p0), sigma=np.maximum(err, 1e-300), absolute_sigma=True, maxfev=20000)
    return float(popt[1]), float(math.sqrt(max(pcov[1, 1], 0.0))), float(popt[0])


def convergence_sweep(
    config: RunConfig,
    n_list,
    chi_list,
    estimators=("trapezoid", "interpolation"),
    mode: str = "vacuum",
    constants: PhysicalConstants = PhysicalConstants(),
) -> ConvergenceTable:
    """Relative error against the analytic oracle versus N on nested paths.

    Bridges are generated at the largest N and every coarser level reads
    every (N_max/N)-th node of the same bridge with the same proper time,
    so level differences carry little noise. ``dirichlet`` in
    ``estimators`` adds the closed-form Dirichlet column.
    """
    casimir = isinstance(config.geometry, Gap)
    embedded = False if casimir else _check_cp(config, mode)
    n_list = sorted(int(n) for n in n_list)
    n_max = n_list[-1]
    if any(n_max % n for n in n_list):
        raise InvalidArgument("every N must divide the largest N")
    chis = tuple(float(c) for c in chi_list)
    estimators = tuple(estimators)
    for e in estimators:
        if e not in ("trapezoid", "interpolation", "dirichlet"):
            raise InvalidArgument(f"convergence sweeps support trapezoid, interpolation and dirichlet, not {e!r}")
    t = time.perf_counter()
    if casimir:
        d0 = config.d0 if config.d0 is not None else config.geometry.width
        fn, args = _nested_casimir_block, (config, tuple(n_list), chis, estimators, d0)
        scale = -casimir_prefactor(constants, config.D) / analytic.casimir_reference_magnitude(config.geometry.width, constants)
    else:
        fn, args = _nested_block, (config, tuple(n_list), chis, estimators, embedded)
        sign = 1.0 if embedded else -1.0
        scale = sign * cp_prefactor(constants, config.D) / analytic.cp_reference_magnitude(config.distance, constants)
    acc = run_blocks(fn, args, config.n_paths, config.block_size, config.workers, config.reduction)
    wall = time.perf_counter() - t
    labels = []
    for est in estimators:
        labels += [(est, math.inf)] if est == "dirichlet" else [(est, c) for c in chis]
    width = len(labels)
    mean = np.atleast_1d(acc.mean)
    se = np.atleast_1d(acc.std_error)
    half = mean.size // 2
    oracle = {}
    for est, c in labels:
        if c not in oracle:
            if casimir:
                oracle[c] = 0.5 if math.isinf(c) else float(analytic.gamma_te(c, c))
            elif math.isinf(c):
                oracle[c] = 1.0 / 6.0
            else:
                oracle[c] = float(analytic.eta_te_prime(c) if embedded else analytic.eta_te(c))
    rows = []
    for li, n in enumerate(n_list):
        for j, (est, c) in enumerate(labels):
            k = li * width + j
            val = scale * mean[k]
            rows.append(
                SweepRow(
                    est, c, n, val, abs(scale) * se[k],
                    val / oracle[c] - 1.0 if oracle[c] else math.nan,
                    scale * mean[half + k], abs(scale) * se[half + k],
                )
            )
    table = ConvergenceTable(rows, oracle, acc.count, wall_time=wall)
    for est, c in labels:
        sel = table.select(est, c)
        try:
            p, perr, _ = fit_difference_slope(
                [r.n_steps for r in sel], [r.diff_to_finest for r in sel], [r.diff_std_error for r in sel], n_max
            )
        except (InvalidArgument, RuntimeError, ValueError, ZeroDivisionError):
            p, perr = math.nan, math.nan
        table.slopes[(est, c)] = (p, perr)
    return table
