"""Casimir-Polder estimators without finite-N discretization bias.

Both estimators replace the node-sampled path average by exact statistics of
the Brownian bridge between consecutive nodes, so for a single planar
interface the result does not depend on N.

``mgf_segment`` writes the integrand through
    (1 + chi f)^{-3/2} = (2/sqrt(pi)) int_0^inf sqrt(u) e^{-u} e^{-u chi f} du
and averages e^{-u chi f} segment by segment, which turns it into a product
of sojourn MGFs. The u integral uses generalized Gauss-Laguerre nodes
(weight sqrt(u) e^{-u}); the node count is ``RunConfig.s_nodes``.

``sojourn_sample`` instead draws every segment's sojourn time from its exact
conditional law and plugs the total into the usual integrand.

Only half-space geometries are supported: each segment sees one interface.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
from scipy.special import roots_genlaguerre

from .errors import InvalidArgument
from .media import HalfSpace, PhysicalConstants, cp_integrand_from_fraction, is_dirichlet
from .sojourn import GridSpec, MgfTables, SojournTables, build_mgf_tables, build_tables, sample_sojourn_many

__all__ = [
    "SegmentStatistic",
    "s_quadrature",
    "segment_statistics",
    "prepare",
    "reach_margin",
    "cp_block_values",
    "estimate_cp_mgf_segments",
    "estimate_cp_sojourn_sampled",
    "set_sojourn_tables",
]

# Segments whose boundary-touch probability is below this are treated as
# never touching (or, for segments inside, as never leaving).
SKIP_BELOW = 1e-13

# Between nodes a path can reach past its largest node. Proper times are
# sampled above the first touch of the node extremes widened by
# REACH/sqrt(N); below that every segment touches with probability
# < exp(-2 REACH^2) ~ 3e-18.
REACH = 4.5

_MGF_CACHE: dict = {}
_SOJOURN_TABLES: list = []


class SegmentStatistic:
    """Endpoints of one path segment, its duration and the interface position."""

    __slots__ = ("start", "end", "dt", "boundary")

    def __init__(self, start, end, dt, boundary):
        if not dt > 0:
            raise InvalidArgument("segment duration must be positive")
        self.start, self.end, self.dt, self.boundary = float(start), float(end), float(dt), float(boundary)

    @property
    def scaled(self):
        """(v, w) = distances of the two endpoints below the boundary in units of sqrt(dt)."""
        r = math.sqrt(self.dt)
        return (self.boundary - self.start) / r, (self.boundary - self.end) / r


def s_quadrature(n_nodes: int = 64):
    """Nodes and weights for int_0^inf sqrt(u) e^{-u} g(u) du, scaled to sum to 1."""
    x, w = roots_genlaguerre(int(n_nodes), 0.5)
    return x, w * (2.0 / math.sqrt(math.pi))


def segment_statistics(b, thresh, side, n_steps):
    """Scaled endpoint distances (v, w) of every segment, shape (rows, N).

    ``b`` holds standard bridges and ``thresh`` the boundary in bridge units;
    coordinates are flipped for ``side = -1`` so the dielectric is always above.
    """
    y = side * b
    t = (side * np.asarray(thresh, dtype=float))[:, None]
    r = math.sqrt(n_steps)
    return (t - y[:, :-1]) * r, (t - y[:, 1:]) * r


def reach_margin(n_steps: int) -> float:
    """Widening of the node extremes (bridge units) used to bound the proper time."""
    return REACH / math.sqrt(n_steps)


def mgf_tables_for(chi, n_steps, n_nodes) -> MgfTables:
    key = (float(chi), int(n_steps), int(n_nodes))
    tab = _MGF_CACHE.get(key)
    if tab is None:
        x, _ = s_quadrature(n_nodes)
        tab = build_mgf_tables(x * chi / n_steps)
        _MGF_CACHE[key] = tab
    return tab


def set_sojourn_tables(tables: SojournTables) -> None:
    """Install pre-built inverse-CDF tables (otherwise built on first use)."""
    _SOJOURN_TABLES[:] = [tables]


def sojourn_tables() -> SojournTables:
    if not _SOJOURN_TABLES:
        _SOJOURN_TABLES.append(build_tables(GridSpec(), validate=False))
    return _SOJOURN_TABLES[0]


def prepare(config) -> None:
    """Build the tables a run will need, before any worker starts."""
    if not isinstance(config.geometry, HalfSpace):
        raise InvalidArgument("accelerated estimators support HalfSpace geometries only")
    if config.estimator == "mgf_segment":
        for c in config.chis():
            if not is_dirichlet(c) and c > 0:
                mgf_tables_for(c, config.n_steps, config.s_nodes)
    elif config.estimator == "sojourn_sample":
        sojourn_tables()


def _mgf_values(config, embedded, v, w, active):
    n_rows = v.shape[0]
    x, wq = s_quadrature(config.s_nodes)
    with np.errstate(over="ignore"):
        p = np.exp(-2.0 * np.maximum(v * w, 0.0))
    outside = (v >= 0) & (w >= 0)
    inside = (v < 0) & (w < 0)
    far = outside & (p < SKIP_BELOW)
    deep = inside & (p < SKIP_BELOW)
    near = ~(far | deep) & active[:, None]
    n_deep = deep.sum(axis=1)
    rows, cols = np.nonzero(near)
    sv, sw = v[rows, cols], w[rows, cols]
    out = np.zeros((n_rows, len(config.chis())))
    for k, chi in enumerate(config.chis()):
        if chi == 0:
            continue
        if is_dirichlet(chi):
            # M = 1 - P for segments that stay outside, 0 once any part is inside
            miss = np.where(outside, 1.0 - np.where(far, 0.0, p), 0.0)
            out[:, k] = np.where(active, -(1.0 - np.prod(miss, axis=1)), 0.0)
            continue
        tab = mgf_tables_for(chi, config.n_steps, config.s_nodes)
        prod = tab.path_products(sv, sw, rows, n_rows)
        prod *= np.exp(-np.outer(n_deep, tab.S))
        ref = np.exp(-x * chi) if embedded else 1.0
        out[:, k] = np.where(active, (prod - ref) @ wq, 0.0)
    return out


def _sojourn_values(config, embedded, v, w, active, gen):
    n = config.n_steps
    with np.errstate(over="ignore"):
        p = np.exp(-2.0 * np.maximum(v * w, 0.0))
    outside = (v >= 0) & (w >= 0)
    inside = (v < 0) & (w < 0)
    far = outside & (p < SKIP_BELOW)
    deep = inside & (p < SKIP_BELOW)
    near = ~(far | deep) & active[:, None]
    rows, cols = np.nonzero(near)
    u = gen.random(rows.size)
    # bridge units: segment duration 1/N, boundary at 0, endpoints at -v, -w
    dt = 1.0 / n
    r = math.sqrt(dt)
    ts = sample_sojourn_many(sojourn_tables(), -v[rows, cols] * r, -w[rows, cols] * r, dt, 0.0, u)
    frac = deep.sum(axis=1) * dt
    np.add.at(frac, rows, ts)
    out = np.zeros((v.shape[0], len(config.chis())))
    for k, chi in enumerate(config.chis()):
        out[:, k] = np.where(active, cp_integrand_from_fraction(chi, frac, embedded), 0.0)
    return out


def cp_block_values(config, embedded, b, x0, T, gen):
    """Renormalized CP integrand per path and susceptibility, shape (rows, n_chi)."""
    geom = config.geometry
    active = np.isfinite(T)
    thresh = np.where(active, (geom.boundary - x0) / np.sqrt(np.where(active, T, 1.0)), 0.0)
    v, w = segment_statistics(b, thresh, geom.side, config.n_steps)
    if config.estimator == "mgf_segment":
        return _mgf_values(config, embedded, v, w, active)
    if config.estimator == "sojourn_sample":
        return _sojourn_values(config, embedded, v, w, active, gen)
    raise InvalidArgument(f"not an accelerated estimator: {config.estimator!r}")


def estimate_cp_mgf_segments(config, constants: PhysicalConstants = PhysicalConstants(), mode: str = "vacuum"):
    """CP potential with each segment's exponential replaced by its bridge average."""
    from .engine import estimate_cp

    return estimate_cp(replace(config, estimator="mgf_segment"), constants, mode)


def estimate_cp_sojourn_sampled(config, constants: PhysicalConstants = PhysicalConstants(), mode: str = "vacuum"):
    """CP potential with per-segment sojourn times drawn from their exact law."""
    from .engine import estimate_cp

    return estimate_cp(replace(config, estimator="sojourn_sample"), constants, mode)
