"""Discrete Brownian bridges and the worldlines built from them.

A standard bridge is a closed walk B_0 = B_N = 0 of N steps over unit time.
Worldlines are obtained by scaling with the proper time and shifting to the
source point, x_k = x0 + sqrt(T) B_k.

Random numbers come from numpy's PCG64DXSM bit generator, one stream per
(master seed, stream index) pair derived through ``SeedSequence``. Normal
deviates use numpy's ziggurat sampler, which is an exact rejection method
(no tabulation bias in the tails).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import vloop_rows
from .errors import InvalidArgument

__all__ = [
    "RngStreamSpec",
    "StandardBridge",
    "ScaledPath",
    "vloop_from_normals",
    "vloop_recursive",
    "drift_subtracted_from_normals",
    "generate_vloop",
    "generate_drift_subtracted",
    "bridge_block",
    "scale_shift",
    "extremes",
    "dump_bridges",
    "load_bridges",
]


@dataclass(frozen=True)
class RngStreamSpec:
    """Identifies one reproducible random stream.

    Distinct ``(master_seed, stream_index)`` pairs map to statistically
    independent PCG64DXSM streams (2^128 state, spawn-key separation).
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if self.master_seed < 0 or self.stream_index < 0:
            raise InvalidArgument("seed and stream index must be non-negative")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.PCG64DXSM(seq))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStreamSpec):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise InvalidArgument(f"expected RngStreamSpec or numpy Generator, got {type(rng).__name__}")


@dataclass(frozen=True)
class StandardBridge:
    """Closed unit-time walk; ``values`` has shape (n_axes, N+1)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[1] < 2:
            raise InvalidArgument("bridge values must have shape (n_axes, N+1) with N >= 1")
        if np.any(v[:, 0] != 0.0) or np.any(v[:, -1] != 0.0):
            raise InvalidArgument("bridge must be pinned to zero at both ends")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_steps(self) -> int:
        return self.values.shape[1] - 1

    @property
    def n_axes(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ScaledPath:
    """Worldline x_k = x0 + sqrt(T) B_k; ``points`` has shape (n_axes, N+1)."""

    source_point: np.ndarray
    proper_time: float
    points: np.ndarray = field(repr=False)

    @property
    def n_steps(self) -> int:
        return self.points.shape[1] - 1


def _vloop_coefficients(n_steps: int) -> np.ndarray:
    # Unrolling B_k = sqrt(c_k/N) z_k + c_k B_{k-1} gives
    # B_k = (N-k) * sum_{j<=k} z_j / sqrt(N (N-j) (N-j+1)).
    j = np.arange(1, n_steps, dtype=float)
    return 1.0 / np.sqrt(n_steps * (n_steps - j) * (n_steps - j + 1.0))


def vloop_from_normals(z: np.ndarray) -> np.ndarray:
    """Map standard normals of shape (..., N-1) to bridges of shape (..., N+1).

    Closed-form unrolling of the v-loop recursion; the end point carries an
    exact factor (N-N) = 0, so closure is bit-exact.
    """
    z = np.asarray(z, dtype=float)
    n_steps = z.shape[-1] + 1
    flat = np.ascontiguousarray(z.reshape(int(np.prod(z.shape[:-1])), n_steps - 1))
    out = np.empty((flat.shape[0], n_steps + 1))
    vloop_rows(flat, _vloop_coefficients(n_steps), out)
    return out.reshape(z.shape[:-1] + (n_steps + 1,))


def vloop_recursive(z: np.ndarray) -> np.ndarray:
    """Literal step-by-step v-loop recursion (reference implementation)."""
    z = np.asarray(z, dtype=float)
    n = z.shape[-1] + 1
    out = np.zeros(z.shape[:-1] + (n + 1,))
    for k in range(1, n):
        ck = (n - k) / (n - k + 1.0)
        out[..., k] = np.sqrt(ck / n) * z[..., k - 1] + ck * out[..., k - 1]
    return out


def drift_subtracted_from_normals(z: np.ndarray) -> np.ndarray:
    """Bridges B(t_k) = W(t_k) - t_k W(1) from N normals of shape (..., N)."""
    z = np.asarray(z, dtype=float)
    n = z.shape[-1]
    w = np.zeros(z.shape[:-1] + (n + 1,))
    w[..., 1:] = np.cumsum(z, axis=-1) / np.sqrt(n)
    t = np.arange(n + 1) / n
    out = w - t * w[..., -1:]
    out[..., 0] = 0.0
    out[..., -1] = 0.0
    return out


def _check_steps(n_steps, n_axes=1):
    if int(n_steps) != n_steps or n_steps < 1:
        raise InvalidArgument(f"n_steps must be a positive integer, got {n_steps!r}")
    if int(n_axes) != n_axes or n_axes < 1:
        raise InvalidArgument(f"n_axes must be a positive integer, got {n_axes!r}")


def generate_vloop(n_steps: int, n_axes: int, rng) -> StandardBridge:
    """One v-loop bridge with exact finite-N Brownian-bridge statistics."""
    _check_steps(n_steps, n_axes)
    gen = _as_generator(rng)
    z = gen.standard_normal((n_axes, n_steps - 1))
    return StandardBridge(vloop_from_normals(z))


def generate_drift_subtracted(n_steps: int, n_axes: int, rng) -> StandardBridge:
    """One bridge built by removing the linear drift from a free random walk."""
    _check_steps(n_steps, n_axes)
    gen = _as_generator(rng)
    z = gen.standard_normal((n_axes, n_steps))
    return StandardBridge(drift_subtracted_from_normals(z))


def bridge_block(n_steps: int, count: int, rng, method: str = "vloop") -> np.ndarray:
    """A block of single-axis bridges, shape (count, N+1).

    This is the bulk path used by the estimators; the normals are drawn as
    one (count, N-1) array so a given stream always yields the same block.
    """
    _check_steps(n_steps)
    gen = _as_generator(rng)
    if method == "vloop":
        return vloop_from_normals(gen.standard_normal((count, n_steps - 1)))
    if method == "drift_subtracted":
        return drift_subtracted_from_normals(gen.standard_normal((count, n_steps)))
    raise InvalidArgument(f"unknown bridge method {method!r}")


def scale_shift(bridge: StandardBridge, x0, T: float) -> ScaledPath:
    if not T > 0 or not np.isfinite(T):
        raise InvalidArgument(f"proper time must be positive and finite, got {T!r}")
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (bridge.n_axes,)).copy()
    pts = x0[:, None] + np.sqrt(T) * bridge.values
    pts[:, 0] = x0
    pts[:, -1] = x0
    return ScaledPath(source_point=x0, proper_time=float(T), points=pts)


def extremes(bridge: StandardBridge, axis: int = 0) -> tuple[float, float]:
    if not 0 <= axis < bridge.n_axes:
        raise InvalidArgument(f"axis {axis} out of range for {bridge.n_axes}-axis bridge")
    row = bridge.values[axis]
    return float(row.min()), float(row.max())


# Binary ensemble format, little-endian:
#   8s magic, u32 version, u32 reserved, u64 N, u64 n_axes, u64 count, i64 seed
#   then count * n_axes * (N+1) float64 values in C order.
_MAGIC = b"WLBRIDGE"
_HEADER = struct.Struct("<8sIIQQQq")
_VERSION = 1


def dump_bridges(path, values: np.ndarray, seed: int) -> None:
    """Write an ensemble of shape (count, n_axes, N+1) or (count, N+1)."""
    arr = np.asarray(values, dtype="<f8")
    if arr.ndim == 2:
        arr = arr[:, None, :]
    if arr.ndim != 3:
        raise InvalidArgument("ensemble must have shape (count, n_axes, N+1)")
    count, n_axes, n1 = arr.shape
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, 0, n1 - 1, n_axes, count, int(seed)))
        fh.write(np.ascontiguousarray(arr).tobytes())


def load_bridges(path) -> tuple[np.ndarray, int]:
    """Read an ensemble written by :func:`dump_bridges`; returns (values, seed)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InvalidArgument("file too short for a bridge ensemble header")
    magic, version, _, n_steps, n_axes, count, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise InvalidArgument("not a bridge ensemble file (bad magic or version)")
    expected = count * n_axes * (n_steps + 1) * 8
    body = raw[_HEADER.size:]
    if len(body) != expected:
        raise InvalidArgument(f"payload size {len(body)} does not match header ({expected})")
    values = np.frombuffer(body, dtype="<f8").reshape(count, n_axes, n_steps + 1).astype(float)
    return values, seed
