"""Mergeable running statistics for parallel Monte-Carlo reduction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["EstimatorAccumulator", "merge", "tree_merge"]


@dataclass(frozen=True)
class EstimatorAccumulator:
    """Count, mean and sum of squared deviations of a sample.

    ``mean`` and ``m2`` may be arrays (one entry per estimator column) as
    long as every accumulator that gets merged has the same shape.
    """

    count: int = 0
    mean: np.ndarray | float = 0.0
    m2: np.ndarray | float = 0.0

    @classmethod
    def from_samples(cls, x) -> "EstimatorAccumulator":
        """Accumulator of the samples along axis 0."""
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        if n == 0:
            zero = np.zeros(x.shape[1:]) if x.ndim > 1 else 0.0
            return cls(0, zero, zero)
        mu = x.mean(axis=0)
        m2 = ((x - mu) ** 2).sum(axis=0)
        return cls(n, mu, m2)

    @property
    def variance(self):
        if self.count < 2:
            return np.full(np.shape(self.mean), np.nan) if np.ndim(self.mean) else float("nan")
        return self.m2 / (self.count - 1)

    @property
    def std_error(self):
        """sqrt(m2/count)/sqrt(count)."""
        if self.count == 0:
            return np.full(np.shape(self.mean), np.nan) if np.ndim(self.mean) else float("nan")
        return np.sqrt(self.m2 / self.count) / np.sqrt(self.count)


def merge(a: EstimatorAccumulator, b: EstimatorAccumulator) -> EstimatorAccumulator:
    """Pairwise combination of two accumulators (Chan et al. update)."""
    if b.count == 0:
        return a
    if a.count == 0:
        return b
    n = a.count + b.count
    delta = np.subtract(b.mean, a.mean)
    mean = a.mean + delta * (b.count / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.count * b.count / n)
    return EstimatorAccumulator(n, mean, m2)


def tree_merge(parts) -> EstimatorAccumulator:
    """Merge a sequence in a fixed balanced-tree order.

    The result depends only on the order of ``parts``, which makes reductions
    bit-reproducible when the parts are listed by stream index.
    """
    parts = list(parts)
    if not parts:
        return EstimatorAccumulator()
    while len(parts) > 1:
        nxt = [merge(parts[i], parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]
