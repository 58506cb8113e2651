"""Integer spike tensors and firing-rate statistics.

A spike tensor stores non-negative integer counts in ``[0, d_cap]``; its real
value is ``counts / d_cap``. Dense (membrane-domain) tensors are plain float64
numpy arrays. Layout is row-major with the timestep as the leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SpikeTensor:
    counts: np.ndarray
    d_cap: int

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.equal(np.mod(counts, 1), 0)):
                raise ValueError("spike counts must be integers")
            counts = counts.astype(np.int64)
        if int(self.d_cap) < 1:
            raise ValueError(f"d_cap must be >= 1, got {self.d_cap}")
        if counts.size and (counts.min() < 0 or counts.max() > self.d_cap):
            raise ValueError(f"spike counts outside [0, {self.d_cap}]")
        counts = counts.astype(np.int64, copy=False)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "d_cap", int(self.d_cap))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts.shape

    def __len__(self):
        return self.counts.shape[0]

    def __getitem__(self, idx) -> "SpikeTensor":
        return SpikeTensor(self.counts[idx], self.d_cap)


@dataclass(frozen=True)
class FiringStats:
    """Activity of one spike tensor.

    ``nonzero_fraction`` is the share of elements that fired at all;
    ``mean_integer`` is the mean emitted integer (the number of unit spikes
    per element once integers are expanded), which can exceed 1.
    """

    nonzero_fraction: float
    mean_integer: float
    element_count: int
    timestep_count: int

    @staticmethod
    def dense(element_count: int = 0, timestep_count: int = 1) -> "FiringStats":
        # non-spiking (image) inputs count as fully active
        return FiringStats(1.0, 1.0, element_count, timestep_count)


def sfr_measure(s: SpikeTensor) -> FiringStats:
    n = s.counts.size
    steps = s.counts.shape[0] if s.counts.ndim else 1
    if n == 0:
        return FiringStats(0.0, 0.0, 0, steps)
    return FiringStats(
        nonzero_fraction=float(np.count_nonzero(s.counts)) / n,
        mean_integer=float(s.counts.sum()) / n,
        element_count=n,
        timestep_count=steps,
    )


def merge_stats(parts: list[FiringStats]) -> FiringStats:
    """Element-count-weighted combination of several measurements."""
    total = sum(p.element_count for p in parts)
    if total == 0:
        return FiringStats(0.0, 0.0, 0, max((p.timestep_count for p in parts), default=0))
    return FiringStats(
        nonzero_fraction=sum(p.nonzero_fraction * p.element_count for p in parts) / total,
        mean_integer=sum(p.mean_integer * p.element_count for p in parts) / total,
        element_count=total,
        timestep_count=sum(p.timestep_count for p in parts),
    )


def spike_to_dense(s: SpikeTensor) -> np.ndarray:
    return s.counts / float(s.d_cap)


def unit_spike_expand(s: SpikeTensor) -> list[np.ndarray]:
    """Split integer counts into ``d_cap`` binary planes.

    Plane ``k`` (1-based) is 1 wherever ``counts >= k``, so the planes sum to
    the counts element-wise.
    """
    return [(s.counts >= k).astype(np.int64) for k in range(1, s.d_cap + 1)]


def random_spikes(rng: np.random.Generator, shape, d_cap: int, density: float = 0.5) -> SpikeTensor:
    counts = rng.integers(1, d_cap + 1, size=shape)
    counts = np.where(rng.random(shape) < density, counts, 0)
    return SpikeTensor(counts, d_cap)
