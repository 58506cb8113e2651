"""NI-LIF neuron: leaky charge, integer fire with clip, reset by subtraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spiketensor import SpikeTensor

FIXED_DECAY_BETA = 0.25


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def round_half_away(u: np.ndarray) -> np.ndarray:
    return np.sign(u) * np.floor(np.abs(u) + 0.5)


def fire(u: np.ndarray, d_cap: int, relaxed: bool = False) -> np.ndarray:
    """Integer emitted for membrane potential ``u``.

    With ``relaxed`` the round is dropped and the clip window widened to
    ``[-0.5, d_cap + 0.5]``, i.e. the function whose derivative is exactly the
    straight-through gradient. Used only for gradient verification.
    """
    if relaxed:
        return np.clip(u, -0.5, d_cap + 0.5)
    return np.clip(round_half_away(u), 0, d_cap)


@dataclass
class NiLifParams:
    """Per-layer neuron parameters.

    ``theta`` holds one learnable value per timestep; a length-1 array is
    shared across timesteps. ``fixed_beta`` bypasses theta (fixed-decay
    ablation, or exact ``beta=0`` in tests).
    """

    theta: np.ndarray = field(default_factory=lambda: np.zeros(1))
    d_cap: int = 4
    fixed_beta: float | None = None

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=np.float64))

    def beta(self, t: int) -> float:
        if self.fixed_beta is not None:
            return float(self.fixed_beta)
        th = self.theta[t] if self.theta.size > 1 else self.theta[0]
        return float(sigmoid(th))


@dataclass(frozen=True)
class NeuronState:
    h: np.ndarray
    t: int = 0

    @staticmethod
    def zeros(shape) -> "NeuronState":
        return NeuronState(np.zeros(shape), 0)


def nilif_step(y: np.ndarray, state: NeuronState, p: NiLifParams) -> tuple[SpikeTensor, NeuronState]:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != state.h.shape:
        raise ValueError(f"input shape {y.shape} does not match neuron state shape {state.h.shape}")
    u = p.beta(state.t) * state.h + y
    counts = fire(u, p.d_cap)
    return SpikeTensor(counts.astype(np.int64), p.d_cap), NeuronState(u - counts, state.t + 1)


def nilif_sequence(ys, p: NiLifParams) -> list[SpikeTensor]:
    ys = list(ys)
    if not ys:
        raise ValueError("nilif_sequence needs at least one timestep")
    shape = np.shape(ys[0])
    state = NeuronState.zeros(shape)
    out = []
    for y in ys:
        if np.shape(y) != shape:
            raise ValueError(f"timestep input shape {np.shape(y)} differs from {shape}")
        s, state = nilif_step(y, state, p)
        out.append(s)
    return out


def straight_through_grad(u: np.ndarray, d_cap: int) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    inside = (u >= -0.5) & (u <= d_cap + 0.5)
    return np.where(inside, 1.0 / d_cap, 0.0)


def nilif_forward(y: np.ndarray, betas, d_cap: int, relaxed: bool = False):
    """Fold the neuron over axis 0 of ``y``.

    Returns ``(counts, u, h)``, each shaped like ``y``; ``u`` is the charged
    potential and ``h`` the post-fire potential at every timestep. ``counts``
    are integer-valued floats (or continuous when ``relaxed``).
    """
    y = np.asarray(y, dtype=np.float64)
    counts = np.empty_like(y)
    u = np.empty_like(y)
    h = np.empty_like(y)
    prev = np.zeros(y.shape[1:])
    for t in range(y.shape[0]):
        u[t] = betas[t] * prev + y[t]
        counts[t] = fire(u[t], d_cap, relaxed)
        h[t] = u[t] - counts[t]
        prev = h[t]
    return counts, u, h
