"""Linear operators over spike inputs.

Every operator has two evaluation paths that must agree:

* ``mac``: densify the spikes (``counts / d_cap``) and run an ordinary
  multiply-accumulate convolution / matrix product;
* ``ac``: walk the nonzero spike addresses and add the addressed weight
  columns into the output, ``count`` times (done as one add of
  ``count * w``), dividing by ``d_cap`` once at the end.

Dense tensors use ``[..., C, H, W]`` for maps and ``[..., features]`` for
token tensors; all leading axes (timestep, batch) are flattened internally.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .spiketensor import SpikeTensor, spike_to_dense

CONV_KINDS = ("pointwise", "depthwise", "full")


@dataclass(frozen=True)
class ConvSpec:
    kind: str
    weights: np.ndarray  # [C_out, C_in // groups, kh, kw]
    bias: np.ndarray | None = None
    stride: int = 1
    padding: int | None = None  # None -> "same" (k // 2)

    def __post_init__(self):
        if self.kind not in CONV_KINDS:
            raise ValueError(f"unknown conv kind {self.kind!r}")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 4:
            raise ValueError(f"conv weights must be 4-d, got shape {w.shape}")
        if self.kind == "pointwise" and w.shape[2:] != (1, 1):
            raise ValueError("pointwise conv requires a 1x1 kernel")
        if self.kind == "depthwise" and w.shape[1] != 1:
            raise ValueError("depthwise conv weights must have one input channel per group")
        if self.bias is not None and np.shape(self.bias) != (w.shape[0],):
            raise ValueError(f"bias shape {np.shape(self.bias)} does not match {w.shape[0]} output channels")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        object.__setattr__(self, "weights", w)

    @property
    def in_channels(self) -> int:
        return self.weights.shape[0] if self.kind == "depthwise" else self.weights.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]

    @property
    def pad(self) -> int:
        return self.kernel[0] // 2 if self.padding is None else self.padding

    @property
    def groups(self) -> int:
        return self.in_channels if self.kind == "depthwise" else 1

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        ho = (h + 2 * self.pad - kh) // self.stride + 1
        wo = (w + 2 * self.pad - kw) // self.stride + 1
        if ho <= 0 or wo <= 0:
            raise ValueError(f"conv on {h}x{w} with kernel {kh}x{kw}, stride {self.stride} has empty output")
        return ho, wo

    def macs(self, h: int, w: int) -> int:
        """Multiply-accumulates for one timestep on an ``h x w`` input."""
        ho, wo = self.output_hw(h, w)
        kh, kw = self.kernel
        return kh * kw * self.weights.shape[1] * self.out_channels * ho * wo


@dataclass(frozen=True)
class LinearSpec:
    weights: np.ndarray  # [out, in]
    bias: np.ndarray | None = None
    expansion: float = 1.0  # gamma tag for the expanded value path

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError(f"linear weights must be 2-d, got shape {w.shape}")
        if self.bias is not None and np.shape(self.bias) != (w.shape[0],):
            raise ValueError(f"bias shape {np.shape(self.bias)} does not match {w.shape[0]} outputs")
        object.__setattr__(self, "weights", w)

    @property
    def in_features(self) -> int:
        return self.weights.shape[1]

    @property
    def out_features(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class BnFold:
    scale: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.scale) <= 0):
            raise ValueError("folded batch-norm scale must be positive per channel")

    @staticmethod
    def from_stats(gamma, beta, mean, var, eps: float = 1e-5) -> "BnFold":
        scale = np.asarray(gamma, dtype=np.float64) / np.sqrt(np.asarray(var, dtype=np.float64) + eps)
        return BnFold(scale, np.asarray(beta, dtype=np.float64) - np.asarray(mean) * scale)

    def apply(self, y: np.ndarray, channel_axis: int = -3) -> np.ndarray:
        shape = [1] * y.ndim
        shape[channel_axis] = -1
        return y * self.scale.reshape(shape) + self.shift.reshape(shape)


def fold_bn(spec: ConvSpec, bn: BnFold) -> ConvSpec:
    """Absorb a per-channel affine that follows ``spec`` into its weights."""
    w = spec.weights * bn.scale[:, None, None, None]
    b = np.zeros(spec.out_channels) if spec.bias is None else spec.bias
    return replace(spec, weights=w, bias=b * bn.scale + bn.shift)


# ---------------------------------------------------------------- dense kernels


def _flat(x: np.ndarray, keep: int):
    lead = x.shape[: x.ndim - keep]
    return x.reshape((-1,) + x.shape[x.ndim - keep:]), lead


def _windows(x4: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    xp = np.pad(x4, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x4
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]  # [B, C, Ho, Wo, kh, kw]


def conv2d_dense(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, stride: int, pad: int, groups: int) -> np.ndarray:
    x4, lead = _flat(np.asarray(x, dtype=np.float64), 3)
    c_out, _, kh, kw = w.shape
    if kh == 1 and kw == 1 and stride == 1 and pad == 0 and groups == 1:
        out = np.einsum("bchw,oc->bohw", x4, w[:, :, 0, 0], optimize=True)
    else:
        win = _windows(x4, kh, kw, stride, pad)
        if groups == 1:
            B, C, Ho, Wo = win.shape[:4]
            cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * kh * kw)
            out = (cols @ w.reshape(c_out, -1).T).reshape(B, Ho, Wo, c_out).transpose(0, 3, 1, 2)
        elif groups == x4.shape[1] == c_out:
            out = np.einsum("bchwij,cij->bchw", win, w[:, 0], optimize=True)
        else:
            raise ValueError(f"unsupported group count {groups}")
    if b is not None:
        out = out + b[:, None, None]
    return np.ascontiguousarray(out).reshape(lead + out.shape[1:])


def conv2d_dense_backward(x: np.ndarray, w: np.ndarray, gout: np.ndarray, stride: int, pad: int, groups: int):
    """Gradients ``(dx, dw, db)`` of :func:`conv2d_dense`."""
    x4, lead = _flat(np.asarray(x, dtype=np.float64), 3)
    g4, _ = _flat(gout, 3)
    c_out, _, kh, kw = w.shape
    B, C, H, W = x4.shape
    Ho, Wo = g4.shape[2:]
    db = g4.sum(axis=(0, 2, 3))
    win = _windows(x4, kh, kw, stride, pad)
    dxp = np.zeros((B, C, H + 2 * pad, W + 2 * pad))
    if groups == 1:
        dw = np.einsum("bohw,bchwij->ocij", g4, win, optimize=True)
        dcols = np.einsum("bohw,ocij->bchwij", g4, w, optimize=True)
    else:
        dw = np.einsum("bchw,bchwij->cij", g4, win, optimize=True)[:, None]
        dcols = g4[..., None, None] * w[:, 0][None, :, None, None]
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i: i + stride * Ho: stride, j: j + stride * Wo: stride] += dcols[..., i, j]
    dx = dxp[:, :, pad: pad + H, pad: pad + W] if pad else dxp
    return dx.reshape(lead + (C, H, W)), dw, db


# ---------------------------------------------------------------- spike operators


def _check_conv_input(shape, spec: ConvSpec):
    if len(shape) < 3 or shape[-3] != spec.in_channels:
        raise ValueError(f"conv expects [..., {spec.in_channels}, H, W], got {tuple(shape)}")


def conv2d(x: SpikeTensor, spec: ConvSpec, path: str = "mac") -> np.ndarray:
    _check_conv_input(x.shape, spec)
    spec.output_hw(*x.shape[-2:])
    if path == "mac":
        return conv2d_dense(spike_to_dense(x), spec.weights, spec.bias, spec.stride, spec.pad, spec.groups)
    if path != "ac":
        raise ValueError(f"unknown path {path!r}")

    counts, lead = _flat(x.counts, 3)
    B, C, H, W = counts.shape
    Ho, Wo = spec.output_hw(H, W)
    kh, kw = spec.kernel
    s, p = spec.stride, spec.pad
    out = np.zeros((B, spec.out_channels, Ho, Wo))
    b, c, yy, xx = np.nonzero(counts)
    val = counts[b, c, yy, xx].astype(np.float64)
    oc = np.arange(spec.out_channels)
    for i in range(kh):
        for j in range(kw):
            ny, nx = yy + p - i, xx + p - j
            ok = (ny % s == 0) & (nx % s == 0)
            yo, xo = ny // s, nx // s
            ok &= (yo >= 0) & (yo < Ho) & (xo >= 0) & (xo < Wo)
            if not ok.any():
                continue
            if spec.kind == "depthwise":
                np.add.at(out, (b[ok], c[ok], yo[ok], xo[ok]), val[ok] * spec.weights[c[ok], 0, i, j])
            else:
                contrib = val[ok, None] * spec.weights[:, c[ok], i, j].T
                np.add.at(out, (b[ok, None], oc[None], yo[ok, None], xo[ok, None]), contrib)
    out /= x.d_cap
    if spec.bias is not None:
        out += spec.bias[:, None, None]
    return out.reshape(lead + out.shape[1:])


def linear(x: SpikeTensor, spec: LinearSpec, path: str = "mac") -> np.ndarray:
    if x.shape[-1] != spec.in_features:
        raise ValueError(f"linear expects [..., {spec.in_features}], got {tuple(x.shape)}")
    if path == "mac":
        out = spike_to_dense(x) @ spec.weights.T
    elif path == "ac":
        counts, lead = _flat(x.counts, 1)
        acc = np.zeros((counts.shape[0], spec.out_features))
        rows, cols = np.nonzero(counts)
        contrib = counts[rows, cols, None].astype(np.float64) * spec.weights[:, cols].T
        np.add.at(acc, rows, contrib)
        out = (acc / x.d_cap).reshape(lead + (spec.out_features,))
    else:
        raise ValueError(f"unknown path {path!r}")
    if spec.bias is not None:
        out = out + spec.bias
    return out


def _as_dense(x) -> np.ndarray:
    return spike_to_dense(x) if isinstance(x, SpikeTensor) else np.asarray(x, dtype=np.float64)


def avg_pool_to(x, target_hw) -> np.ndarray:
    x = _as_dense(x)
    h, w = x.shape[-2:]
    th, tw = target_hw
    if th <= 0 or tw <= 0 or h % th or w % tw:
        raise ValueError(f"cannot average-pool {h}x{w} to {th}x{tw}")
    fh, fw = h // th, w // tw
    return x.reshape(x.shape[:-2] + (th, fh, tw, fw)).mean(axis=(-3, -1))


def upsample_from(x: np.ndarray, target_hw) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[-2:]
    th, tw = target_hw
    if h <= 0 or w <= 0 or th % h or tw % w:
        raise ValueError(f"cannot upsample {h}x{w} to {th}x{tw}")
    return np.repeat(np.repeat(x, th // h, axis=-2), tw // w, axis=-1)


def hanning_1d(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("window length must be >= 1")
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2 * np.pi * k / (n - 1))


def hanning_2d(n: int) -> np.ndarray:
    w = hanning_1d(n)
    return np.outer(w, w)
