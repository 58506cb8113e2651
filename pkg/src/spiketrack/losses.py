"""Tracking objective: weighted focal + GIoU + L1, with analytic gradients.

Boxes are ``(cx, cy, w, h)`` in normalised crop coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

AREA_EPS = 1e-9
P_CLAMP = 1e-4


@dataclass(frozen=True)
class LossConfig:
    lambda_giou: float = 2.0
    lambda_l1: float = 5.0
    focal_alpha: float = 2.0
    focal_beta: float = 4.0

    def __post_init__(self):
        if self.lambda_giou < 0 or self.lambda_l1 < 0:
            raise ValueError("loss weights must be non-negative")


def _corners(b):
    cx, cy, w, h = b
    return cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2


def giou(pred, gt) -> float:
    return 1.0 - giou_loss(pred, gt)[0]


def giou_loss(pred, gt):
    """``(1 - GIoU, d/d pred)`` for single boxes."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    px0, py0, px1, py1 = _corners(pred)
    gx0, gy0, gx1, gy1 = _corners(gt)
    ap = max(pred[2] * pred[3], AREA_EPS)
    ag = max(gt[2] * gt[3], AREA_EPS)
    iw_raw, ih_raw = min(px1, gx1) - max(px0, gx0), min(py1, gy1) - max(py0, gy0)
    iw, ih = max(iw_raw, 0.0), max(ih_raw, 0.0)
    inter = iw * ih
    union = ap + ag - inter
    cw, ch = max(px1, gx1) - min(px0, gx0), max(py1, gy1) - min(py0, gy0)
    enc = max(cw * ch, AREA_EPS)
    iou = inter / union
    value = 1.0 - (iou - (enc - union) / enc)

    # loss = 1 - inter/union - union/enc + 1
    # d loss / d inter = -1/union - inter/union^2 + 1/enc   (union depends on inter)
    d_inter = -1.0 / union - inter / union**2 + 1.0 / enc
    # d loss / d union (holding inter) = inter/union^2 - 1/enc
    d_union = inter / union**2 - 1.0 / enc
    d_enc = union / enc**2

    g = np.zeros(4)
    # union = ap + ag - inter; ap = w*h
    if pred[2] * pred[3] > AREA_EPS:
        g[2] += d_union * pred[3]
        g[3] += d_union * pred[2]
    # inter = iw*ih with iw = min(px1,gx1) - max(px0,gx0)
    if iw_raw > 0 and ih_raw > 0:
        d_iw, d_ih = d_inter * ih, d_inter * iw
        _edge_grad(g, 0, 2, d_iw, px0 >= gx0, px1 <= gx1)
        _edge_grad(g, 1, 3, d_ih, py0 >= gy0, py1 <= gy1)
    if cw * ch > AREA_EPS:
        d_cw, d_ch = d_enc * ch, d_enc * cw
        # enclosing extent = max(right) - min(left): pred edges count when outermost
        _edge_grad(g, 0, 2, d_cw, px0 <= gx0, px1 >= gx1)
        _edge_grad(g, 1, 3, d_ch, py0 <= gy0, py1 >= gy1)
    return float(value), g


def _edge_grad(g, ic, iw, d_extent, lo_is_pred, hi_is_pred):
    # extent = hi - lo; hi = c + w/2, lo = c - w/2 when they come from the prediction
    if hi_is_pred:
        g[ic] += d_extent
        g[iw] += d_extent / 2
    if lo_is_pred:
        g[ic] -= d_extent
        g[iw] += d_extent / 2


def l1_loss(pred, gt):
    """Mean absolute error over ``(cx, cy, w, h)`` and its gradient."""
    d = np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64)
    return float(np.abs(d).mean()), np.sign(d) / d.size


def gaussian_radius(h: float, w: float, min_overlap: float = 0.7) -> float:
    """Largest corner shift keeping IoU >= ``min_overlap`` (the usual three-case bound)."""
    a1, b1 = 1.0, h + w
    c1 = w * h * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 + np.sqrt(b1**2 - 4 * a1 * c1)) / 2
    a2, b2 = 4.0, 2 * (h + w)
    c2 = (1 - min_overlap) * w * h
    r2 = (b2 + np.sqrt(b2**2 - 4 * a2 * c2)) / 2
    a3, b3 = 4 * min_overlap, -2 * min_overlap * (h + w)
    c3 = (min_overlap - 1) * w * h
    r3 = (b3 + np.sqrt(b3**2 - 4 * a3 * c3)) / 2
    return float(min(r1, r2, r3))


def gaussian_target(box, n: int) -> np.ndarray:
    """Splatted Gaussian heatmap (peak 1 at the center cell) for a normalised box."""
    cx, cy, w, h = box
    if not (0 <= cx <= 1 and 0 <= cy <= 1):
        raise ValueError("target center outside the map")
    ix, iy = min(int(cx * n), n - 1), min(int(cy * n), n - 1)
    r = max(0, int(gaussian_radius(h * n, w * n)))
    sigma = (2 * r + 1) / 6
    yy, xx = np.mgrid[0:n, 0:n]
    g = np.exp(-((xx - ix) ** 2 + (yy - iy) ** 2) / (2 * sigma**2))
    g[np.abs(xx - ix) > r] = 0
    g[np.abs(yy - iy) > r] = 0
    g[iy, ix] = 1.0
    return g


def weighted_focal_loss(score, target, alpha: float = 2.0, beta: float = 4.0):
    """Penalty-reduced focal loss and its gradient w.r.t. ``score``.

    Positives are cells where ``target == 1``; the sum is normalised by their
    count (at least one).
    """
    score = np.asarray(score, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if score.shape != target.shape:
        raise ValueError(f"score {score.shape} and target {target.shape} differ")
    p = np.clip(score, P_CLAMP, 1 - P_CLAMP)
    inside = (score > P_CLAMP) & (score < 1 - P_CLAMP)
    pos = target == 1
    n_pos = max(int(pos.sum()), 1)
    neg_w = (1 - target) ** beta
    pos_term = -((1 - p) ** alpha) * np.log(p)
    neg_term = -neg_w * p**alpha * np.log(1 - p)
    value = float(np.where(pos, pos_term, neg_term).sum() / n_pos)
    d_pos = alpha * (1 - p) ** (alpha - 1) * np.log(p) - (1 - p) ** alpha / p
    d_neg = -neg_w * (alpha * p ** (alpha - 1) * np.log(1 - p) - p**alpha / (1 - p))
    grad = np.where(pos, d_pos, d_neg) * inside / n_pos
    return value, grad


def total_loss(components, cfg: LossConfig = LossConfig()) -> float:
    """``cls + lambda_giou * giou + lambda_l1 * l1`` for a ``(cls, giou, l1)`` triple."""
    cls, gi, l1 = components
    return cls + cfg.lambda_giou * gi + cfg.lambda_l1 * l1


def box_losses(pred_box, gt_box, score, target, cfg: LossConfig = LossConfig()):
    """All three components and their gradients for one sample.

    Returns ``(total, (cls, giou, l1), d_score, d_box)``.
    """
    cls, g_cls = weighted_focal_loss(score, target, cfg.focal_alpha, cfg.focal_beta)
    gi, g_gi = giou_loss(pred_box, gt_box)
    l1, g_l1 = l1_loss(pred_box, gt_box)
    d_box = cfg.lambda_giou * g_gi + cfg.lambda_l1 * g_l1
    return total_loss((cls, gi, l1), cfg), (cls, gi, l1), g_cls, d_box
