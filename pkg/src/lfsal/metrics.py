"""Saliency evaluation: PR curves, F-measures, weighted F-measure, MAE, AP.

Saliency maps are (H, W) arrays in [0, 1]; ground truths are binary masks.
Binarization quantizes to 8-bit first (salient iff round(p*255) > t), so
the 256-threshold PR curve matches what an 8-bit prediction file would
give. Images with an empty ground truth are skipped with a warning for
the overlap-based metrics (recall is undefined there); MAE is still
defined and uses every image.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, DataError

N_THRESHOLDS = 256


@dataclass
class WeightedFMeasureParams:
    """Constants of the distance-weighted measure; kept configurable."""

    sigma_sq: float = 5.0                       # variance of the dependency kernel
    kernel_radius: int = 3                      # 7x7 window
    alpha: float = math.log(0.5) / 5.0          # background importance decay
    beta_sq: float = 1.0                        # F combination weight


@dataclass
class PRCurve:
    thresholds: np.ndarray                      # ints 0..255
    precision: np.ndarray                       # dataset-mean precision per threshold
    recall: np.ndarray                          # dataset-mean recall per threshold


@dataclass
class MetricsReport:
    f_measure: float                            # adaptive-threshold F (dataset mean)
    f_max: float                                # max F over the averaged PR curve
    wf_measure: float
    mae: float
    ap: float
    curve: PRCurve


def _check_pair(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise DataError(f"prediction {pred.shape} does not match ground truth {gt.shape}")


def binarize(saliency: np.ndarray, t: int) -> np.ndarray:
    """Salient iff round(value*255) > t; t in 0..255."""
    return np.rint(np.asarray(saliency) * 255.0) > t


# --------------------------------------------------------------- PR curve

def _pr_single(pred: np.ndarray, gt: np.ndarray):
    """(precision, recall) arrays over all 256 thresholds for one image.

    Uses histograms of the quantized prediction: TP(t) is the number of
    foreground pixels quantized strictly above t, which is a suffix sum.
    """
    q = np.rint(pred * 255.0).astype(np.int64)
    gtb = gt > 0
    h_fg = np.bincount(q[gtb], minlength=N_THRESHOLDS)
    h_bg = np.bincount(q[~gtb], minlength=N_THRESHOLDS)
    # suffix[t] = count of pixels with q > t
    tp = h_fg.sum() - np.cumsum(h_fg)
    fp = h_bg.sum() - np.cumsum(h_bg)
    pos = gtb.sum()
    predicted = tp + fp
    precision = np.where(predicted > 0, tp / np.maximum(predicted, 1), 1.0)
    recall = tp / pos
    return precision, recall


def pr_curve(preds, gts) -> PRCurve:
    """Dataset PR curve: per-threshold mean of per-image precision/recall."""
    if len(preds) != len(gts):
        raise DataError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    ps, rs = [], []
    for i, (pred, gt) in enumerate(zip(preds, gts)):
        _check_pair(pred, gt)
        if not (gt > 0).any():
            warnings.warn(f"image {i}: empty ground truth, skipped in PR curve")
            continue
        p, r = _pr_single(pred, gt)
        ps.append(p)
        rs.append(r)
    if not ps:
        raise DataError("no image with a non-empty ground truth")
    return PRCurve(
        thresholds=np.arange(N_THRESHOLDS),
        precision=np.mean(ps, axis=0),
        recall=np.mean(rs, axis=0),
    )


def f_measure(precision: float, recall: float, beta_sq: float = 0.3) -> float:
    """(1 + b2) P R / (b2 P + R); 0 when the denominator is 0."""
    denom = beta_sq * precision + recall
    if denom == 0:
        return 0.0
    return (1.0 + beta_sq) * precision * recall / denom


def adaptive_f_measure(pred: np.ndarray, gt: np.ndarray, beta_sq: float = 0.3) -> float:
    """F at the adaptive threshold tau = min(2*mean(pred), 1); salient iff >= tau.

    The inclusive comparison keeps a binary prediction that exactly equals
    a 50-percent-cover mask at F = 1 while a uniform 0.5 map still
    binarizes empty (0.5 < tau = 1).
    """
    _check_pair(pred, gt)
    gtb = gt > 0
    pos = gtb.sum()
    if pos == 0:
        raise DataError("adaptive F-measure undefined for an empty ground truth")
    tau = min(2.0 * float(pred.mean()), 1.0)
    sal = pred >= tau
    tp = np.logical_and(sal, gtb).sum()
    predicted = sal.sum()
    precision = tp / predicted if predicted > 0 else 1.0
    recall = tp / pos
    return f_measure(precision, recall, beta_sq)


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean absolute per-pixel difference."""
    _check_pair(pred, gt)
    return float(np.mean(np.abs(pred - (gt > 0))))


def average_precision(curve: PRCurve) -> float:
    """11-point interpolated AP: mean of max{P : R >= r} over r = 0.0..1.0."""
    total = 0.0
    for i in range(11):
        r = i / 10
        ok = curve.recall >= r
        total += float(curve.precision[ok].max()) if ok.any() else 0.0
    return total / 11.0


# ---------------------------------------------------- weighted F-measure

def _dependency_kernel(params: WeightedFMeasureParams) -> np.ndarray:
    r = params.kernel_radius
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    k = np.exp(-(yy ** 2 + xx ** 2) / (2.0 * params.sigma_sq))
    return k / k.sum()


def weighted_f_measure(pred: np.ndarray, gt: np.ndarray,
                       params: WeightedFMeasureParams | None = None) -> float:
    """Distance-weighted F-measure of a saliency map against a binary mask.

    The absolute error map is reweighted in two steps before counting: a
    foreground pixel's error may be replaced by the Gaussian-weighted mean
    of the foreground errors around it when that is smaller (neighboring
    errors are not independent), and background errors are scaled by
    nu = 2 - exp(alpha * d) with d the Euclidean distance to the nearest
    foreground pixel, so stray responses far from the object cost more.
    Weighted TP/FP/FN then combine like an ordinary F-measure.

    The smoothing normalizes over the foreground support inside the
    window, which keeps the construction free of nearest-neighbor tie
    rules and pins weighted recall to 0 for an all-zero prediction.
    """
    params = params or WeightedFMeasureParams()
    _check_pair(pred, gt)
    gtb = gt > 0
    if not gtb.any():
        raise DataError("weighted F-measure undefined for an empty ground truth")
    pred = np.asarray(pred, dtype=np.float64)
    if pred.min() < 0 or pred.max() > 1:
        raise DataError("saliency values must lie in [0, 1]")
    bg = ~gtb

    e = np.abs(pred - gtb.astype(np.float64))

    kernel = _dependency_kernel(params)
    fg_f = gtb.astype(np.float64)
    num = ndimage.convolve(e * fg_f, kernel, mode="constant", cval=0.0)
    den = ndimage.convolve(fg_f, kernel, mode="constant", cval=0.0)
    ea = np.divide(num, den, out=np.zeros_like(num), where=den > 0)

    min_e_ea = e.copy()
    swap = gtb & (ea < e)
    min_e_ea[swap] = ea[swap]

    dist = ndimage.distance_transform_edt(bg)
    weight = np.ones_like(e)
    weight[bg] = 2.0 - np.exp(params.alpha * dist[bg])
    ew = min_e_ea * weight

    n_fg = gtb.sum()
    tpw = n_fg - ew[gtb].sum()
    fpw = ew[bg].sum()
    recall_w = 1.0 - ew[gtb].mean()
    precision_w = tpw / (tpw + fpw) if (tpw + fpw) > 0 else 0.0
    if recall_w <= 0:
        return 0.0
    return f_measure(precision_w, recall_w, params.beta_sq)


# ------------------------------------------------------------- aggregate

def evaluate_dataset(preds, gts, wf_params: WeightedFMeasureParams | None = None) -> MetricsReport:
    """All metrics plus the PR curve for matched prediction/mask lists."""
    if len(preds) != len(gts):
        raise DataError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    if not preds:
        raise DataError("empty evaluation set")
    curve = pr_curve(preds, gts)

    f_vals, wf_vals, mae_vals = [], [], []
    for pred, gt in zip(preds, gts):
        mae_vals.append(mae(pred, gt))
        if (gt > 0).any():
            f_vals.append(adaptive_f_measure(pred, gt))
            wf_vals.append(weighted_f_measure(pred, gt, wf_params))

    f_curve = [f_measure(p, r) for p, r in zip(curve.precision, curve.recall)]
    return MetricsReport(
        f_measure=float(np.mean(f_vals)),
        f_max=float(max(f_curve)),
        wf_measure=float(np.mean(wf_vals)),
        mae=float(np.mean(mae_vals)),
        ap=average_precision(curve),
        curve=curve,
    )
