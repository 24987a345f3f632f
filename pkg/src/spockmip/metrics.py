"""Evaluation metrics for segmentation pairs plus vessel-continuity diagnostics.

Conventions: empty-vs-empty dice/sensitivity/volumetric similarity are 1
(perfect agreement); AUC falls back to balanced accuracy for binary inputs;
mutual information uses the natural logarithm.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.metrics import roc_auc_score

from .phantom import skeleton_mask
from .volumes import BinaryMask, ProbabilityVolume


class UndefinedMetricError(ValueError):
    """Metric has no defined value for these inputs (e.g. single-class gt)."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class ContinuityReport:
    component_count_pred: int
    component_count_gt: int
    skeleton_gap_excess: int


@dataclass
class MetricsReport:
    dice: float | None
    auc: float | None
    sensitivity: float | None
    volumetric_similarity: float | None
    mutual_information: float | None
    mahalanobis_distance: float | None
    continuity: ContinuityReport | None = None
    undefined: dict[str, str] | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        raw = json.loads(text)
        cont = raw.pop("continuity", None)
        report = cls(**raw, continuity=ContinuityReport(**cont) if cont else None)
        return report


def _check_dims(pred, gt) -> None:
    if pred.dims != gt.dims:
        raise ValueError(f"dimension mismatch: pred {pred.dims} vs gt {gt.dims}")


def confusion(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    _check_dims(pred, gt)
    p = pred.astype_bool()
    g = gt.astype_bool()
    return ConfusionCounts(
        tp=int(np.sum(p & g)),
        fp=int(np.sum(p & ~g)),
        tn=int(np.sum(~p & ~g)),
        fn=int(np.sum(~p & g)),
    )


def dice(pred: BinaryMask, gt: BinaryMask) -> float:
    _check_dims(pred, gt)
    a = int(pred.data.sum())
    b = int(gt.data.sum())
    if a == 0 and b == 0:
        return 1.0
    inter = int(np.sum(pred.astype_bool() & gt.astype_bool()))
    return 2.0 * inter / (a + b)


def sensitivity(pred: BinaryMask, gt: BinaryMask) -> float:
    c = confusion(pred, gt)
    if c.tp + c.fn == 0:
        return 1.0
    return c.tp / (c.tp + c.fn)


def specificity(pred: BinaryMask, gt: BinaryMask) -> float:
    c = confusion(pred, gt)
    if c.tn + c.fp == 0:
        return 1.0
    return c.tn / (c.tn + c.fp)


def auc(pred: ProbabilityVolume | BinaryMask, gt: BinaryMask) -> float:
    """ROC AUC of voxel scores against the mask; ties count one half.

    Binary predictions degrade the ROC to two points, so they fall back to
    balanced accuracy (mean of sensitivity and specificity).
    """
    _check_dims(pred, gt)
    if isinstance(pred, BinaryMask):
        return 0.5 * (sensitivity(pred, gt) + specificity(pred, gt))
    g = gt.data.ravel()
    if g.min() == g.max():
        raise UndefinedMetricError("auc: ground truth has a single class")
    return float(roc_auc_score(g, pred.data.ravel()))


def volumetric_similarity(pred: BinaryMask, gt: BinaryMask) -> float:
    _check_dims(pred, gt)
    va = int(pred.data.sum())
    vb = int(gt.data.sum())
    if va == 0 and vb == 0:
        return 1.0
    return 1.0 - abs(va - vb) / (va + vb)


def mutual_information(pred: BinaryMask, gt: BinaryMask) -> float:
    """MI of the 2x2 joint voxel-label histogram, natural log."""
    c = confusion(pred, gt)
    n = c.total
    joint = np.array([[c.tn, c.fn], [c.fp, c.tp]], dtype=float) / n
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    mi = 0.0
    for i in range(2):
        for j in range(2):
            if joint[i, j] > 0:
                mi += joint[i, j] * math.log(joint[i, j] / (pa[i] * pb[j]))
    return max(mi, 0.0)


def mahalanobis_distance(pred: BinaryMask, gt: BinaryMask, reg: float = 1e-8) -> float:
    """Distance between mean foreground coordinates under the pooled
    foreground-coordinate covariance, regularized by reg * identity."""
    _check_dims(pred, gt)
    ca = np.argwhere(pred.astype_bool()).astype(float)
    cb = np.argwhere(gt.astype_bool()).astype(float)
    if ca.size == 0 or cb.size == 0:
        raise UndefinedMetricError("mahalanobis: empty mask has no coordinates")
    mu_a = ca.mean(axis=0)
    mu_b = cb.mean(axis=0)
    pooled = np.vstack([ca, cb])
    cov = np.cov(pooled.T, bias=False) if pooled.shape[0] > 1 else np.zeros((3, 3))
    cov = np.atleast_2d(cov)
    delta = mu_a - mu_b
    # invert through the eigendecomposition of the unregularized covariance:
    # rank-deficient coordinate clouds make cov + reg*I ill-conditioned, and
    # a direct solve loses ~cond*eps digits there
    w, q = np.linalg.eigh(cov)
    comps = q.T @ delta
    return float(np.sqrt(np.sum(comps**2 / (np.maximum(w, 0.0) + reg))))


def continuity_report(pred: BinaryMask, gt: BinaryMask) -> ContinuityReport:
    """Component counts (26-connectivity) and the skeleton gap excess:
    extra skeleton fragments of the prediction, restricted to the dilated
    ground truth, relative to the ground-truth skeleton."""
    _check_dims(pred, gt)
    s26 = ndimage.generate_binary_structure(3, 3)

    def n_components(arr: np.ndarray) -> int:
        return int(ndimage.label(arr, structure=s26)[1])

    pred_skel = skeleton_mask(pred).astype_bool()
    gt_skel = skeleton_mask(gt).astype_bool()
    gt_dilated = ndimage.binary_dilation(gt.astype_bool(), structure=s26)
    pred_in_gt = pred_skel & gt_dilated
    return ContinuityReport(
        component_count_pred=n_components(pred.astype_bool()),
        component_count_gt=n_components(gt.astype_bool()),
        skeleton_gap_excess=n_components(pred_in_gt) - n_components(gt_skel),
    )


def evaluate_pair(
    pred_prob: ProbabilityVolume | None,
    pred_mask: BinaryMask,
    gt: BinaryMask,
    with_continuity: bool = True,
) -> MetricsReport:
    """Populate all metrics; undefined ones come back as None with a reason."""
    undefined: dict[str, str] = {}

    def tryc(name, fn):
        try:
            return fn()
        except UndefinedMetricError as exc:
            undefined[name] = str(exc)
            return None

    auc_input = pred_prob if pred_prob is not None else pred_mask
    report = MetricsReport(
        dice=dice(pred_mask, gt),
        auc=tryc("auc", lambda: auc(auc_input, gt)),
        sensitivity=sensitivity(pred_mask, gt),
        volumetric_similarity=volumetric_similarity(pred_mask, gt),
        mutual_information=mutual_information(pred_mask, gt),
        mahalanobis_distance=tryc(
            "mahalanobis_distance", lambda: mahalanobis_distance(pred_mask, gt)
        ),
        continuity=continuity_report(pred_mask, gt) if with_continuity else None,
        undefined=undefined or None,
    )
    return report


def write_report(report: MetricsReport, path: str | Path) -> None:
    Path(path).write_text(report.to_json())
