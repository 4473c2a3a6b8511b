"""Segmentation and localization metrics: cIoU, gIoU, mIoU, mask2box, Acc@0.5.

Definitions:
  cIoU  = total intersection / total union, summed over the dataset.
  gIoU  = mean of per-image IoUs; when the ground truth is empty the image
          scores 1.0 if the prediction is also empty, else 0.0.
  mIoU  = mean over classes of per-class cumulative IoU; classes with zero
          union are excluded.
  Acc@0.5 counts a prediction correct iff its box IoU strictly exceeds 0.5.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np


class MaskIoU(NamedTuple):
    intersection: int
    union: int
    iou: float


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box with inclusive integer pixel coordinates."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"degenerate box: {self}")

    @property
    def area(self) -> int:
        return (self.x_max - self.x_min + 1) * (self.y_max - self.y_min + 1)


def _as_bool(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError("mask must be 2D")
    return arr != 0


def mask_iou(pred, gt) -> MaskIoU:
    """Pixel intersection/union; IoU of two empty masks is defined as 1.0."""
    p = _as_bool(pred)
    g = _as_bool(gt)
    if p.shape != g.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {g.shape}")
    inter = int(np.count_nonzero(p & g))
    union = int(np.count_nonzero(p | g))
    return MaskIoU(inter, union, inter / union if union else 1.0)


def mask2box(mask) -> BBox | None:
    """Tightest box containing all foreground pixels; None for an empty mask."""
    m = _as_bool(mask)
    ys, xs = np.nonzero(m)
    if len(ys) == 0:
        return None
    return BBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


def box_iou(a: BBox, b: BBox) -> float:
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min) + 1
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min) + 1
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


class EvalAccumulator:
    """Commutative accumulator for cIoU / gIoU / mIoU / Acc@0.5.

    Merging is commutative and associative; finalized values are
    bit-identical however the sample stream was sharded (integer sums plus
    math.fsum for the float means).
    """

    def __init__(self):
        self.intersection_sum = 0
        self.union_sum = 0
        self.per_image: list[tuple[object, float]] = []
        self.correct = 0
        self.total = 0
        self.class_intersection: dict[int, int] = {}
        self.class_union: dict[int, int] = {}

    # -- per-sample updates ---------------------------------------------

    def add_mask_pair(self, pred, gt, sample_id=None) -> float:
        """RES/GRES update: cumulative sums plus the per-image IoU.

        Returns the per-image IoU under the no-target convention.
        """
        inter, union, _ = mask_iou(pred, gt)
        self.intersection_sum += inter
        self.union_sum += union
        gt_empty = not np.any(_as_bool(gt))
        pred_empty = not np.any(_as_bool(pred))
        if gt_empty or pred_empty:
            per_image = 1.0 if (gt_empty and pred_empty) else 0.0
        else:
            per_image = inter / union
        self.per_image.append((sample_id, per_image))
        return per_image

    def add_box_pair(self, pred: BBox | None, gt: BBox | None,
                     sample_id=None) -> bool:
        """REC update. Correct iff box IoU > 0.5 (strict); a missing box on
        one side only is incorrect, both missing counts as correct."""
        if pred is None and gt is None:
            ok = True
        elif pred is None or gt is None:
            ok = False
        else:
            ok = box_iou(pred, gt) > 0.5
        self.correct += int(ok)
        self.total += 1
        return ok

    def add_class_pair(self, pred, gt) -> None:
        """Semantic-segmentation update over index masks of class ids."""
        p = np.asarray(pred)
        g = np.asarray(gt)
        if p.shape != g.shape:
            raise ValueError(f"mask shapes differ: {p.shape} vs {g.shape}")
        for cls in np.union1d(np.unique(p), np.unique(g)):
            cls = int(cls)
            pm = p == cls
            gm = g == cls
            inter = int(np.count_nonzero(pm & gm))
            union = int(np.count_nonzero(pm | gm))
            self.class_intersection[cls] = self.class_intersection.get(cls, 0) + inter
            self.class_union[cls] = self.class_union.get(cls, 0) + union

    # -- merge / finalize -------------------------------------------------

    def merge(self, other: "EvalAccumulator") -> "EvalAccumulator":
        out = EvalAccumulator()
        out.intersection_sum = self.intersection_sum + other.intersection_sum
        out.union_sum = self.union_sum + other.union_sum
        out.per_image = self.per_image + other.per_image
        out.correct = self.correct + other.correct
        out.total = self.total + other.total
        for src in (self, other):
            for cls, v in src.class_intersection.items():
                out.class_intersection[cls] = out.class_intersection.get(cls, 0) + v
            for cls, v in src.class_union.items():
                out.class_union[cls] = out.class_union.get(cls, 0) + v
        return out

    def ciou(self) -> float:
        if self.union_sum == 0:
            raise ValueError("cIoU undefined: no union pixels accumulated")
        return self.intersection_sum / self.union_sum

    def giou(self) -> float:
        if not self.per_image:
            raise ValueError("gIoU undefined: no images accumulated")
        return math.fsum(v for _, v in self.per_image) / len(self.per_image)

    def acc_at_05(self) -> float:
        if self.total == 0:
            raise ValueError("Acc@0.5 undefined: no boxes accumulated")
        return self.correct / self.total

    def miou(self, classes=None) -> float:
        """Mean over classes of cumulative per-class IoU.

        ``classes`` restricts the mean to the given class ids; classes with
        zero accumulated union are always excluded.
        """
        if classes is None:
            classes = sorted(self.class_union)
        ious = [self.class_intersection.get(c, 0) / self.class_union[c]
                for c in classes if self.class_union.get(c, 0) > 0]
        if not ious:
            raise ValueError("mIoU undefined: no class with nonzero union")
        return math.fsum(ious) / len(ious)


# --- report emission ---------------------------------------------------------

REPORT_FIELDS = ("dataset", "split", "metric", "value", "n_samples")


def write_report_csv(path, rows: list[dict]) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in REPORT_FIELDS})


def write_report_json(path, rows: list[dict], per_image=None) -> None:
    doc = {"results": rows}
    if per_image is not None:
        doc["per_image"] = [{"id": sid, "iou": iou} for sid, iou in per_image]
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
