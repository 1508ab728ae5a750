"""Confusion counts, F1/IoU and per-event aggregation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .change import BurnMask

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def confusion(pred: BurnMask, truth: BurnMask) -> ConfusionCounts:
    """Tally pixels where both masks are valid."""
    if pred.shape != truth.shape:
        raise ValueError(f"prediction {pred.shape} and truth {truth.shape} differ in shape")
    both = pred.valid & truth.valid
    p = pred.mask & both
    t = truth.mask & both
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = int(np.count_nonzero(both)) - tp - fp - fn
    return ConfusionCounts(tp, fp, fn, tn)


def is_empty(c: ConfusionCounts) -> bool:
    """True when neither mask has a burned pixel, where F1/IoU default to 1."""
    return c.tp + c.fp + c.fn == 0


def f1_iou(c: ConfusionCounts) -> tuple[float, float]:
    """``F1 = 2TP / (2TP + FP + FN)`` and ``IoU = TP / (TP + FP + FN)``."""
    if is_empty(c):
        return 1.0, 1.0
    return 2 * c.tp / (2 * c.tp + c.fp + c.fn), c.tp / (c.tp + c.fp + c.fn)


@dataclass
class ImageScore:
    image_id: str
    f1: float
    iou: float
    counts: ConfusionCounts
    empty: bool = False

    @classmethod
    def from_counts(cls, image_id: str, counts: ConfusionCounts) -> "ImageScore":
        f1, iou = f1_iou(counts)
        return cls(image_id, f1, iou, counts, is_empty(counts))

    def as_dict(self) -> dict:
        return {"image_id": self.image_id, "f1": self.f1, "iou": self.iou,
                "counts": self.counts.as_dict(), "empty_vs_empty": self.empty}


@dataclass
class EventReport:
    event_id: str
    per_image: list[ImageScore] = field(default_factory=list)
    mean_f1: float = float("nan")
    mean_iou: float = float("nan")

    def as_dict(self) -> dict:
        return {"event_id": self.event_id, "mean_f1": self.mean_f1, "mean_iou": self.mean_iou,
                "per_image": [s.as_dict() for s in self.per_image]}


def aggregate(groups: Mapping[str, Sequence[ImageScore]], pixel_weighted: bool = False):
    """Average scores per event, then over events.

    By default both levels are unweighted means. With ``pixel_weighted`` the
    confusion counts of an event are pooled before scoring, and the overall
    row pools all events.

    Returns ``(reports, overall)`` where ``overall`` has ``mean_f1``/``mean_iou``.
    """
    reports: list[EventReport] = []
    for event_id, scores in groups.items():
        scores = list(scores)
        if not scores:
            logger.warning("event %r has no images; skipped", event_id)
            continue
        if pixel_weighted:
            pooled = sum((s.counts for s in scores[1:]), scores[0].counts)
            f1, iou = f1_iou(pooled)
        else:
            f1 = float(np.mean([s.f1 for s in scores]))
            iou = float(np.mean([s.iou for s in scores]))
        reports.append(EventReport(event_id, scores, f1, iou))
    if not reports:
        return reports, {"mean_f1": float("nan"), "mean_iou": float("nan"), "events": 0}
    if pixel_weighted:
        all_scores = [s for r in reports for s in r.per_image]
        pooled = sum((s.counts for s in all_scores[1:]), all_scores[0].counts)
        f1, iou = f1_iou(pooled)
    else:
        f1 = float(np.mean([r.mean_f1 for r in reports]))
        iou = float(np.mean([r.mean_iou for r in reports]))
    return reports, {"mean_f1": f1, "mean_iou": iou, "events": len(reports)}
