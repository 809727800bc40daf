"""Answer accuracy, detection matching, and corpus-level grounding scores.

Corpus scores are micro-averaged: true-positive / prediction / ground-truth
counts are summed over samples first, then turned into precision, recall and
F1.  Matching is greedy one-to-one by descending criterion score with
deterministic tie-breaks (lower prediction index, then lower GT index).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

from .errors import InvalidCounts, MissingImageSize, UnknownSample
from .geometry import (
    BBox,
    BinaryMask,
    fill_polygon,
    iou_bbox,
    mask_iou,
    overlap_ratio,
    rasterize_boxes,
)

if TYPE_CHECKING:
    from .datasets import Dataset
    from .pipeline import PredictionRecord

logger = logging.getLogger(__name__)

_SCORE_FUNCS: dict[str, Callable[[BBox, BBox], float]] = {
    "iou": iou_bbox,
    "overlap": overlap_ratio,
}


@dataclass(frozen=True)
class MatchCriterion:
    """How a predicted box counts as hitting a GT box."""

    kind: str = "iou"  # "iou" or "overlap"
    threshold: float = 0.5

    def __post_init__(self):
        if self.kind not in _SCORE_FUNCS:
            raise ValueError(f"criterion kind must be one of {sorted(_SCORE_FUNCS)}")
        if not 0 < self.threshold <= 1:
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")

    def score(self, pred: BBox, gt: BBox) -> float:
        return _SCORE_FUNCS[self.kind](pred, gt)


@dataclass(frozen=True)
class GroundingScore:
    precision: float
    recall: float
    f1: float
    tp: int
    n_pred: int
    n_gt: int


@dataclass
class EvalResult:
    accuracy: float
    iou_score: GroundingScore
    overlap_score: GroundingScore
    mean_mask_iou: float | None
    n_samples: int
    n_failed: int
    config_echo: dict = field(default_factory=dict)
    per_sample: list[dict] = field(default_factory=list)


_ARTICLE_RE = re.compile(r"^(a|an|the)\s+")


def normalize_answer(text: str) -> str:
    """Canonical answer form: lowercase, collapsed whitespace, no terminal
    punctuation, no leading article.  Digits are left as digits."""
    out = " ".join(text.lower().split())
    out = out.rstrip(".!? ").strip()
    out = _ARTICLE_RE.sub("", out)
    return out


def answer_accuracy(pairs: list[tuple[str, str]]) -> float:
    """Fraction of (predicted, ground-truth) pairs equal after normalization."""
    if not pairs:
        logger.warning("answer_accuracy called with no pairs")
        return 0.0
    hits = sum(1 for pred, gt in pairs if normalize_answer(pred) == normalize_answer(gt))
    return hits / len(pairs)


def match_detections(
    preds: list[BBox], gts: list[BBox], criterion: MatchCriterion
) -> list[tuple[int, int, float]]:
    """Greedy one-to-one matching of predictions to ground truth.

    Candidate pairs scoring at least the threshold are taken highest-score
    first; ties go to the lower prediction index, then the lower GT index.
    """
    candidates = []
    for pi, pred in enumerate(preds):
        for gi, gt in enumerate(gts):
            s = criterion.score(pred, gt)
            if s >= criterion.threshold:
                candidates.append((pi, gi, s))
    candidates.sort(key=lambda c: (-c[2], c[0], c[1]))
    matched: list[tuple[int, int, float]] = []
    used_preds: set[int] = set()
    used_gts: set[int] = set()
    for pi, gi, s in candidates:
        if pi in used_preds or gi in used_gts:
            continue
        used_preds.add(pi)
        used_gts.add(gi)
        matched.append((pi, gi, s))
    return matched


def prf1(tp: int, n_pred: int, n_gt: int) -> GroundingScore:
    """Precision/recall/F1 from matched counts."""
    if tp < 0 or n_pred < 0 or n_gt < 0:
        raise InvalidCounts(f"counts must be non-negative: {tp}, {n_pred}, {n_gt}")
    if tp > n_pred or tp > n_gt:
        raise InvalidCounts(f"tp={tp} exceeds n_pred={n_pred} or n_gt={n_gt}")
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gt if n_gt else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return GroundingScore(p, r, f1, tp, n_pred, n_gt)


def _record_boxes(record: "PredictionRecord", top_k: int | None) -> list[BBox]:
    if record.error is not None:
        return []
    boxes = [d.bbox for d in record.detections]
    if top_k is not None:
        boxes = boxes[:top_k]
    return boxes


def evaluate_grounding(
    records: list["PredictionRecord"],
    dataset: "Dataset",
    scope: str = "answer",
    iou_threshold: float = 0.5,
    overlap_threshold: float = 0.5,
    top_k: int | None = None,
    include_mask_iou: bool = False,
) -> EvalResult:
    """Score a prediction set against a dataset for one grounding scope.

    IoU and Overlap each run their own matching with their own score
    function; accuracy covers all records; a failed record counts as a
    zero-prediction sample.  Samples whose GT lacks the scope (or whose GT
    is polygonal) are skipped for the box metrics and counted.
    """
    by_id = dataset.by_id()
    criteria = {
        "iou": MatchCriterion("iou", iou_threshold),
        "overlap": MatchCriterion("overlap", overlap_threshold),
    }
    totals = {name: {"tp": 0, "n_pred": 0, "n_gt": 0} for name in criteria}
    pairs: list[tuple[str, str]] = []
    per_sample: list[dict] = []
    n_failed = 0
    n_skipped = 0

    for record in sorted(records, key=lambda r: r.sample_id):
        sample = by_id.get(record.sample_id)
        if sample is None:
            raise UnknownSample(f"sample {record.sample_id!r} not in dataset")
        pairs.append((record.predicted_answer or "", sample.answer))
        if record.error is not None:
            n_failed += 1
        gt = sample.groundings.get(scope)
        if gt is None or gt.boxes is None:
            n_skipped += 1
            continue
        preds = _record_boxes(record, top_k)
        entry = {"sample_id": record.sample_id, "n_pred": len(preds), "n_gt": len(gt.boxes)}
        for name, criterion in criteria.items():
            tp = len(match_detections(preds, gt.boxes, criterion))
            totals[name]["tp"] += tp
            totals[name]["n_pred"] += len(preds)
            totals[name]["n_gt"] += len(gt.boxes)
            entry[f"tp_{name}"] = tp
        per_sample.append(entry)

    mmiou = None
    if include_mask_iou:
        mmiou = mean_mask_iou(records, dataset, scope=scope, top_k=top_k)

    return EvalResult(
        accuracy=answer_accuracy(pairs) if pairs else 0.0,
        iou_score=prf1(**totals["iou"]),
        overlap_score=prf1(**totals["overlap"]),
        mean_mask_iou=mmiou,
        n_samples=len(records),
        n_failed=n_failed,
        config_echo={
            "scope": scope,
            "iou_threshold": iou_threshold,
            "overlap_threshold": overlap_threshold,
            "top_k": top_k,
            "n_skipped_scope": n_skipped,
        },
        per_sample=per_sample,
    )


def mean_mask_iou(
    records: list["PredictionRecord"],
    dataset: "Dataset",
    scope: str = "answer",
    top_k: int | None = None,
) -> float:
    """Arithmetic mean of per-sample mask IoUs for polygon-style ground truth.

    Predicted boxes are rasterized against the filled GT polygons at the
    sample's image size; failed records score 0.
    """
    by_id = dataset.by_id()
    scores: list[float] = []
    for record in sorted(records, key=lambda r: r.sample_id):
        sample = by_id.get(record.sample_id)
        if sample is None:
            raise UnknownSample(f"sample {record.sample_id!r} not in dataset")
        gt = sample.groundings.get(scope)
        if gt is None:
            continue
        if not sample.width or not sample.height:
            raise MissingImageSize(f"sample {sample.id!r} lacks width/height")
        if record.error is not None:
            scores.append(0.0)
            continue
        w, h = sample.width, sample.height
        pred_mask = rasterize_boxes(_record_boxes(record, top_k), w, h)
        gt_mask = BinaryMask.empty(w, h)
        if gt.polygons is not None:
            for poly in gt.polygons:
                gt_mask.data |= fill_polygon(poly, w, h).data
        else:
            gt_mask = rasterize_boxes(gt.boxes, w, h)
        scores.append(mask_iou(pred_mask, gt_mask))
    if not scores:
        return 0.0
    return sum(scores) / len(scores)
