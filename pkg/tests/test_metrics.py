import random
from pathlib import Path

import pytest

from helpers import brute_force_match, random_box
from vqaground.backends import Detection
from vqaground.datasets import Dataset, GroundingTruth, Sample
from vqaground.errors import InvalidCounts, MissingImageSize, UnknownSample
from vqaground.geometry import BBox, iou_bbox, overlap_ratio
from vqaground.metrics import (
    MatchCriterion,
    answer_accuracy,
    evaluate_grounding,
    match_detections,
    mean_mask_iou,
    normalize_answer,
    prf1,
)
from vqaground.pipeline import PredictionRecord, StageError


def _record(sample_id, boxes, answer="x", error=None):
    return PredictionRecord(
        sample_id=sample_id,
        predicted_answer=answer if error is None else None,
        caption=answer if error is None else None,
        detections=[Detection(b, "obj", 1.0) for b in boxes],
        error=error,
    )


def _sample(sample_id, gt_boxes=None, answer="x", polygons=None, size=32):
    groundings = {}
    if gt_boxes:
        groundings["answer"] = GroundingTruth(boxes=gt_boxes)
    if polygons:
        groundings["answer"] = GroundingTruth(polygons=polygons)
    return Sample(
        id=sample_id, image=f"{sample_id}.png", width=size, height=size,
        question="q?", answer=answer, groundings=groundings,
    )


class TestNormalizeAnswer:
    def test_casing_and_punctuation(self):
        assert normalize_answer("Red.") == "red"

    def test_article_and_whitespace(self):
        assert normalize_answer("the  blue  cube") == "blue cube"

    def test_yes_casing(self):
        assert normalize_answer("YES") == normalize_answer("yes")

    def test_digits_stay_digits(self):
        assert normalize_answer("2") != normalize_answer("two")

    def test_terminal_punctuation_variants(self):
        assert normalize_answer("blue!") == "blue"
        assert normalize_answer("blue?") == "blue"


class TestAnswerAccuracy:
    def test_single_hit(self):
        assert answer_accuracy([("red", "red")]) == 1.0

    def test_single_miss(self):
        assert answer_accuracy([("red", "blue")]) == 0.0

    def test_mixed(self):
        pairs = [("Red.", "red"), ("2", "two"), ("yes", "yes")]
        assert answer_accuracy(pairs) == pytest.approx(2 / 3)

    def test_empty_warns_and_zero(self, caplog):
        with caplog.at_level("WARNING"):
            assert answer_accuracy([]) == 0.0
        assert any("no pairs" in m for m in caplog.messages)


class TestMatchDetections:
    def test_no_preds(self):
        assert match_detections([], [BBox(0, 0, 5, 5)], MatchCriterion()) == []

    def test_exact(self):
        box = BBox(0, 0, 10, 10)
        matches = match_detections([box], [box], MatchCriterion())
        assert matches == [(0, 0, 1.0)]

    def test_best_score_wins(self):
        preds = [BBox(0, 0, 10, 10), BBox(0, 0, 9, 10)]
        gts = [BBox(0, 0, 10, 10)]
        matches = match_detections(preds, gts, MatchCriterion())
        assert len(matches) == 1
        assert matches[0][0] == 0 and matches[0][2] == 1.0

    def test_one_to_one(self):
        box = BBox(0, 0, 10, 10)
        matches = match_detections([box, box], [box], MatchCriterion())
        assert len(matches) == 1
        assert matches[0][0] == 0  # tie broken by lower pred index

    def test_below_threshold_excluded(self):
        pred, gt = BBox(0, 0, 4, 10), BBox(0, 0, 10, 10)  # IoU 0.4
        assert match_detections([pred], [gt], MatchCriterion("iou", 0.5)) == []
        assert len(match_detections([pred], [gt], MatchCriterion("overlap", 0.4))) == 1

    def test_greedy_matches_brute_force_count(self):
        rng = random.Random(2024)
        criterion = MatchCriterion("iou", 0.5)
        for _ in range(200):
            preds = [random_box(rng, 0, 32) for _ in range(rng.randint(0, 4))]
            gts = [random_box(rng, 0, 32) for _ in range(rng.randint(0, 4))]
            greedy = len(match_detections(preds, gts, criterion))
            brute, _ = brute_force_match(preds, gts, iou_bbox, 0.5)
            assert greedy == brute

    def test_threshold_monotonicity(self):
        rng = random.Random(55)
        for _ in range(100):
            preds = [random_box(rng, 0, 32) for _ in range(rng.randint(1, 4))]
            gts = [random_box(rng, 0, 32) for _ in range(rng.randint(1, 4))]
            tps = [
                len(match_detections(preds, gts, MatchCriterion("iou", t)))
                for t in (0.1, 0.3, 0.5, 0.7, 0.9)
            ]
            assert tps == sorted(tps, reverse=True)


class TestPrf1:
    def test_half_precision_full_recall(self):
        s = prf1(2, 4, 2)
        assert (s.precision, s.recall) == (0.5, 1.0)
        assert s.f1 == pytest.approx(2 / 3)

    def test_no_predictions(self):
        s = prf1(0, 0, 5)
        assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)

    def test_perfect(self):
        s = prf1(3, 3, 3)
        assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)

    def test_invalid_counts(self):
        with pytest.raises(InvalidCounts):
            prf1(5, 4, 5)
        with pytest.raises(InvalidCounts):
            prf1(5, 5, 4)


def _perfect_fixture(n=5):
    samples, records = [], []
    for i in range(n):
        box = BBox(i + 1, i + 1, i + 8, i + 8)
        samples.append(_sample(f"s{i}", [box], answer="red"))
        records.append(_record(f"s{i}", [box], answer="red"))
    return Dataset(Path("."), samples), records


class TestEvaluateGrounding:
    def test_perfect(self):
        ds, records = _perfect_fixture()
        result = evaluate_grounding(records, ds)
        for score in (result.iou_score, result.overlap_score):
            assert (score.precision, score.recall, score.f1) == (1.0, 1.0, 1.0)
        assert result.accuracy == 1.0

    def test_no_boxes(self):
        ds, records = _perfect_fixture()
        empty = [_record(r.sample_id, [], answer="red") for r in records]
        result = evaluate_grounding(empty, ds)
        assert (result.iou_score.precision, result.iou_score.recall) == (0.0, 0.0)
        assert result.iou_score.f1 == 0.0

    def test_spurious_boxes_micro_average(self):
        # 10 samples, one GT box each; 3 records carry one extra spurious box
        samples, records = [], []
        for i in range(10):
            gt = BBox(2, 2, 10, 10)
            samples.append(_sample(f"s{i}", [gt]))
            boxes = [gt]
            if i < 3:
                boxes = [gt, BBox(20, 20, 30, 30)]
            records.append(_record(f"s{i}", boxes))
        result = evaluate_grounding(records, Dataset(Path("."), samples))
        score = result.iou_score
        assert (score.tp, score.n_pred, score.n_gt) == (10, 13, 10)
        assert score.precision == pytest.approx(10 / 13)
        assert score.recall == 1.0
        assert score.f1 == pytest.approx(20 / 23)

    def test_unknown_sample(self):
        ds, _ = _perfect_fixture()
        with pytest.raises(UnknownSample):
            evaluate_grounding([_record("nope", [])], ds)

    def test_failed_record_counts_as_zero_predictions(self):
        ds, records = _perfect_fixture()
        records[0] = _record(
            records[0].sample_id, [], error=StageError("vqa", "BackendUnavailable", "down")
        )
        result = evaluate_grounding(records, ds)
        assert result.n_failed == 1
        assert result.iou_score.tp == len(records) - 1
        assert result.iou_score.n_gt == len(records)

    def test_order_invariance(self):
        ds, records = _perfect_fixture()
        shuffled = list(reversed(records))
        assert evaluate_grounding(records, ds) == evaluate_grounding(shuffled, ds)

    def test_duplicated_preds_halve_precision(self):
        # GT boxes live in disjoint cells, so each pred overlaps one GT only
        rng = random.Random(31)
        samples, records = [], []
        for i in range(8):
            cell = (i % 4) * 16
            gt = BBox(cell + 2, 2, cell + 12, 12)
            jitter = rng.randint(0, 2)
            pred = BBox(cell + 2 + jitter, 2, cell + 12 + jitter, 12)
            samples.append(_sample(f"s{i}", [gt], size=64))
            records.append(_record(f"s{i}", [pred]))
        ds = Dataset(Path("."), samples)
        base = evaluate_grounding(records, ds).iou_score
        doubled = [
            _record(r.sample_id, [d.bbox for d in r.detections] * 2) for r in records
        ]
        dup = evaluate_grounding(doubled, ds).iou_score
        assert dup.precision == pytest.approx(base.precision / 2)
        assert dup.recall == base.recall

    def test_scope_skipping_counted(self):
        ds, records = _perfect_fixture()
        result = evaluate_grounding(records, ds, scope="all")
        assert result.config_echo["n_skipped_scope"] == len(records)
        assert result.iou_score.n_gt == 0

    def test_config_echo_defaults(self):
        ds, records = _perfect_fixture()
        echo = evaluate_grounding(records, ds).config_echo
        assert echo["iou_threshold"] == 0.5
        assert echo["overlap_threshold"] == 0.5

    def test_micro_average_identity(self):
        ds, records = _perfect_fixture()
        records[0].detections.append(Detection(BBox(20, 20, 30, 30), "x", 1.0))
        result = evaluate_grounding(records, ds)
        tp = sum(e["tp_iou"] for e in result.per_sample)
        n_pred = sum(e["n_pred"] for e in result.per_sample)
        assert result.iou_score.precision == tp / n_pred


class TestMeanMaskIou:
    def _square(self, x0, y0, x1, y1):
        from vqaground.geometry import Polygon

        return Polygon(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

    def test_exact_match_is_one(self):
        poly = self._square(0, 0, 4, 4)
        ds = Dataset(Path("."), [_sample("s0", polygons=[poly], size=4)])
        records = [_record("s0", [BBox(0, 0, 4, 4)])]
        assert mean_mask_iou(records, ds) == 1.0

    def test_all_failed_is_zero(self):
        poly = self._square(0, 0, 4, 4)
        ds = Dataset(Path("."), [_sample("s0", polygons=[poly], size=4)])
        records = [_record("s0", [], error=StageError("vqa", "BackendTimeout", "t"))]
        assert mean_mask_iou(records, ds) == 0.0

    def test_two_sample_mean(self):
        full = self._square(0, 0, 4, 4)
        ds = Dataset(Path("."), [
            _sample("s0", polygons=[full], size=4),
            _sample("s1", polygons=[full], size=4),
        ])
        records = [
            _record("s0", [BBox(0, 0, 4, 4)]),       # IoU 1.0
            _record("s1", [BBox(0, 0, 4, 2)]),       # IoU 0.5
        ]
        assert mean_mask_iou(records, ds) == pytest.approx(0.75)

    def test_missing_image_size(self):
        poly = self._square(0, 0, 4, 4)
        sample = _sample("s0", polygons=[poly], size=4)
        sample.width = None
        ds = Dataset(Path("."), [sample])
        with pytest.raises(MissingImageSize):
            mean_mask_iou([_record("s0", [])], ds)


class TestCriterionAsymmetry:
    def test_overlap_not_symmetric(self):
        pred, gt = BBox(0, 0, 20, 20), BBox(5, 5, 10, 10)
        assert overlap_ratio(pred, gt) == 1.0
        assert overlap_ratio(gt, pred) == pytest.approx(25 / 400)

    def test_invalid_criterion(self):
        with pytest.raises(ValueError):
            MatchCriterion("dice", 0.5)
        with pytest.raises(ValueError):
            MatchCriterion("iou", 0.0)
