import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import average_precision_score

from idlecar.errors import UsageError
from idlecar.evalharness import (
    CURVES,
    EventPrediction,
    Fold,
    FoldResult,
    SequenceTruth,
    SubsequencePrediction,
    evaluate,
    loco_folds,
    ltco_folds,
    match_events,
    pr_curve,
    sequence_score,
    time_overlap,
    window_starts,
)
from idlecar.irdata import BoundingBox

CARS = [f"car{i:02d}" for i in range(8)]


def brute_force_ap(scores, labels):
    """Enumerate every distinct threshold and recompute precision/recall from scratch."""
    npos = sum(labels)
    ap, prev_recall = 0.0, 0.0
    for thr in sorted(set(scores), reverse=True):
        kept = [lab for s, lab in zip(scores, labels) if s >= thr]
        tp = sum(kept)
        precision = tp / len(kept)
        recall = tp / npos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


# --- folds --------------------------------------------------------------------------


def test_loco_folds():
    folds = loco_folds(CARS)
    assert len(folds) == 8
    for f in folds:
        assert len(f.train) == 7 and f.v1 not in f.train and f.v2 is None
    assert sorted(f.v1 for f in folds) == CARS


def test_ltco_folds():
    folds = ltco_folds(CARS, seed=3)
    assert folds == ltco_folds(CARS, seed=3)
    assert sorted(f.v1 for f in folds) == CARS
    for f in folds:
        assert len(f.train) == 6
        assert f.v2 != f.v1 and f.v2 not in f.train and f.v1 not in f.train
    with pytest.raises(UsageError):
        ltco_folds(CARS[:2])
    with pytest.raises(UsageError):
        loco_folds(CARS[:1])


# --- AP -----------------------------------------------------------------------------


def test_ap_worked_examples():
    assert pr_curve([0.9, 0.8, 0.7], [1, 0, 1]).ap == pytest.approx(0.8333333333333333, abs=1e-9)
    assert pr_curve([0.9, 0.8], [0, 1]).ap == 0.5
    assert pr_curve([0.9, 0.5, 0.1], [1, 1, 0]).ap == 1.0


def test_ap_missed_positives_lower_recall():
    c = pr_curve([0.9, 0.8], [1, 1], n_positives=4)
    assert c.ap == 0.5 and c.recall[-1] == 0.5
    with pytest.raises(UsageError):
        pr_curve([0.9], [0])


def test_ties_form_one_threshold():
    c = pr_curve([0.5, 0.5, 0.5], [1, 0, 1])
    assert c.thresholds.tolist() == [0.5]
    assert c.ap == pytest.approx(2 / 3)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0]), st.booleans()), min_size=1, max_size=12))
def test_ap_matches_brute_force_and_sklearn(pairs):
    scores = [s for s, _ in pairs]
    labels = [int(b) for _, b in pairs]
    if not any(labels):
        with pytest.raises(UsageError):
            pr_curve(scores, labels)
        return
    c = pr_curve(scores, labels)
    assert c.ap == pytest.approx(brute_force_ap(scores, labels), abs=1e-12)
    assert c.ap == pytest.approx(average_precision_score(labels, scores), abs=1e-12)
    assert np.all(np.diff(c.recall) >= 0)
    assert np.all((0 <= c.precision) & (c.precision <= 1))


# --- event matching -----------------------------------------------------------------


def _ev(start, end, score=1.0, box=(0, 0, 10, 10), sid="s"):
    return EventPrediction(sid, BoundingBox(*box), start, end, score)


def test_identical_event_matches():
    _, tp, missed = match_events([_ev(0, 35)], [_ev(0, 35)])
    assert tp == [True] and missed == 0


def test_time_overlap_below_threshold_fails():
    pred = _ev(0, 9, box=(0, 0, 10, 10))
    gt = _ev(5, 40, box=(0, 0, 10, 6))  # IoU 0.6, half the prediction overlaps
    assert time_overlap(pred, gt) == 0.5
    _, tp, missed = match_events([pred], [gt])
    assert tp == [False] and missed == 1


def test_two_predictions_one_truth():
    preds = [_ev(0, 35, 0.4), _ev(0, 35, 0.8)]
    assignment, tp, missed = match_events(preds, [_ev(0, 35)])
    assert tp == [False, True] and assignment == [None, 0] and missed == 0


def test_matching_respects_sequence_and_label():
    gt = _ev(0, 35, sid="a")
    assert match_events([_ev(0, 35, sid="b")], [gt])[1] == [False]
    other = EventPrediction("a", BoundingBox(0, 0, 10, 10), 0, 35, label="stopped")
    assert match_events([other], [gt])[1] == [False]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 10), st.integers(0, 10))
def test_matching_invariants(seed, n_pred, n_gt):
    rng = np.random.default_rng(seed)

    def rand_event():
        s = int(rng.integers(0, 20))
        return EventPrediction(
            str(rng.integers(0, 2)), BoundingBox(*rng.uniform(0, 5, 2), *rng.uniform(5, 10, 2)), s, s + int(rng.integers(0, 40)), float(rng.random())
        )

    preds = [rand_event() for _ in range(n_pred)]
    gts = [rand_event() for _ in range(n_gt)]
    assignment, tp, missed = match_events(preds, gts)
    used = [a for a in assignment if a is not None]
    assert len(used) == len(set(used))
    assert sum(tp) + missed == n_gt


def test_sequence_score_and_windows():
    assert sequence_score([0.6, 0.8]) == pytest.approx(0.7)
    assert sequence_score([0.3]) == 0.3
    with pytest.raises(UsageError):
        sequence_score([])
    assert len(window_starts(36)) == 1
    assert len(window_starts(60)) == 25
    assert window_starts(80) == list(range(30))
    with pytest.raises(UsageError):
        window_starts(35)


@settings(max_examples=100, deadline=None)
@given(st.integers(36, 500))
def test_window_count_formula(length):
    starts = window_starts(length)
    assert len(starts) == min(length - 36 + 1, 30)
    assert starts[-1] + 36 <= length


# --- pooled evaluation --------------------------------------------------------------


def _toy_run(n_frames=40, flip_car=None):
    """Truths for 3 cars x 3 views x 2 states and a perfect (or partly inverted) predictor."""
    box = BoundingBox(10, 10, 50, 40)
    truths, results = [], []
    cars = CARS[:3]
    folds = loco_folds(cars)
    for fold in folds:
        preds = []
        for view in ("front", "side", "rear"):
            for state in ("idling", "stopped"):
                sid = f"{fold.v1}_{view}_{state}"
                truths.append(SequenceTruth(sid, fold.v1, view, state, box, n_frames))
                p = 0.9 if state == "idling" else 0.1
                if fold.v1 == flip_car:
                    p = 1 - p
                for j in window_starts(n_frames):
                    preds.append(SubsequencePrediction(sid, fold.v1, view, j, box, p))
        results.append(FoldResult(fold, preds))
    return truths, results


def test_evaluate_perfect_and_curves(tmp_path):
    truths, results = _toy_run()
    for mode in ("subsequence", "sequence"):
        rep = evaluate(mode, results, truths)
        assert set(rep.curves) == set(CURVES)
        assert all(ap == 1.0 for ap in rep.ap.values())
        assert rep.n_predictions == sum(len(r.predictions) for r in results)
    rep.write_csv(tmp_path / "r.csv", digest="abc")
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0] == "# config_digest=abc"
    header = next(csv.reader([rows[1]]))
    assert header == ["curve", "threshold", "precision", "recall"]
    rep.write_json(tmp_path / "r.json", digest="abc")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["config_digest"] == "abc" and set(data["ap"]) == set(CURVES)


def test_evaluate_inverted_car_hurts():
    truths, results = _toy_run(flip_car="car01")
    rep = evaluate("sequence", results, truths)
    assert rep.ap["all"] < 1.0
    assert [f["ap"] for f in rep.per_fold_ap][1] < 1.0


def test_evaluate_rejects_leaks_and_missing_folds():
    truths, results = _toy_run()
    with pytest.raises(UsageError):
        evaluate("sequence", [], truths)
    leak = FoldResult(Fold(("car01",), "car00"), [results[1].predictions[0]])
    with pytest.raises(UsageError):
        evaluate("sequence", [leak], truths)
    with pytest.raises(UsageError):
        evaluate("frames", results, truths)
