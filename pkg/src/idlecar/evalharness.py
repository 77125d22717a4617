"""Cross-validation folds, precision/recall, event matching and pooled reports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .irdata import BoundingBox

CURVES = ("front", "side", "rear", "all")
WINDOW = 36
MAX_WINDOWS = 30


# --- folds -------------------------------------------------------------------


@dataclass(frozen=True)
class Fold:
    train: tuple
    v1: str
    v2: str | None = None


def loco_folds(car_ids):
    """Leave-one-car-out: each car is the held-out V1 once; no early-stopping car."""
    cars = list(car_ids)
    if len(cars) < 2 or len(set(cars)) != len(cars):
        raise UsageError("leave-one-car-out needs at least 2 distinct cars")
    return [Fold(tuple(c for c in cars if c != v1), v1) for v1 in cars]


def ltco_folds(car_ids, seed=0):
    """Leave-two-cars-out: held-out V1 plus a randomly drawn early-stopping car V2."""
    cars = list(car_ids)
    if len(cars) < 3 or len(set(cars)) != len(cars):
        raise UsageError("leave-two-cars-out needs at least 3 distinct cars")
    rng = np.random.default_rng(seed)
    folds = []
    for v1 in cars:
        others = [c for c in cars if c != v1]
        v2 = others[int(rng.integers(len(others)))]
        folds.append(Fold(tuple(c for c in others if c != v2), v1, v2))
    return folds


# --- precision / recall ------------------------------------------------------


@dataclass
class PRCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    n_positives: int
    ap: float = float("nan")

    def points(self):
        return list(zip(self.thresholds.tolist(), self.precision.tolist(), self.recall.tolist()))


def pr_curve(scores, labels, n_positives=None):
    """Precision/recall at every distinct score, sweeping the threshold downward.

    ``n_positives`` defaults to the number of positive labels; pass a larger
    value when some ground-truth positives were never scored (missed events),
    so that recall is measured against all of them.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise UsageError("scores and labels differ in length")
    npos = int(labels.sum()) if n_positives is None else int(n_positives)
    if npos < labels.sum():
        raise UsageError("n_positives is smaller than the number of positive labels")
    if npos == 0:
        raise UsageError("average precision is undefined without positives")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    # last index of each tie group
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True]) if s.size else np.array([], dtype=int)
    thresholds = s[ends]
    precision = tp[ends] / (tp[ends] + fp[ends])
    recall = tp[ends] / npos
    curve = PRCurve(thresholds, precision, recall, npos)
    curve.ap = average_precision(curve)
    return curve


def average_precision(curve):
    """All-points AP: sum of precision times recall increment over thresholds."""
    if curve.recall.size == 0:
        return 0.0
    steps = np.diff(np.r_[0.0, curve.recall])
    return float(np.sum(steps * curve.precision))


# --- events --------------------------------------------------------------------


@dataclass(frozen=True)
class EventPrediction:
    sequence_id: str
    box: BoundingBox
    start: int
    end: int
    score: float = 1.0
    label: str = "idling"
    view: str = ""

    def __post_init__(self):
        if self.start > self.end:
            raise UsageError(f"event interval [{self.start}, {self.end}] is reversed")


def time_overlap(pred, gt):
    """Frames shared by the two intervals, as a fraction of the prediction's length."""
    inter = min(pred.end, gt.end) - max(pred.start, gt.start) + 1
    return max(inter, 0) / (pred.end - pred.start + 1)


def match_events(predictions, ground_truth, area_overlap=0.5, time_overlap_min=0.9):
    """Greedy matching of predicted events to ground-truth events.

    Predictions are visited by descending score. Each takes the unmatched
    ground-truth event of the same sequence and label that has the largest
    time overlap (then IoU), provided IoU >= ``area_overlap`` and time
    overlap >= ``time_overlap_min``. Returns ``(assignment, tp, n_missed)``
    where ``assignment[i]`` is the matched ground-truth index or None.
    """
    from .detect import iou

    by_seq = {}
    for g, gt in enumerate(ground_truth):
        by_seq.setdefault(gt.sequence_id, []).append(g)
    matched = [False] * len(ground_truth)
    assignment = [None] * len(predictions)
    order = sorted(range(len(predictions)), key=lambda i: -predictions[i].score)
    for i in order:
        p = predictions[i]
        best, best_key = None, None
        for g in by_seq.get(p.sequence_id, ()):
            gt = ground_truth[g]
            if matched[g] or gt.label != p.label:
                continue
            a = iou(p.box, gt.box)
            t = time_overlap(p, gt)
            if a >= area_overlap and t >= time_overlap_min and (best_key is None or (t, a) > best_key):
                best, best_key = g, (t, a)
        if best is not None:
            matched[best] = True
            assignment[i] = best
    tp = [a is not None for a in assignment]
    return assignment, tp, matched.count(False)


def sequence_score(scores):
    """Sequence score as the mean of its subsequence scores."""
    scores = list(scores)
    if not scores:
        raise UsageError("sequence_score needs at least one subsequence score")
    return float(np.mean(scores))


def window_starts(length, window=WINDOW, stride=1, cap=MAX_WINDOWS):
    """Start frames of the sliding windows: ``min(L - window + 1, cap)`` of them."""
    if length < window:
        raise UsageError(f"sequence of {length} frames is shorter than the {window}-frame window")
    return list(range(0, length - window + 1, stride))[:cap]


# --- pooled evaluation -----------------------------------------------------------


@dataclass(frozen=True)
class SubsequencePrediction:
    sequence_id: str
    car_id: str
    view: str
    start: int
    box: BoundingBox
    p_idle: float
    length: int = WINDOW
    group: int = 0  # distinguishes several stationary cars within one sequence

    def to_record(self):
        return {"sequence": self.sequence_id, "start": self.start, "p_idle": self.p_idle}


@dataclass(frozen=True)
class SequenceTruth:
    sequence_id: str
    car_id: str
    view: str
    engine_state: str
    box: BoundingBox
    n_frames: int


@dataclass
class FoldResult:
    fold: Fold
    predictions: list


@dataclass
class EvalReport:
    mode: str
    boxes: str
    curves: dict
    per_fold_ap: list = field(default_factory=list)
    n_predictions: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def ap(self):
        return {name: c.ap for name, c in self.curves.items()}

    def summary(self):
        return {
            "mode": self.mode,
            "boxes": self.boxes,
            "ap": self.ap,
            "per_fold_ap": self.per_fold_ap,
            "n_predictions": self.n_predictions,
            **self.meta,
        }

    def write_csv(self, path, digest=None):
        with open(path, "w", newline="") as fh:
            if digest:
                fh.write(f"# config_digest={digest}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["curve", "threshold", "precision", "recall"])
            for name, c in self.curves.items():
                for t, p, r in c.points():
                    w.writerow([name, repr(t), repr(p), repr(r)])

    def write_json(self, path, digest=None):
        data = self.summary()
        if digest:
            data["config_digest"] = digest
        with open(path, "w") as fh:
            json.dump(data, fh, indent=1, sort_keys=True)
            fh.write("\n")


def _events(mode, predictions, truths):
    preds, gts = [], []
    for t in truths:
        if t.engine_state != "idling":
            continue
        if mode == "subsequence":
            for j in window_starts(t.n_frames):
                gts.append(EventPrediction(t.sequence_id, t.box, j, j + WINDOW - 1, view=t.view))
        else:
            gts.append(EventPrediction(t.sequence_id, t.box, 0, t.n_frames - 1, view=t.view))
    if mode == "subsequence":
        for p in predictions:
            preds.append(EventPrediction(p.sequence_id, p.box, p.start, p.start + p.length - 1, p.p_idle, view=p.view))
    else:
        groups = {}
        for p in predictions:
            groups.setdefault((p.sequence_id, p.group), []).append(p)
        for (sid, _), ps in sorted(groups.items()):
            preds.append(
                EventPrediction(
                    sid,
                    ps[0].box,
                    min(p.start for p in ps),
                    max(p.start + p.length - 1 for p in ps),
                    sequence_score(p.p_idle for p in ps),
                    view=ps[0].view,
                )
            )
    return preds, gts


def score_events(mode, predictions, truths, area_overlap=0.5, time_overlap_min=0.9):
    """PR curve of pooled predictions against the idling ground-truth events."""
    preds, gts = _events(mode, predictions, truths)
    _, tp, _ = match_events(preds, gts, area_overlap, time_overlap_min)
    return pr_curve([p.score for p in preds], tp, n_positives=len(gts))


def evaluate(mode, fold_results, truths, boxes="annotated", area_overlap=0.5, time_overlap_min=0.9):
    """Pool held-out predictions across folds and compute per-view and all-view PR/AP.

    ``truths`` lists every sequence's annotation; only sequences of cars that
    were held out (V1) in some fold take part.
    """
    if mode not in ("subsequence", "sequence"):
        raise UsageError(f"unknown evaluation mode {mode!r}")
    if not fold_results:
        raise UsageError("no fold results to evaluate")
    held_out = set()
    pooled = []
    per_fold = []
    for fr in fold_results:
        if fr.fold.v1 in held_out:
            raise UsageError(f"car {fr.fold.v1} held out by more than one fold")
        held_out.add(fr.fold.v1)
        for p in fr.predictions:
            if p.car_id != fr.fold.v1:
                raise UsageError(f"prediction for car {p.car_id} in fold holding out {fr.fold.v1}")
        pooled.extend(fr.predictions)
        fold_truths = [t for t in truths if t.car_id == fr.fold.v1]
        try:
            ap = score_events(mode, fr.predictions, fold_truths, area_overlap, time_overlap_min).ap
        except UsageError:
            ap = None
        per_fold.append({"v1": fr.fold.v1, "v2": fr.fold.v2, "ap": ap})
    truths = [t for t in truths if t.car_id in held_out]
    curves = {}
    for name in CURVES:
        ps = pooled if name == "all" else [p for p in pooled if p.view == name]
        ts = truths if name == "all" else [t for t in truths if t.view == name]
        if not ts:  # view not part of this run
            continue
        curves[name] = score_events(mode, ps, ts, area_overlap, time_overlap_min)
    return EvalReport(mode, boxes, curves, per_fold, len(pooled))
