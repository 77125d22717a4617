"""End-to-end experiment: build samples, train per fold, predict held-out cars, evaluate.

Training always uses annotated boxes. At test time the held-out car's
windows come either from the annotations or from the detect -> track
stage (the end-to-end setting).
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .classify import features as F
from .classify.augment import AugmentConfig, batch_augmenter
from .classify.models import FoldModel, TrainOptions, default_optimizer, family, predict_windows, train_spatiotemporal, train_temporal
from .detect import DetectorConfig, detect_sequence
from .errors import UsageError
from .evalharness import FoldResult, SequenceTruth, evaluate, loco_folds, ltco_folds, window_starts
from .irdata import load_sequence, read_annotations
from .thermosim import load_manifest
from .track import build_tracks, filter_stationary

log = logging.getLogger(__name__)

ALL_VIEWS = ("front", "side", "rear")


@dataclass
class StudyConfig:
    """Experiment protocol knobs; keys match the ``train``/``eval`` config sections."""

    folds: str = "ltco"  # or "loco"
    seed: int = 0
    restarts: int = 2
    size: int = 100  # stack side, pixels
    n: int = 7  # frames per stack
    width: float = 1.0  # filter-count multiplier for the neural models
    train_stride: int = 1  # keep every k-th training window
    max_epochs: int | None = None  # None: the per-family default
    patience: int | None = None
    batch_size: int = 32
    optimizer: str | None = None  # None: the per-family default; else "adam" or "nesterov_momentum"
    lr: float | None = None
    augment: bool = True
    views: str = "all"  # "all" trains one model on every view

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown study keys: {sorted(unknown)}")
        return cls(**data)

    def as_dict(self):
        return dataclasses.asdict(self)

    def view_list(self):
        if self.views == "all":
            return ALL_VIEWS
        if self.views not in ALL_VIEWS:
            raise UsageError(f"unknown view {self.views!r}")
        return (self.views,)

    def options(self, kind):
        opt = None
        if kind != "svm":
            opt = dataclasses.replace(default_optimizer(kind), batch_size=self.batch_size)
            if self.optimizer is not None:
                opt = dataclasses.replace(opt, kind=self.optimizer)
            if self.lr is not None:
                opt = dataclasses.replace(opt, lr=self.lr)
        seeds = tuple(self.seed * 1000 + r for r in range(self.restarts))
        aug = batch_augmenter(AugmentConfig()) if self.augment and family(kind) == "spatiotemporal" else None
        return TrainOptions(
            seeds=seeds,
            width=self.width,
            optimizer=opt,
            augment=aug,
            patience=self.patience,
            max_epochs=self.max_epochs,
        )


# --- dataset access ----------------------------------------------------------------


@dataclass
class Dataset:
    root: Path
    sequences: list  # IRSequence
    annotations: dict  # sequence_id -> Annotation

    @property
    def car_ids(self):
        return sorted({s.car_id for s in self.sequences})

    def truths(self):
        return [
            SequenceTruth(s.sequence_id, s.car_id, s.view, s.engine_state, self.annotations[s.sequence_id].box, len(s))
            for s in self.sequences
        ]

    def select(self, cars=None, views=None):
        seqs = [
            s for s in self.sequences if (cars is None or s.car_id in cars) and (views is None or s.view in views)
        ]
        return Dataset(self.root, seqs, self.annotations)


def load_dataset(root):
    root = Path(root)
    if not (root / "manifest.json").exists():
        raise UsageError(f"no dataset manifest in {root}")
    manifest = load_manifest(root)
    anns = read_annotations(root / "annotations.jsonl")
    seqs = []
    for entry in manifest["sequences"]:
        seq = load_sequence(root / entry["file"])
        if seq.sequence_id not in anns:
            raise UsageError(f"sequence {seq.sequence_id} has no annotation")
        seqs.append(seq)
    return Dataset(root, seqs, anns)


# --- samples ------------------------------------------------------------------------


def sequence_samples(seq, box, fam, size, n, starts=None, group=0):
    if fam == "temporal":
        return F.temporal_windows(seq, box, starts, group)
    return F.stack_windows(seq, box, starts, n=n, size=size, group=group)


def annotated_samples(dataset, fam, size=100, n=7, stride=1):
    """Windows of every sequence at its annotated box."""
    sets = []
    for seq in dataset.sequences:
        starts = window_starts(len(seq))[::stride]
        sets.append(sequence_samples(seq, dataset.annotations[seq.sequence_id].box, fam, size, n, starts))
    return F.WindowSet.concat(sets)


def stationary_cars(seq, detector=None, per_frame=None):
    """Stationary cars found by the detector and tracker (or in given detections)."""
    per_frame = per_frame if per_frame is not None else detect_sequence(seq, detector or DetectorConfig())
    return filter_stationary(build_tracks(per_frame))


def detected_samples(dataset, fam, size=100, n=7, cars=None, detector=None):
    """Windows at the averaged box of every stationary car, within the car's track span.

    ``cars`` maps sequence_id to stationary cars (anything with ``avg_box``,
    ``start_frame`` and ``end_frame``); missing entries are detected here.
    """
    sets = []
    for seq in dataset.sequences:
        found = cars.get(seq.sequence_id) if cars is not None else None
        if found is None:
            found = stationary_cars(seq, detector)
        for k, car in enumerate(found):
            length = min(car.end_frame, len(seq) - 1) - car.start_frame + 1
            if length < F.WINDOW:
                continue
            starts = [car.start_frame + j for j in window_starts(length)]
            sets.append(sequence_samples(seq, car.avg_box, fam, size, n, starts, group=k))
    return F.WindowSet.concat(sets)


# --- protocol -----------------------------------------------------------------------


def make_folds(car_ids, cfg):
    if cfg.folds == "ltco":
        return ltco_folds(car_ids, cfg.seed)
    if cfg.folds == "loco":
        return loco_folds(car_ids)
    raise UsageError(f"unknown fold scheme {cfg.folds!r}")


def train_folds(kind, dataset, cfg, samples=None):
    """Train every fold on annotated windows; returns ``(folds, [FoldModel])``."""
    fam = family(kind)
    views = cfg.view_list()
    data = dataset.select(views=views)
    if samples is None:
        samples = annotated_samples(data, fam, cfg.size, cfg.n, cfg.train_stride)
    folds = make_folds(dataset.car_ids, cfg)
    per_view = cfg.views != "all"
    trainer = train_temporal if fam == "temporal" else train_spatiotemporal
    models = trainer(kind, samples, folds, cfg.options(kind), per_view=per_view, views=views)
    return folds, models


def predict_folds(kind, dataset, fold_models, cfg, boxes="annotated", cars=None, detector=None):
    """Held-out predictions for each fold's V1 car."""
    fam = family(kind)
    views = cfg.view_list()
    results = []
    for fm in fold_models:
        held = dataset.select(cars=[fm.fold.v1], views=views)
        if boxes == "annotated":
            test = annotated_samples(held, fam, cfg.size, cfg.n)
        elif boxes == "detected":
            test = detected_samples(held, fam, cfg.size, cfg.n, cars, detector)
        else:
            raise UsageError(f"unknown box source {boxes!r}")
        preds = predict_windows(fm.models, test) if len(test) else []
        results.append(FoldResult(fm.fold, preds))
    return results


@dataclass
class StudyResult:
    kind: str
    fold_models: list
    predictions: dict = field(default_factory=dict)  # boxes -> [FoldResult]
    reports: dict = field(default_factory=dict)  # (boxes, mode) -> EvalReport


def run_study(kind, dataset, cfg, boxes=("annotated", "detected"), modes=("subsequence", "sequence"), detector=None):
    """Train ``kind`` under the fold protocol and evaluate every (box source, mode) pair."""
    _, fold_models = train_folds(kind, dataset, cfg)
    out = StudyResult(kind, fold_models)
    truths = [t for t in dataset.truths() if t.view in cfg.view_list()]
    cars = None
    if "detected" in boxes:
        cars = {s.sequence_id: stationary_cars(s, detector) for s in dataset.select(views=cfg.view_list()).sequences}
    for b in boxes:
        out.predictions[b] = predict_folds(kind, dataset, fold_models, cfg, b, cars, detector)
        for mode in modes:
            rep = evaluate(mode, out.predictions[b], truths, boxes=b)
            rep.meta["model"] = kind
            out.reports[(b, mode)] = rep
    return out


def fold_model_paths(out_dir, fold_models, kind):
    """Checkpoint file names for trained fold models."""
    out_dir = Path(out_dir)
    paths = {}
    for i, fm in enumerate(fold_models):
        for view in fm.models:
            paths[(i, view)] = out_dir / f"{kind}_fold{i:02d}_{fm.fold.v1}_{view}.ckpt"
    return paths


def restore_fold_models(folds, checkpoints):
    """Rebuild ``FoldModel`` objects from ``{(fold_index, view): Classifier}``."""
    out = []
    for i, fold in enumerate(folds):
        models = {view: clf for (j, view), clf in sorted(checkpoints.items()) if j == i}
        if not models:
            raise UsageError(f"no checkpoint for fold {i} (held-out car {fold.v1})")
        out.append(FoldModel(fold, models))
    return out


__all__ = [
    "StudyConfig",
    "Dataset",
    "StudyResult",
    "load_dataset",
    "annotated_samples",
    "detected_samples",
    "stationary_cars",
    "make_folds",
    "train_folds",
    "predict_folds",
    "run_study",
    "fold_model_paths",
    "restore_fold_models",
]
