"""The five classifier families, restart selection, per-fold training and prediction.

Temporal models (svm, cnn1d, lstm) read 36-value shifted max-temperature
windows; spatio-temporal models (cnn2d, cnn_lstm) read (H, W, N) stacks.
Class 1 is "idling", so ``predict`` returns the idling probability.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import UsageError
from ..evalharness import SubsequencePrediction
from ..learncore import checkpoint
from ..learncore.model import (
    LayerSpec,
    ModelSpec,
    conv1d,
    conv2d,
    dense,
    dropout,
    lstm,
    maxpool,
    predict_proba,
    softmax,
)
from ..learncore.optim import OptimizerConfig
from ..learncore.svm import SvmConfig, SvmModel, svm_predict_proba, svm_train
from ..learncore.train import fit

log = logging.getLogger(__name__)

TEMPORAL = ("svm", "cnn1d", "lstm")
SPATIOTEMPORAL = ("cnn2d", "cnn_lstm")
KINDS = TEMPORAL + SPATIOTEMPORAL

# Fixed input scaling: temperature rises of a few degrees for windows,
# absolute temperatures around the ~30 C ambient for stacks.
TEMPORAL_NORM = (0.0, 10.0)
STACK_NORM = (30.0, 10.0)


def family(kind):
    if kind in TEMPORAL:
        return "temporal"
    if kind in SPATIOTEMPORAL:
        return "spatiotemporal"
    raise UsageError(f"unknown model kind {kind!r}")


def _w(filters, width):
    return max(1, int(round(filters * width)))


# --- architectures -------------------------------------------------------------


def cnn1d_spec(window=36, width=1.0):
    return ModelSpec(
        (
            conv1d(_w(64, width)),
            conv1d(_w(64, width)),
            maxpool(2),
            conv1d(_w(128, width)),
            conv1d(_w(128, width)),
            maxpool(2),
            dropout(0.5),
            dense(_w(128, width)),
            dropout(0.5),
            dense(2, "linear"),
            softmax(),
        ),
        (window, 1),
        name="cnn1d",
    )


def lstm_spec(window=36, units=512):
    return ModelSpec(
        (lstm(units, rate=0.5), dense(128), dropout(0.5), dense(2, "linear"), softmax()),
        (window, 1),
        name="lstm",
    )


def cnn2d_spec(size=100, n=7, width=1.0):
    """N sampled frames enter as the channels of one 2-D network."""
    layers = []
    for i, f in enumerate((32, 64, 128, 256)):
        layers += [conv2d(_w(f, width)), conv2d(_w(f, width)), maxpool(2, 2)]
        if i > 0:
            layers.append(dropout(0.5))
    layers += [dense(_w(512, width)), dropout(0.5), dense(2, "linear"), softmax()]
    return ModelSpec(tuple(layers), (size, size, n), name="cnn2d")


def cnn_lstm_spec(size=100, n=7, width=1.0, units=256):
    """Shared per-frame convolutional extractor feeding an LSTM over the N frames."""
    layers = [LayerSpec("frames")]
    for i, f in enumerate((32, 64, 80, 96)):
        layers += [conv2d(_w(f, width)), conv2d(_w(f, width)), maxpool(2, 2)]
        if i > 0:
            layers.append(dropout(0.5))
    layers += [
        LayerSpec("sequence", steps=n),
        lstm(_w(units, width), rate=0.5, recurrent_rate=0.5),
        dropout(0.5),
        dense(2, "linear"),
        softmax(),
    ]
    return ModelSpec(tuple(layers), (size, size, n), name="cnn_lstm")


def default_spec(kind, size=100, n=7, width=1.0):
    if kind == "cnn1d":
        return cnn1d_spec(width=width)
    if kind == "lstm":
        return lstm_spec(units=_w(512, width))
    if kind == "cnn2d":
        return cnn2d_spec(size, n, width)
    if kind == "cnn_lstm":
        return cnn_lstm_spec(size, n, width)
    raise UsageError(f"{kind!r} has no layer graph")


def default_optimizer(kind):
    """Per-family training schedule."""
    if kind == "cnn2d":
        return OptimizerConfig(kind="nesterov_momentum", lr=0.002, momentum=0.1, decay=0.96, decay_steps=100, max_epochs=100)
    if kind == "cnn_lstm":
        return OptimizerConfig(kind="adam", lr=1e-4, max_epochs=70)
    if kind in ("cnn1d", "lstm"):
        return OptimizerConfig(kind="adam", lr=1e-4, max_epochs=100)
    raise UsageError(f"{kind!r} is not trained by gradient descent")


# --- classifier wrapper ----------------------------------------------------------


@dataclass
class Classifier:
    kind: str
    spec: ModelSpec | None = None
    params: dict | None = None
    svm: SvmModel | None = None
    norm: tuple = TEMPORAL_NORM
    seed: int = 0
    v2_acc: float = float("nan")
    history: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)  # run provenance stored in the checkpoint header

    @property
    def family(self):
        return family(self.kind)

    def prepare(self, x):
        """Normalize and reshape a batch of windows or stacks, checking the family."""
        x = np.asarray(x, dtype=np.float32)
        if self.family == "temporal":
            if x.ndim == 1:
                x = x[None]
            if x.ndim != 2:
                raise UsageError(f"{self.kind} expects 36-value windows, got input of shape {x.shape}")
        else:
            if x.ndim == 3:
                x = x[None]
            if x.ndim != 4:
                raise UsageError(f"{self.kind} expects (H, W, N) stacks, got input of shape {x.shape}")
            if tuple(x.shape[1:]) != tuple(self.spec.input_shape):
                raise UsageError(f"{self.kind} expects stacks of shape {self.spec.input_shape}, got {x.shape[1:]}")
        x = (x - self.norm[0]) / self.norm[1]
        if self.kind in ("cnn1d", "lstm"):
            x = x[..., None]
        return x

    def predict(self, x):
        """Idling probability for each window or stack (dropout off)."""
        xp = self.prepare(x)
        if self.kind == "svm":
            return svm_predict_proba(self.svm, xp.astype(np.float64))
        return predict_proba(self.spec, self.params, xp)[:, 1].astype(np.float64)

    # checkpoint I/O

    def _header(self):
        head = {"kind": self.kind, "norm": list(self.norm), "seed": self.seed, "v2_acc": _json_float(self.v2_acc)}
        if self.kind == "svm":
            s = self.svm
            head["svm"] = {"b": s.b, "gamma": s.gamma, "C": s.C, "prob_a": s.prob_a, "prob_b": s.prob_b, "n_iter": s.n_iter}
        else:
            head["model"] = self.spec.to_dict()
        if self.meta:
            head["meta"] = self.meta
        return head

    def tensors(self):
        if self.kind == "svm":
            return {"support": self.svm.support, "coef": self.svm.coef}
        return self.params

    def to_bytes(self):
        return checkpoint.encode_checkpoint(self._header(), self.tensors())

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, buf):
        head, tensors = checkpoint.decode_checkpoint(buf)
        kind = head["kind"]
        v2 = head.get("v2_acc")
        common = dict(
            norm=tuple(head["norm"]),
            seed=head.get("seed", 0),
            v2_acc=float("nan") if v2 is None else v2,
            meta=head.get("meta", {}),
        )
        if kind == "svm":
            s = head["svm"]
            model = SvmModel(
                tensors["support"].astype(np.float64),
                tensors["coef"].astype(np.float64),
                s["b"],
                s["gamma"],
                s["C"],
                s["prob_a"],
                s["prob_b"],
                n_iter=s.get("n_iter", 0),
            )
            return cls(kind, svm=model, **common)
        return cls(kind, spec=ModelSpec.from_dict(head["model"]), params=tensors, **common)

    @classmethod
    def load(cls, path):
        return cls.from_bytes(Path(path).read_bytes())


def _json_float(v):
    return None if v != v else float(v)


def select_restart(candidates):
    """Candidate with the best V2 accuracy; the earliest wins ties."""
    if not candidates:
        raise UsageError("no restarts to choose from")
    best = candidates[0]
    for c in candidates[1:]:
        if c.v2_acc > best.v2_acc or (best.v2_acc != best.v2_acc and c.v2_acc == c.v2_acc):
            best = c
    return best


# --- training ----------------------------------------------------------------------


@dataclass
class TrainOptions:
    """Knobs shared by the per-fold trainers."""

    seeds: tuple = (0, 1)
    width: float = 1.0
    optimizer: OptimizerConfig | None = None
    svm: SvmConfig = field(default_factory=SvmConfig)
    augment: object = None  # callable(batch, rng) applied to stack batches
    patience: int | None = None
    target_train_acc: float | None = None
    max_epochs: int | None = None


def _check_labels(ws, what):
    if len(ws) == 0:
        raise UsageError(f"{what} set is empty")
    if np.any(ws.y < 0):
        raise UsageError(f"{what} set contains unlabeled windows")


def train_classifier(kind, train, v2=None, options=None):
    """Train one model of ``kind``: the best of the restarts on V2, or one SVM."""
    options = options or TrainOptions()
    _check_labels(train, "training")
    if v2 is not None and len(v2) == 0:
        v2 = None
    if v2 is not None:
        _check_labels(v2, "V2")
    fam = family(kind)
    if fam == "temporal" and train.x.ndim != 2 or fam == "spatiotemporal" and train.x.ndim != 4:
        raise UsageError(f"{kind} cannot train on samples of shape {train.x.shape[1:]}")
    norm = TEMPORAL_NORM if fam == "temporal" else STACK_NORM
    if kind == "svm":
        # no epochs to stop early, so the V2 car is used as training data
        data = train if v2 is None else type(train).concat([train, v2])
        clf = Classifier("svm", norm=norm)
        xs = clf.prepare(data.x).astype(np.float64)
        model = svm_train(xs, data.y, options.svm)
        model.support = model.support.astype(np.float32).astype(np.float64)
        model.coef = model.coef.astype(np.float32).astype(np.float64)
        clf.svm = model
        return clf

    size = train.x.shape[1] if fam == "spatiotemporal" else 100
    n = train.x.shape[3] if fam == "spatiotemporal" else 7
    spec = default_spec(kind, size=size, n=n, width=options.width)
    cfg = options.optimizer or default_optimizer(kind)
    if options.max_epochs is not None:
        cfg = replace(cfg, max_epochs=options.max_epochs)
    proto = Classifier(kind, spec=spec, norm=norm)
    xt = proto.prepare(train.x)
    val = (proto.prepare(v2.x), v2.y) if v2 is not None else None
    augment = _normalized_augment(options.augment, norm) if fam == "spatiotemporal" else None
    candidates = []
    for seed in options.seeds:
        res = fit(
            spec,
            cfg,
            (xt, train.y),
            val,
            seed=seed,
            augment=augment,
            patience=options.patience,
            target_train_acc=options.target_train_acc,
        )
        score = res.best_v2_acc if v2 is not None else res.history[-1]["train_acc"]
        log.info("%s restart seed=%d best epoch %d score %.3f", kind, seed, res.best_epoch, score)
        candidates.append(Classifier(kind, spec, res.params, norm=norm, seed=seed, v2_acc=score, history=res.history))
    return select_restart(candidates)


def _normalized_augment(hook, norm):
    """Run an augmentation written for degrees C on normalized batches."""
    if hook is None:
        return None
    offset, scale = norm

    def wrapped(xb, rng):
        return (hook(xb * scale + offset, rng) - offset) / scale

    return wrapped


@dataclass
class FoldModel:
    fold: object
    models: dict  # view name or "all" -> Classifier


def _train_folds(kind, samples, folds, options, per_view, views):
    out = []
    for fold in folds:
        train = samples.cars(fold.train)
        v2 = samples.cars([fold.v2]) if fold.v2 is not None else None
        if per_view:
            models = {v: train_classifier(kind, train.views([v]), v2.views([v]) if v2 else None, options) for v in views}
        else:
            models = {"all": train_classifier(kind, train, v2, options)}
        log.info("fold v1=%s v2=%s trained %s", fold.v1, fold.v2, sorted(models))
        out.append(FoldModel(fold, models))
    return out


def train_temporal(kind, windows, folds, options=None, per_view=False, views=("front", "side", "rear")):
    """Per-fold temporal models, trained on all views together or one per view."""
    if kind not in TEMPORAL:
        raise UsageError(f"{kind!r} is not a temporal model")
    if not folds:
        raise UsageError("no folds to train")
    return _train_folds(kind, windows, folds, options or TrainOptions(), per_view, views)


def train_spatiotemporal(kind, stacks, folds, options=None, per_view=False, views=("front", "side", "rear")):
    """Per-fold stack models; one network for all views unless ``per_view``."""
    if kind not in SPATIOTEMPORAL:
        raise UsageError(f"{kind!r} is not a spatio-temporal model")
    if not folds:
        raise UsageError("no folds to train")
    return _train_folds(kind, stacks, folds, options or TrainOptions(), per_view, views)


def predict_windows(models, samples):
    """Subsequence predictions for every row of ``samples`` using the matching view model."""
    p = np.empty(len(samples))
    for key, clf in models.items():
        mask = np.ones(len(samples), bool) if key == "all" else samples.view == key
        if mask.any():
            p[mask] = clf.predict(samples.x[mask])
    covered = np.zeros(len(samples), bool)
    for key in models:
        covered |= True if key == "all" else samples.view == key
    if not covered.all():
        raise UsageError("no model for some views in the test set")
    return [
        SubsequencePrediction(
            str(samples.sequence_id[i]),
            str(samples.car_id[i]),
            str(samples.view[i]),
            int(samples.start[i]),
            samples.boxes[i],
            float(p[i]),
            group=int(samples.group[i]),
        )
        for i in range(len(samples))
    ]


def write_predictions(path, predictions):
    with open(path, "w") as fh:
        for p in predictions:
            fh.write(json.dumps(p.to_record(), sort_keys=True) + "\n")
