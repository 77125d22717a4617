"""Mini-batch training with best-on-V2 weight retention."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import UsageError
from . import layers as L
from . import optim
from .model import backward, forward, init_params, predict_proba

log = logging.getLogger(__name__)


@dataclass
class FitResult:
    params: dict
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_v2_acc: float = float("nan")

    def write_history(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "train_acc", "v2_acc"])
            for h in self.history:
                w.writerow([h["epoch"], repr(h["train_loss"]), repr(h["train_acc"]), repr(h["v2_acc"])])


def accuracy(spec, params, x, y, batch_size=256):
    p = predict_proba(spec, params, x, batch_size)
    return float(np.mean(p.argmax(axis=1) == y))


def fit(
    spec,
    cfg,
    train,
    val=None,
    seed=0,
    augment=None,
    patience=None,
    params=None,
    target_train_acc=None,
    eval_batch=256,
):
    """Minimize cross entropy on ``train = (x, y)``.

    After each epoch the accuracy on ``val`` (the early-stopping set V2) is
    recorded and the weights with the best V2 accuracy are kept; without
    ``val`` the final weights are returned. ``augment(batch, rng)`` is applied
    to every training batch. Training stops after ``cfg.max_epochs``, after
    ``patience`` epochs without V2 improvement, or once the training-set
    accuracy (dropout off) reaches ``target_train_acc``.
    """
    x, y = train
    if len(x) == 0:
        raise UsageError("empty training set")
    if val is not None and len(val[0]) == 0:
        raise UsageError("empty validation set")
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng(seed)
    if params is None:
        params = init_params(spec, rng)
    state = optim.init_state(params, cfg)
    result = FitResult(params=params)
    best_acc, since_best, global_step = -1.0, 0, 0
    n = len(x)
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for s in range(0, n, cfg.batch_size):
            idx = np.sort(order[s : s + cfg.batch_size])
            xb = x[idx]
            if augment is not None:
                xb = augment(xb, rng)
            logits, caches = forward(spec, params, xb, training=True, rng=rng)
            loss, dlogits = L.softmax_cross_entropy(logits, y[idx])
            grads, _ = backward(spec, params, caches, dlogits)
            params, state = optim.step(state, params, grads, cfg, global_step)
            global_step += 1
            loss_sum += loss * len(idx)
            correct += int(np.sum(logits.argmax(axis=1) == y[idx]))
        train_acc = correct / n
        v2_acc = accuracy(spec, params, val[0], val[1], eval_batch) if val is not None else float("nan")
        result.history.append(
            {"epoch": epoch + 1, "train_loss": loss_sum / n, "train_acc": train_acc, "v2_acc": v2_acc}
        )
        log.debug("epoch %d loss %.4f acc %.3f v2 %.3f", epoch + 1, loss_sum / n, train_acc, v2_acc)
        if val is not None:
            if v2_acc > best_acc:
                best_acc, since_best = v2_acc, 0
                result.params = {k: v.copy() for k, v in params.items()}
                result.best_epoch = epoch + 1
                result.best_v2_acc = v2_acc
            else:
                since_best += 1
                if patience is not None and since_best >= patience:
                    break
        if target_train_acc is not None:
            clean_acc = accuracy(spec, params, x, y, eval_batch)
            result.history[-1]["train_eval_acc"] = clean_acc
            if clean_acc >= target_train_acc:
                break
    if val is None:
        result.params = params
        result.best_epoch = len(result.history)
    return result
