"""SGD-with-momentum training and top-1 evaluation for the 7-class task."""
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ops
from .checkpoint import save_model
from .dataset import NORMALIZATIONS, featurize_entries
from .errors import DivergenceError, InvalidConfig
from .tensor import no_grad

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 4
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    target_frames: int = 128
    # per-sample feature scaling, see dataset.NORMALIZATIONS
    normalization: str = "rms"
    # rescale the gradient when its global L2 norm exceeds this (None: never)
    clip_grad_norm: float = 1.0
    # stop once the validation accuracy reaches this value (None: never)
    stop_at_val_accuracy: float = 1.0

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1 or self.target_frames < 1:
            raise InvalidConfig("epochs, batch_size and target_frames must be positive")
        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise InvalidConfig("need learning_rate >= 0 and 0 <= momentum < 1")
        if self.clip_grad_norm is not None and not self.clip_grad_norm > 0:
            raise InvalidConfig("clip_grad_norm must be positive or None")
        if self.normalization not in NORMALIZATIONS:
            raise InvalidConfig(f"unknown normalization {self.normalization!r}; expected one of {NORMALIZATIONS}")
        return self


@dataclass
class EvalResult:
    top1_accuracy: float
    confusion: np.ndarray

    def to_dict(self):
        return {"top1_accuracy": self.top1_accuracy, "confusion": self.confusion.tolist()}


@dataclass
class TrainReport:
    config: dict
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = -1.0
    stopped_early: bool = False

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def write(self, path):
        Path(path).write_text(self.to_json())


def confusion_matrix(y_true, y_pred, n_classes):
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def evaluate_predictions(y_true, y_pred, n_classes=7):
    cm = confusion_matrix(y_true, y_pred, n_classes)
    total = int(cm.sum())
    return EvalResult(float(np.trace(cm)) / total if total else 0.0, cm)


def evaluate(model, x, y, batch_size=16):
    """Top-1 accuracy and confusion matrix (rows: true class, columns: predicted)."""
    if len(x) == 0:
        raise InvalidConfig("cannot evaluate an empty split")
    pred = model.predict_proba(x, batch_size).argmax(axis=1)
    return evaluate_predictions(y, pred, model.spec.num_classes)


class SGD:
    """Momentum SGD: ``v = momentum * v + grad; p -= lr * v``."""

    def __init__(self, params, lr, momentum, clip_grad_norm=None):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.clip_grad_norm = clip_grad_norm
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def grad_norm(self):
        return math.sqrt(sum(float(np.vdot(p.grad, p.grad)) for p in self.params if p.grad is not None))

    def step(self):
        lr = self.lr
        factor = 1.0
        if self.clip_grad_norm is not None:
            norm = self.grad_norm()
            if norm > self.clip_grad_norm:
                factor = self.clip_grad_norm / norm
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            v *= p.data.dtype.type(self.momentum)
            v += p.grad if factor == 1.0 else p.grad * p.data.dtype.type(factor)
            p.data -= p.data.dtype.type(lr) * v


def train_arrays(model, x_train, y_train, x_val, y_val, cfg, checkpoint_path=None, progress=None):
    """Train on pre-featurised arrays; see :func:`train`."""
    cfg.validate()
    if len(x_train) == 0 or len(x_val) == 0:
        raise InvalidConfig("training needs non-empty train and val splits")
    rng = np.random.default_rng(cfg.seed)
    opt = SGD(model.parameters(), cfg.learning_rate, cfg.momentum, cfg.clip_grad_norm)
    report = TrainReport(config=asdict(cfg))
    n = len(x_train)
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for step, start in enumerate(range(0, n, cfg.batch_size), 1):
            idx = order[start : start + cfg.batch_size]
            opt.zero_grad()
            # overflow shows up as a non-finite loss, reported below
            with np.errstate(over="ignore", invalid="ignore"):
                logits = model.forward(x_train[idx])
                loss = ops.softmax_cross_entropy(logits, y_train[idx])
                value = float(loss.item())
                if not math.isfinite(value):
                    raise DivergenceError(epoch, step, value)
                loss.backward()
                opt.step()
            loss_sum += value * len(idx)
            correct += int((logits.data.argmax(axis=1) == y_train[idx]).sum())
        val = evaluate(model, x_val, y_val, cfg.batch_size)
        row = {
            "epoch": epoch,
            "loss": loss_sum / n,
            "train_accuracy": correct / n,
            "val_accuracy": val.top1_accuracy,
        }
        report.epochs.append(row)
        if val.top1_accuracy > report.best_val_accuracy:
            report.best_val_accuracy = val.top1_accuracy
            report.best_epoch = epoch
            if checkpoint_path is not None:
                save_model(model, checkpoint_path)
        if progress is not None:
            progress(
                f"epoch {epoch:3d}  loss {row['loss']:.4f}  train {row['train_accuracy']:.3f}  "
                f"val {row['val_accuracy']:.3f}  ({time.perf_counter() - started:.1f}s)"
            )
        if cfg.stop_at_val_accuracy is not None and val.top1_accuracy >= cfg.stop_at_val_accuracy:
            report.stopped_early = epoch < cfg.epochs
            break
    return report


def train(model, dataset, cfg=TrainConfig(), checkpoint_path=None, progress=None):
    """Featurise the manifest's train/val splits and train ``model`` in place.

    Shuffle order, and therefore the whole run, is fixed by ``cfg.seed``.
    The checkpoint at ``checkpoint_path`` is rewritten whenever the
    validation accuracy improves.
    """
    cfg.validate()
    x_train, y_train = featurize_entries(dataset.split("train"), cfg.target_frames, cfg.normalization)
    x_val, y_val = featurize_entries(dataset.split("val"), cfg.target_frames, cfg.normalization)
    return train_arrays(model, x_train, y_train, x_val, y_val, cfg, checkpoint_path, progress)
