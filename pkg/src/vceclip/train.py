"""Mini-batch fine-tuning with cross-entropy and plateau early stopping."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .dataset import DatasetManifest, batch_iterator
from .errors import ConfigError, DivergenceError, NumericalError, ValidationError
from .images import AugmentationPolicy
from .model import ClipModel
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 30
    learning_rate: float = 1e-4
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 3
    min_delta: float = 1e-4
    seed: int = 0
    freeze_vision: bool = False
    freeze_text: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.min_delta < 0:
            raise ConfigError(f"min_delta must be >= 0, got {self.min_delta}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.adam_eps > 0):
            raise ConfigError("adam betas must lie in [0, 1) and eps must be > 0")


# ----------------------------------------------------------------------------
# optimizers


class SGD:
    def __init__(self, params: Sequence[Tensor], lr: float):
        self.params = list(params)
        self.lr = lr

    def step(self) -> None:
        for p in self.params:
            if p.grad is not None:
                p.data -= self.lr * p.grad


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(model: ClipModel, config: TrainConfig):
    model.set_trainable(vision=not config.freeze_vision, text=not config.freeze_text)
    params = model.trainable_parameters()
    if config.optimizer == "sgd":
        return SGD(params, config.learning_rate)
    return Adam(params, config.learning_rate, (config.beta1, config.beta2), config.adam_eps)


# ----------------------------------------------------------------------------
# steps and evaluation


def train_step(
    model: ClipModel,
    images,
    labels,
    optimizer,
    class_embs: Tensor | None = None,
    epoch: int | None = None,
    batch: int | None = None,
    return_logits: bool = False,
):
    """One forward/backward/update on a batch; returns the batch loss.

    ``class_embs`` may be passed when the text tower is frozen; otherwise
    prompts are re-encoded on the tape so the text tower receives gradients.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValidationError("empty batch")
    tape = T.Tape()
    try:
        with tape:
            embs = model.class_embeddings() if class_embs is None else class_embs
            logits = model.logits(images, embs)
            loss = T.cross_entropy(logits, labels)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericalError("non-finite loss")
            tape.backward(loss)
    except NumericalError as e:
        model.zero_grad()
        raise DivergenceError(f"training diverged at epoch {epoch} batch {batch}: {e}", epoch, batch) from e
    optimizer.step()
    model.head.clamp_scale()
    model.zero_grad()
    tape.reset()
    return (value, logits.data) if return_logits else value


def predict_manifest(
    model: ClipModel, manifest: DatasetManifest, batch_size: int = 32
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Labels, logits and probabilities for every record, no augmentation."""
    class_embs = model.class_embeddings()
    all_logits, all_labels = [], []
    for images, labels in batch_iterator(manifest, batch_size, model.config.image_size):
        all_logits.append(model.logits(images, class_embs).data)
        all_labels.append(labels)
    logits = np.concatenate(all_logits)
    probs = T.softmax(logits, axis=-1).data
    return np.concatenate(all_labels), logits, probs


def evaluate_epoch(model: ClipModel, manifest: DatasetManifest, batch_size: int = 32) -> tuple[float, float]:
    """Mean cross-entropy and accuracy over ``manifest``; mutates nothing."""
    if len(manifest) == 0:
        raise ValidationError("cannot evaluate an empty manifest")
    labels, logits, _ = predict_manifest(model, manifest, batch_size)
    loss = T.cross_entropy(logits, labels).item()
    acc = float(np.mean(np.argmax(logits, axis=1) == labels))
    return loss, acc


# ----------------------------------------------------------------------------
# early stopping and the fit loop


class EarlyStopping:
    """Stop after ``patience`` consecutive epochs without a ``min_delta`` improvement.

    Epochs are numbered from 1.
    """

    def __init__(self, patience: int = 3, min_delta: float = 1e-4):
        self.patience = patience
        self.min_delta = min_delta
        self.best = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0
        self.epoch = 0

    def update(self, val_loss: float) -> bool:
        """Record one epoch; return True when training should stop."""
        self.epoch += 1
        if val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.best_epoch = self.epoch
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience

    @property
    def improved(self) -> bool:
        return self.best_epoch == self.epoch


def simulate_early_stopping(
    val_losses: Sequence[float], patience: int = 3, min_delta: float = 1e-4, max_epochs: int = 30
) -> tuple[int, int, str]:
    """Run the stopping rule over a loss trace: (epochs run, best epoch, reason)."""
    rule = EarlyStopping(patience, min_delta)
    for epoch, loss in enumerate(val_losses[:max_epochs], start=1):
        if rule.update(loss):
            return epoch, rule.best_epoch, "early_stop"
    return min(len(val_losses), max_epochs), rule.best_epoch, "max_epochs"


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    epoch_wall_time: float = 0.0


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int = 0

    def to_dict(self, include_timing: bool = False) -> dict:
        recs = []
        for r in self.records:
            d = asdict(r)
            if not include_timing:
                d.pop("epoch_wall_time")
            recs.append(d)
        return {"best_epoch": self.best_epoch, "stop_reason": self.stop_reason, "epochs": recs}

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "TrainHistory":
        return cls([EpochRecord(**r) for r in d["epochs"]], d["stop_reason"], d["best_epoch"])


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def format_epoch(r: EpochRecord) -> str:
    return (
        f"epoch {r.epoch} train_loss {r.train_loss:.6f} train_acc {r.train_accuracy:.4f} "
        f"val_loss {r.val_loss:.6f} val_acc {r.val_accuracy:.4f} time {r.epoch_wall_time:.2f}s"
    )


def fit(
    model: ClipModel,
    train_manifest: DatasetManifest,
    val_manifest: DatasetManifest,
    config: TrainConfig,
    policy: AugmentationPolicy | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
    workers: int = 0,
) -> tuple[ClipModel, TrainHistory]:
    """Train up to ``config.max_epochs`` and restore the best-validation weights.

    ``policy`` augments training batches only. A :class:`DivergenceError`
    carries the partial history as ``.history``.
    """
    if list(train_manifest.class_names) != list(model.class_names):
        raise ValidationError(
            f"train classes {train_manifest.class_names} != model classes {model.class_names}"
        )
    if list(val_manifest.class_names) != list(model.class_names):
        raise ValidationError(
            f"validation classes {val_manifest.class_names} != model classes {model.class_names}"
        )
    optimizer = make_optimizer(model, config)
    stopper = EarlyStopping(config.patience, config.min_delta)
    history = TrainHistory()
    best_state = model.state_arrays()
    size = model.config.image_size

    for epoch in range(1, config.max_epochs + 1):
        start = time.perf_counter()
        frozen_embs = model.class_embeddings() if config.freeze_text else None
        total_loss, correct, seen = 0.0, 0, 0
        batches = batch_iterator(
            train_manifest,
            config.batch_size,
            size,
            shuffle_seed=_epoch_seed(config.seed, epoch),
            policy=policy,
            epoch=epoch,
            workers=workers,
        )
        try:
            for b, (images, labels) in enumerate(batches):
                loss, logits = train_step(
                    model, images, labels, optimizer, frozen_embs, epoch=epoch, batch=b, return_logits=True
                )
                total_loss += loss * len(labels)
                correct += int(np.sum(np.argmax(logits, axis=1) == labels))
                seen += len(labels)
            val_loss, val_acc = evaluate_epoch(model, val_manifest, config.batch_size)
        except DivergenceError as e:
            e.history = history
            raise
        except NumericalError as e:
            err = DivergenceError(f"validation diverged at epoch {epoch}: {e}", epoch)
            err.history = history
            raise err from e
        record = EpochRecord(
            epoch, total_loss / seen, correct / seen, val_loss, val_acc, time.perf_counter() - start
        )
        history.records.append(record)
        logger.info(format_epoch(record))
        if on_epoch is not None:
            on_epoch(record)
        stop = stopper.update(val_loss)
        if stopper.improved:
            best_state = model.state_arrays()
        if stop:
            history.stop_reason = "early_stop"
            break
    else:
        history.stop_reason = "max_epochs"
    history.best_epoch = stopper.best_epoch
    model.load_state_arrays(best_state)
    return model, history
