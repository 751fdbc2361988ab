"""Mini-batch training with best-on-validation model selection."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import metrics
from ..errors import InvalidInputError, TrainingDivergedError
from ..spectro import PlaneStats, compute_plane_stats, input_standardize, power_normalize
from .optim import Adam, softmax_cross_entropy
from .vgg import VggNet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 8
    lr: float = 0.005
    betas: tuple = (0.9, 0.999)
    weight_decay: float = 0.0
    seed: int = 0
    # random global carrier phase per training sample
    phase_augment: bool = False

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidInputError("epochs must be >= 0 and batch_size >= 1")
        if not self.lr > 0:
            raise InvalidInputError("lr must be positive")


@dataclass
class TrainResult:
    state: dict
    best_epoch: int
    best_val_balanced_acc: float
    history: list = field(default_factory=list)  # (epoch, train_loss, val_balanced_acc)


def condition_inputs(planes, stats: PlaneStats | None = None):
    """Unit-power scaling then per-plane standardisation.

    Returns the conditioned array and the stats used (computed here when not given).
    """
    x = power_normalize(planes)
    if stats is None:
        stats = compute_plane_stats(x)
    return input_standardize(x, stats), stats


def rotate_phase(x, phi):
    """Rotate the (real, imag) planes of ``[B, 2, S, C]`` inputs by per-sample angles.

    A carrier phase offset multiplies every spectrogram cell by ``exp(j*phi)``.
    Applied to standardised planes this assumes zero plane means and equal
    plane scales, which circular symmetry of IQ data provides.
    """
    c = np.cos(phi).astype(x.dtype)[:, None, None]
    s = np.sin(phi).astype(x.dtype)[:, None, None]
    re, im = x[:, 0], x[:, 1]
    return np.stack([c * re - s * im, s * re + c * im], axis=1)


def evaluate_balanced_accuracy(model: VggNet, x, y, batch_size=64) -> float:
    preds = model.predict_proba(x, batch_size).argmax(axis=1)
    cm = metrics.confusion(preds, y, model.config.n_classes)
    return metrics.present_balanced_accuracy(cm)


def train(model: VggNet, x_train, y_train, x_val, y_val, cfg: TrainConfig, progress=None) -> TrainResult:
    """Train in place and return the state of the best validation epoch.

    Epoch 0 is the initialisation; a later epoch replaces the best only when
    its validation balanced accuracy is strictly higher.
    """
    y_train = np.asarray(y_train)
    n = len(y_train)
    if n == 0 or len(y_val) == 0:
        raise InvalidInputError("train and validation sets must be non-empty")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    aug_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(2,)))
    opt = Adam(cfg.lr, cfg.betas[0], cfg.betas[1], weight_decay=cfg.weight_decay)

    best_val = evaluate_balanced_accuracy(model, x_val, y_val)
    best_state = {k: v.copy() for k, v in model.state().items()}
    best_epoch = 0
    history = [(0, float("nan"), best_val)]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            if idx.size < 2:
                continue  # batch statistics undefined for one sample
            xb = x_train[idx]
            if cfg.phase_augment:
                xb = rotate_phase(xb, aug_rng.uniform(0.0, 2 * np.pi, idx.size))
            model.zero_grad()
            logits = model.forward(xb, train=True)
            loss, dlogits = softmax_cross_entropy(logits, y_train[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, b, loss)
            model.backward(dlogits)
            opt.step(model.parameters(), model.gradients())
            losses.append(loss)
        val = evaluate_balanced_accuracy(model, x_val, y_val)
        train_loss = float(np.mean(losses)) if losses else float("nan")
        history.append((epoch, train_loss, val))
        if val > best_val:
            best_val, best_epoch = val, epoch
            best_state = {k: v.copy() for k, v in model.state().items()}
        log.info("epoch %d loss %.4f val_bacc %.4f", epoch, train_loss, val)
        if progress is not None:
            progress(epoch, train_loss, val)
    model.load_state(best_state)
    return TrainResult(best_state, best_epoch, best_val, history)
