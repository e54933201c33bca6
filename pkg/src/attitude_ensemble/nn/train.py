"""Mini-batch training loop and its per-epoch log."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from ..attitude import N_CLASSES
from ..errors import InvalidInputError, StratificationError
from .network import Network, cross_entropy, images_to_tensor, train_pass
from .optim import AdamState, OptimizerConfig, adam_step

log = logging.getLogger(__name__)

LOG_HEADER = ["epoch", "train_loss", "train_acc", "test_loss", "test_acc"]


@dataclass
class DataSplit:
    """Train/test arrays. Inputs are NCHW floats or NHWC uint8 images (converted per batch)."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray | None = None
    y_test: np.ndarray | None = None


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float


def as_input(x, dtype):
    x = np.asarray(x)
    if x.dtype == np.uint8:
        return images_to_tensor(x, dtype)
    return x.astype(dtype, copy=False)


def evaluate(net: Network, x, y, chunk: int = 256) -> tuple[float, float]:
    """Eval-mode (mean cross-entropy, accuracy)."""
    n = len(y)
    total_loss = 0.0
    correct = 0
    for start in range(0, n, chunk):
        xb = as_input(x[start : start + chunk], net.dtype)
        yb = np.asarray(y[start : start + chunk])
        probs = net.forward(xb, mode="eval")
        total_loss += cross_entropy(probs, yb) * len(yb)
        correct += int((probs.argmax(axis=1) == yb).sum())
    return total_loss / n, correct / n


def fit(net: Network, data: DataSplit, cfg: OptimizerConfig, epochs: int, seed: int, progress=None):
    """Train ``net`` in place with Adam; returns (net, list of EpochRecord).

    Shuffling and dropout masks draw from one generator seeded with ``seed``.
    """
    y_train = np.asarray(data.y_train)
    if len(y_train) == 0:
        raise InvalidInputError("training split is empty")
    if len(data.x_train) != len(y_train):
        raise InvalidInputError("x_train and y_train lengths differ")
    missing = sorted(set(range(N_CLASSES)) - set(np.unique(y_train).tolist()))
    if missing:
        raise StratificationError(f"classes {missing} are missing from the training split")
    if epochs < 0:
        raise InvalidInputError("epochs must be >= 0")

    rng = np.random.default_rng(seed)
    state = AdamState.zeros_like(net.params)
    has_test = data.x_test is not None and data.y_test is not None and len(data.y_test) > 0
    history = []
    n = len(y_train)
    bs = int(cfg.batch_size)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            xb = as_input(data.x_train[idx], net.dtype)
            yb = y_train[idx]
            loss, grads, probs = train_pass(net, xb, yb, rng=rng)
            adam_step(net.params, grads, state, cfg)
            loss_sum += loss * len(idx)
            # Accuracy of the train-mode pass that produced the gradients.
            correct += int((probs.argmax(axis=1) == yb).sum())
        train_loss = loss_sum / n
        train_acc = correct / n
        if has_test:
            test_loss, test_acc = evaluate(net, data.x_test, data.y_test)
        else:
            test_loss, test_acc = math.nan, math.nan
        rec = EpochRecord(epoch, train_loss, train_acc, test_loss, test_acc)
        history.append(rec)
        log.info("epoch %d loss %.4f acc %.4f test_loss %.4f test_acc %.4f", *_row(rec))
        if progress is not None:
            progress(rec)
    net.meta.update(
        {
            "train_seed": seed,
            "epochs": epochs,
            "final_train_loss": history[-1].train_loss if history else None,
            "final_test_loss": history[-1].test_loss if history and has_test else None,
        }
    )
    return net, history


def _row(rec: EpochRecord):
    return rec.epoch, rec.train_loss, rec.train_acc, rec.test_loss, rec.test_acc


def write_log_csv(path, history) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for rec in history:
            w.writerow([rec.epoch] + [f"{v:.6g}" for v in _row(rec)[1:]])
