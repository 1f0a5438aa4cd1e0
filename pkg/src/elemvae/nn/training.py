"""Dataset splitting and the generic minibatch training loop."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .network import Params, backward, forward, predict
from .optim import OptimizerSpec, init_state, optimizer_step
from .spec import NetworkSpec

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Raised when a loss becomes NaN or infinite."""


@dataclass(frozen=True)
class TrainConfig:
    beta: float = 0.03
    epochs: int = 2000
    batch_size: int = 32
    split: float = 0.67
    seed: int = 0
    granularity: str = "row"
    # BCE is summed over features and averaged over the batch; beta is relative to it
    reduction: str = "sum_features_mean_batch"

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not 0.0 < self.split < 1.0:
            raise ValueError(f"split fraction must be in (0, 1), got {self.split}")
        if self.granularity not in ("row", "entity"):
            raise ValueError(f"unknown split granularity {self.granularity!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


@dataclass
class History:
    records: list[dict] = field(default_factory=list)

    def append(self, **values):
        self.records.append({k: float(v) for k, v in values.items()})

    def column(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.records])

    def __len__(self):
        return len(self.records)


def split_indices(labels, fraction: float, seed: int, granularity: str = "row",
                  stratify=None) -> tuple[np.ndarray, np.ndarray]:
    """Train/test row indices.

    ``entity`` keeps all rows sharing a label on one side; ``row`` shuffles rows.
    With ``stratify`` (row mode only) each class is split separately. The train
    share is ``round(fraction * count)``.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"split fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    labels = list(labels)
    if granularity == "entity":
        entities = list(dict.fromkeys(labels))
        order = rng.permutation(len(entities))
        n_train = int(round(fraction * len(entities)))
        train_set = {entities[i] for i in order[:n_train]}
        mask = np.array([lab in train_set for lab in labels])
        return np.flatnonzero(mask), np.flatnonzero(~mask)
    if granularity != "row":
        raise ValueError(f"unknown split granularity {granularity!r}")
    groups = [np.arange(len(labels))] if stratify is None else [
        np.flatnonzero(np.asarray(stratify) == c) for c in sorted(set(stratify))]
    train, test = [], []
    for idx in groups:
        idx = idx[rng.permutation(len(idx))]
        n_train = int(round(fraction * len(idx)))
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split_dataset(matrix, fraction: float = 0.67, seed: int = 0, granularity: str = "row",
                  stratify=None):
    """Split a FeatureMatrix into (train, test) FeatureMatrix objects."""
    train_idx, test_idx = split_indices(matrix.row_labels, fraction, seed, granularity, stratify)
    return matrix.take(train_idx), matrix.take(test_idx)


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def check_finite(value: float, what: str, epoch: int):
    if not np.isfinite(value):
        raise TrainingDiverged(f"{what} became non-finite ({value}) at epoch {epoch}")


LossFn = Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray]]


def evaluate_loss(spec, params, loss_fn: LossFn, x, y, batch_size: int = 1024) -> float:
    if len(x) == 0:
        return float("nan")
    return loss_fn(predict(spec, params, x, batch_size), y)[0]


def train(spec: NetworkSpec, params: Params, train_data, loss_fn: LossFn,
          opt: OptimizerSpec, config: TrainConfig, test_data=None) -> tuple[Params, History]:
    """Minibatch training of a single network on ``(x, y)`` pairs.

    ``params`` is updated in place and returned with a per-epoch history of
    ``train_loss`` (mean over the epoch's batches) and ``test_loss`` (eval mode).
    """
    x, y = (np.asarray(a, dtype=float) for a in train_data)
    rng = np.random.default_rng(config.seed)
    state = init_state(params)
    history = History()
    for epoch in range(config.epochs):
        total, seen = 0.0, 0
        for idx in minibatches(len(x), config.batch_size, rng):
            trace = forward(spec, params, x[idx], mode="train", seed=rng)
            loss, grad = loss_fn(trace.output, y[idx])
            check_finite(loss, "training loss", epoch)
            grads, _ = backward(spec, params, trace, grad)
            optimizer_step(opt, state, params, grads)
            total += loss * len(idx)
            seen += len(idx)
        test_loss = float("nan") if test_data is None else evaluate_loss(
            spec, params, loss_fn, *test_data)
        history.append(epoch=epoch, train_loss=total / max(seen, 1), test_loss=test_loss)
        log.debug("epoch %d train %.5f test %.5f", epoch, total / max(seen, 1), test_loss)
    return params, history
