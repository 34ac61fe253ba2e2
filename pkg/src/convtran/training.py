"""Mini-batch training with Adam and validation-loss early stopping."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Adam, EarlyStopper, count_parameters, no_grad
from .autodiff import functional as F
from .data import TimeSeriesDataset, pad_to_length, stratified_split, znormalize
from .model import ConvTranNet, ModelConfig

log = logging.getLogger(__name__)


@dataclass
class TrainSettings:
    epochs: int = 100
    patience: int = 20
    batch: int = 16
    lr: float = 1e-3
    val_fraction: float = 0.8  # share of the train file kept for fitting
    znorm: bool = True


@dataclass
class RunRecord:
    dataset: str
    config: dict
    seed: int
    test_accuracy: float
    test_loss: float
    epochs_run: int
    best_epoch: int
    best_val_loss: float
    parameter_count: int
    settings: dict = field(default_factory=dict)
    wall_time: float = 0.0
    status: str = "ok"

    def to_json(self, timing: bool = True) -> str:
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return json.dumps(d, indent=2, sort_keys=True)


def _batches(n: int, batch: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    chunks = [order[i : i + batch] for i in range(0, n, batch)]
    # batch norm cannot normalize a single sample
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks.pop()])
    return chunks


def evaluate(net: ConvTranNet, ds: TimeSeriesDataset, batch: int = 64) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) in eval mode."""
    was_training = net.training
    net.eval()
    correct, total_loss = 0, 0.0
    with no_grad():
        for i in range(0, ds.n, batch):
            x = ds.samples[i : i + batch]
            y = ds.labels[i : i + batch]
            logits = net(x)
            total_loss += F.cross_entropy(logits, y).item() * len(y)
            correct += int((logits.data.argmax(axis=1) == y).sum())
    net.train(was_training)
    return correct / ds.n, total_loss / ds.n


def fit(net: ConvTranNet, train: TimeSeriesDataset, val: TimeSeriesDataset | None,
        settings: TrainSettings, seed: int = 0) -> EarlyStopper:
    """Train in place; the weights of the best validation epoch are restored at the end."""
    rng = np.random.default_rng(seed + 7919)
    opt = Adam(net.parameters(), lr=settings.lr)
    stopper = EarlyStopper(patience=settings.patience)
    monitor = val if val is not None and val.n > 0 else train
    for epoch in range(settings.epochs):
        net.train()
        for idx in _batches(train.n, settings.batch, rng):
            loss = F.cross_entropy(net(train.samples[idx]), train.labels[idx])
            loss.backward()
            opt.step()
        _, val_loss = evaluate(net, monitor)
        decision = stopper.update(val_loss, net.state_dict())
        log.debug("epoch %d val_loss %.5f", epoch + 1, val_loss)
        if decision == "stop":
            break
    if stopper.error:
        log.warning(stopper.error)
    if stopper.best_checkpoint is not None:
        net.load_state_dict(stopper.best_checkpoint)
    return stopper


def prepare(train: TimeSeriesDataset, test: TimeSeriesDataset, znorm: bool = True):
    """Common length for both splits, then optional z-normalization."""
    length = max(train.length, test.length)
    train, test = pad_to_length(train, length), pad_to_length(test, length)
    if znorm:
        train, test = znormalize(train), znormalize(test)
    return train, test


def run_experiment(train: TimeSeriesDataset, test: TimeSeriesDataset, seed: int = 0,
                   settings: TrainSettings | None = None, **overrides) -> tuple[RunRecord, ConvTranNet]:
    """Split, train with early stopping, and score on ``test``.

    ``overrides`` are :class:`ModelConfig` fields (e.g. ``abs_encoding``).
    """
    settings = settings or TrainSettings()
    start = time.perf_counter()
    train, test = prepare(train, test, settings.znorm)
    fit_ds, val_ds = stratified_split(train, settings.val_fraction, seed=seed)
    cfg = ModelConfig(d_x=train.d_x, length=train.length, classes=train.n_classes, seed=seed, **overrides)
    net = ConvTranNet(cfg)
    stopper = fit(net, fit_ds, val_ds, settings, seed=seed)
    acc, loss = evaluate(net, test)
    record = RunRecord(
        dataset=train.name,
        config=cfg.to_dict(),
        seed=seed,
        test_accuracy=acc,
        test_loss=loss,
        epochs_run=stopper.epoch,
        best_epoch=stopper.best_epoch,
        best_val_loss=stopper.best_val_loss,
        parameter_count=count_parameters(net),
        settings=asdict(settings),
        wall_time=time.perf_counter() - start,
        status="error" if stopper.error else "ok",
    )
    return record, net


def best_of(records: list[RunRecord]) -> RunRecord:
    return max(records, key=lambda r: r.test_accuracy)
