"""Training loop: z-score normalization, seeded mini-batch Adam on the
relative-L2 loss, per-epoch test metrics, and checkpointing.

Inputs are normalized with training-split statistics; targets stay in
physical units.  The trained model carries the input statistics so any
later evaluation (including super-resolution) normalizes exactly as
training did.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .archive import load_tensors, save_tensors
from .datagen import TaskDataset
from .errors import ConfigError, DegenerateChannel, FormatError, NumericalFault
from .model import ModelConfig, SNOModel, forward, init_model

CHECKPOINT_SIDECAR_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 20
    epochs: int = 1000
    seed: int = 0
    checkpoint_every: int = 0     # 0 = checkpoint only at the end

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class TrainReport:
    train_loss: list
    test_rel_l2: list
    epoch_seconds: list
    checkpoint_path: str | None = None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "test_rel_l2", "seconds"])
            for i, (tr, te, sec) in enumerate(
                    zip(self.train_loss, self.test_rel_l2, self.epoch_seconds)):
                w.writerow([i, repr(tr), repr(te), repr(sec)])


def normalize(ds: TaskDataset) -> TaskDataset:
    """Z-score inputs per channel with training-split stats; outputs untouched.

    Normalizing twice would shift the data silently, so a second call errors.
    """
    if ds.normalized:
        raise ConfigError("dataset is already normalized")
    if np.any(ds.in_std == 0.0) or not np.all(np.isfinite(ds.in_std)):
        bad = np.where(~(ds.in_std > 0.0))[0]
        raise DegenerateChannel(f"zero/invalid std in channels {bad.tolist()}")
    inputs = (ds.inputs - ds.in_mean[None, :, None]) / ds.in_std[None, :, None]
    return replace(ds, inputs=inputs, normalized=True)


def denormalize(ds: TaskDataset) -> TaskDataset:
    """Inverse of normalize (affine round trip)."""
    if not ds.normalized:
        raise ConfigError("dataset is not normalized")
    inputs = ds.inputs * ds.in_std[None, :, None] + ds.in_mean[None, :, None]
    return replace(ds, inputs=inputs, normalized=False)


def predict(model: SNOModel, inputs: np.ndarray, grid, batch: int = 100) -> np.ndarray:
    """Forward pass without gradient bookkeeping overhead, in chunks."""
    outs = []
    for i in range(0, inputs.shape[0], batch):
        outs.append(forward(model, inputs[i : i + batch], grid).data)
    return np.concatenate(outs, axis=0)


def per_sample_rel_l2(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    b = pred.shape[0]
    num = np.linalg.norm((pred - truth).reshape(b, -1), axis=1)
    den = np.linalg.norm(truth.reshape(b, -1), axis=1)
    return num / den


def train(model: SNOModel, ds: TaskDataset, config: TrainConfig,
          checkpoint_path=None) -> TrainReport:
    """Seeded mini-batch training; deterministic given (dataset, config, model).

    Requires a normalized dataset and grid length >= degree + 1.  Aborts with
    NumericalFault (annotated with epoch/batch) if anything goes non-finite.
    """
    if not ds.normalized:
        raise ConfigError("train expects a normalized dataset (call normalize first)")
    if ds.grid.n < model.config.degree + 1:
        raise ConfigError(
            f"grid length {ds.grid.n} cannot support degree {model.config.degree}")
    model.input_mean = ds.in_mean.copy()
    model.input_std = ds.in_std.copy()
    rng = np.random.default_rng(config.seed)
    state = T.AdamState(lr=config.lr)
    report = TrainReport(train_loss=[], test_rel_l2=[], epoch_seconds=[])
    test_in = ds.inputs[ds.test_idx]
    test_out = ds.outputs[ds.test_idx]
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        perm = rng.permutation(ds.train_idx)
        batch_losses = []
        for bi, start in enumerate(range(0, perm.shape[0], config.batch_size)):
            idx = perm[start : start + config.batch_size]
            try:
                pred = forward(model, ds.inputs[idx], ds.grid)
                loss = T.rel_l2_loss(pred, ds.outputs[idx])
                T.backward(loss)
                T.adam_step(model.params, state)
            except NumericalFault as exc:
                raise NumericalFault(f"epoch {epoch} batch {bi}: {exc}") from exc
            batch_losses.append(loss.data.item())
        report.train_loss.append(float(np.mean(batch_losses)))
        if test_in.shape[0]:
            errs = per_sample_rel_l2(predict(model, test_in, ds.grid), test_out)
            report.test_rel_l2.append(float(np.mean(errs)))
        else:
            report.test_rel_l2.append(float("nan"))
        report.epoch_seconds.append(time.perf_counter() - t0)
        if checkpoint_path is not None and config.checkpoint_every > 0 \
                and (epoch + 1) % config.checkpoint_every == 0:
            save_checkpoint(model, checkpoint_path)
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path)
        report.checkpoint_path = str(checkpoint_path)
    return report


def save_checkpoint(model: SNOModel, path):
    """Parameter archive plus a JSON sidecar with config and input stats."""
    save_tensors(path, model.params.state_dict())
    sidecar = {
        "format_version": CHECKPOINT_SIDECAR_VERSION,
        "model_config": model.config.to_dict(),
        "input_mean": None if model.input_mean is None else model.input_mean.tolist(),
        "input_std": None if model.input_std is None else model.input_std.tolist(),
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=1)


def load_checkpoint(path) -> SNOModel:
    try:
        with open(str(path) + ".json") as fh:
            sidecar = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"missing checkpoint sidecar {path}.json") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"unreadable checkpoint sidecar: {exc}") from exc
    if sidecar.get("format_version") != CHECKPOINT_SIDECAR_VERSION:
        raise FormatError(f"unsupported checkpoint version {sidecar.get('format_version')}")
    model = init_model(ModelConfig.from_dict(sidecar["model_config"]))
    model.params.load_state_dict(load_tensors(path))
    if sidecar.get("input_mean") is not None:
        model.input_mean = np.asarray(sidecar["input_mean"], dtype=np.float64)
        model.input_std = np.asarray(sidecar["input_std"], dtype=np.float64)
    return model
