"""Mini-batch training with adaptive moments, validation-based early
stopping, and seeded experiment repeats.

A run is bitwise reproducible from (configs, seed): the seed fixes the
parameter draw, every epoch's shuffle, and nothing else is random. The
reported model is the checkpoint of the best validation epoch, scored by
the mean AUC of the final stage's targets.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import numerics as nm
from .dataset import Batch, Splits, batches, make_batch
from .errors import ConfigError
from .evaluation import try_auc
from .loss import LossBreakdown, LossConfig, total_loss
from .model import MsisConfig, forward, init_params, predict_probs
from .numerics import ParamStore


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    patience: int = 5
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 < self.patience < self.epochs:
            raise ConfigError(
                f"patience must lie in (0, epochs), got {self.patience} vs {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch_index: int, value: float):
        super().__init__(
            f"non-finite loss {value!r} at epoch {epoch}, batch {batch_index}")
        self.epoch = epoch
        self.batch_index = batch_index
        self.value = value


class Adam:
    """Adaptive-moment updates applied in place, so parameters aliased into
    group buffers stay live."""

    def __init__(self, params: ParamStore, cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.t = 0
        self._m = {name: np.zeros_like(node.value) for name, node in params.items()}
        self._v = {name: np.zeros_like(node.value) for name, node in params.items()}

    def step(self) -> None:
        self.t += 1
        cfg = self.cfg
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        for name, node in self.params.items():
            g = node.adjoint
            if g is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            node.value -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    supervised: dict[str, float]
    entropy: dict[str, float]
    val_auc: dict[str, float | None]
    unlabeled_entropy: dict[str, float]


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def best_record(self) -> EpochRecord:
        return self.epochs[self.best_epoch - 1]


@dataclass
class RunResult:
    seed: int
    metrics: dict
    history: TrainHistory


def _mean_entropy(probs: np.ndarray) -> float:
    if probs.size == 0:
        return 0.0
    return float(-(probs * np.log(probs) + (1 - probs) * np.log(1 - probs)).mean())


def _epoch_diagnostics(params, model_cfg, train_eval: Batch,
                       val_eval: Batch | None) -> tuple[dict, dict]:
    val_auc: dict[str, float | None] = {}
    if val_eval is not None:
        val_probs = predict_probs(params, model_cfg, val_eval.features)
        for t in model_cfg.all_targets():
            idx, y = val_eval.observed(t)
            val_auc[t] = try_auc(val_probs[t][idx], y) if idx.size else None
    train_probs = predict_probs(params, model_cfg, train_eval.features)
    unlabeled_entropy = {
        t: _mean_entropy(train_probs[t][train_eval.unobserved_idx(t)])
        for t in model_cfg.all_targets()}
    return val_auc, unlabeled_entropy


def train_run(model_cfg: MsisConfig, loss_cfg: LossConfig, train_cfg: TrainConfig,
              splits: Splits, seed: int) -> tuple[ParamStore, TrainHistory]:
    model_cfg.validate()
    loss_cfg.validate()
    train_cfg.validate()
    params = init_params(model_cfg, seed)
    optimizer = Adam(params, train_cfg)
    targets = model_cfg.all_targets()
    final_targets = model_cfg.stages[-1][1]
    train_eval = make_batch(splits.train)
    val_eval = make_batch(splits.validation) if splits.validation else None

    history = TrainHistory()
    best_metric = -math.inf
    best_values: dict[str, np.ndarray] | None = None
    for epoch in range(1, train_cfg.epochs + 1):
        loss_sum = 0.0
        sup_sums = {t: 0.0 for t in targets}
        ent_sums = {t: 0.0 for t in targets}
        epoch_batches = batches(splits.train, train_cfg.batch_size, seed, epoch)
        for bi, batch in enumerate(epoch_batches):
            result = forward(params, model_cfg, batch.features)
            breakdown: LossBreakdown = total_loss(result, batch, loss_cfg,
                                                  model_cfg.stages)
            value = float(breakdown.total.value[0, 0])
            if not math.isfinite(value):
                raise TrainingDiverged(epoch, bi, value)
            params.zero_adjoints()
            nm.backward_sweep(breakdown.total)
            optimizer.step()
            loss_sum += value
            for t in targets:
                sup_sums[t] += breakdown.per_target[t].supervised
                ent_sums[t] += breakdown.per_target[t].entropy

        n_batches = len(epoch_batches)
        val_auc, unlabeled_entropy = _epoch_diagnostics(
            params, model_cfg, train_eval, val_eval)
        history.epochs.append(EpochRecord(
            epoch=epoch,
            train_loss=loss_sum / n_batches,
            supervised={t: sup_sums[t] / n_batches for t in targets},
            entropy={t: ent_sums[t] / n_batches for t in targets},
            val_auc=val_auc,
            unlabeled_entropy=unlabeled_entropy))

        defined = [val_auc[t] for t in final_targets if val_auc.get(t) is not None]
        if not defined:
            defined = [v for v in val_auc.values() if v is not None]
        metric = float(np.mean(defined)) if defined else -loss_sum / n_batches
        if metric > best_metric:
            best_metric = metric
            history.best_epoch = epoch
            best_values = params.copy_values()
        elif epoch - history.best_epoch >= train_cfg.patience:
            break
    params.load_values(best_values)
    return params, history


def repeat_experiment(model_cfg: MsisConfig, loss_cfg: LossConfig,
                      train_cfg: TrainConfig, splits: Splits,
                      eval_fn: Callable[[ParamStore], dict]) -> list[RunResult]:
    """One independent training run per configured seed; metric aggregation
    is the evaluation module's job."""
    if len(train_cfg.seeds) < 2:
        raise ConfigError("repeat_experiment needs at least 2 seeds")
    results = []
    for seed in train_cfg.seeds:
        try:
            params, history = train_run(model_cfg, loss_cfg, train_cfg, splits, seed)
            results.append(RunResult(seed, eval_fn(params), history))
        except Exception as exc:
            raise RuntimeError(f"training run for seed {seed} failed: {exc}") from exc
    return results


def write_history_csv(history: TrainHistory, path: str | Path) -> None:
    """One row per (epoch, target): loss terms, validation AUC, and the mean
    prediction entropy on unlabeled training rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "target", "supervised", "entropy", "val_auc",
                         "unlabeled_entropy", "best_epoch"])
        for rec in history.epochs:
            for t in rec.supervised:
                auc = rec.val_auc.get(t)
                writer.writerow([
                    rec.epoch, t, repr(rec.supervised[t]), repr(rec.entropy[t]),
                    "" if auc is None else repr(auc),
                    repr(rec.unlabeled_entropy[t]), history.best_epoch])
