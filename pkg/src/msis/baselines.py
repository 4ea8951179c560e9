"""Reference competitors sharing the full pipeline: a per-label MLP trained
on the labeled subset only, the same MLP with the entropy penalty over
unlabeled rows, and the corridor-free flat multi-task network.

Everything except the model/loss wiring (splits, standardization, seeds,
optimizer, early stopping, scoring) is identical to the staged model's
protocol, so measured gaps are attributable to the method.
"""

from __future__ import annotations

import dataclasses
from enum import Enum

from .dataset import Splits
from .errors import ConfigError
from .loss import DEFAULT_GAMMA, LossConfig
from .model import MsisConfig
from .numerics import ParamStore
from .trainer import TrainConfig, TrainHistory, train_run

GB_TARGETS = ("mob1", "mob3", "mob6")

# hidden widths sized so the single-task MLP lands within 10% of the
# default staged model's 10822 trainable scalars (32->120->60->1 = 11281)
SINGLE_TASK_WIDTHS = (120, 60)


class BaselineKind(str, Enum):
    SINGLE_TASK = "single_task"
    SINGLE_TASK_ENTROPY = "single_task_entropy"
    FLAT_MULTITASK = "flat_multitask"


def baseline_model_config(kind: BaselineKind, target: str | None = None,
                          base: MsisConfig | None = None) -> MsisConfig:
    kind = BaselineKind(kind)
    base = base or MsisConfig()
    if kind is BaselineKind.FLAT_MULTITASK:
        return dataclasses.replace(base, corridor_enabled=False)
    if target not in GB_TARGETS:
        raise ConfigError(
            f"single-task baselines take exactly one repayment target, got {target!r}")
    return MsisConfig(input_dim=base.input_dim, shared_widths=SINGLE_TASK_WIDTHS,
                      tower_widths=(), corridor_dim=base.corridor_dim,
                      stages=(("gb", (target,)),), corridor_enabled=False)


def train_baseline(kind: BaselineKind, target: str | None, splits: Splits,
                   train_cfg: TrainConfig, seed: int,
                   gamma: float = DEFAULT_GAMMA,
                   unlabeled_reduction: str = "mean",
                   base: MsisConfig | None = None,
                   loss_cfg: LossConfig | None = None,
                   ) -> tuple[ParamStore, TrainHistory, MsisConfig]:
    """Train one baseline under the staged model's exact protocol.

    The plain single-task model sees only rows where its label was
    observed; the entropy variant additionally feeds unlabeled rows to the
    regularizer (with gamma zero it degenerates to the plain one, batch
    for batch)."""
    kind = BaselineKind(kind)
    model_cfg = baseline_model_config(kind, target, base)
    if kind is BaselineKind.FLAT_MULTITASK:
        lcfg = loss_cfg or LossConfig()
        return (*train_run(model_cfg, lcfg, train_cfg, splits, seed), model_cfg)

    labeled = [ex for ex in splits.train if ex.labels[target] is not None]
    if not labeled:
        raise ConfigError(f"no training rows carry an observed {target!r} label")
    effective_gamma = gamma if kind is BaselineKind.SINGLE_TASK_ENTROPY else 0.0
    # unlabeled rows only join when the entropy term can read them
    train = list(splits.train) if effective_gamma > 0.0 else labeled
    lcfg = LossConfig(stage_weights={"gb": 1.0}, gammas={target: effective_gamma},
                      unlabeled_reduction=unlabeled_reduction)
    subset = Splits(train, splits.validation, splits.test)
    params, history = train_run(model_cfg, lcfg, train_cfg, subset, seed)
    return params, history, model_cfg


def scalar_count(config: MsisConfig) -> int:
    """Trainable scalar count implied by a config (no allocation)."""
    def dense(a, b):
        return a * b + b

    total = 0
    prev = config.input_dim
    for w in config.shared_widths:
        total += dense(prev, w)
        prev = w
    nt = len(config.all_targets())
    t_prev = prev
    for w in config.tower_widths:
        total += nt * dense(t_prev, w)
        t_prev = w
    total += nt * dense(config.tower_out_dim, 1)
    if config.corridor_enabled and len(config.stages) > 1:
        d = config.corridor_dim
        for _, targets in config.stages[:-1]:
            total += (4 if len(targets) > 1 else 2) * dense(d, d)
        total += sum(len(t) for _, t in config.stages[1:]) * 6 * dense(d, d)
    return total
