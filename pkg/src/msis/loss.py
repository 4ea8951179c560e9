"""Training objective: masked supervised cross-entropy per target, an
entropy penalty on unlabeled rows, and the stage-weighted total.

Supervised terms only ever index rows whose mask is set, so the NaN
poison on unobserved labels can never leak into a gradient. The entropy
term reads probabilities alone: pushing unlabeled predictions away from
0.5 is what lets the selection-censored stages say something about the
rows they never got labels for.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .dataset import Batch
from .errors import ConfigError, ContractError
from .model import MsisConfig, forward_values, make_fused_forward
from .numerics import Node

DEFAULT_GAMMA = 6e-4


def default_gammas() -> dict[str, float]:
    return {t: 0.0 if t == "credit" else DEFAULT_GAMMA
            for t in ("credit", "draw_30", "draw_90", "mob1", "mob3", "mob6")}


@dataclass(frozen=True)
class LossConfig:
    stage_weights: dict[str, float] = field(
        default_factory=lambda: {"ar": 1.0, "ws": 1.0, "gb": 1.0})
    gammas: dict[str, float] = field(default_factory=default_gammas)
    unlabeled_reduction: str = "mean"  # or "sum"

    def validate(self) -> None:
        if any(w < 0 for w in self.stage_weights.values()):
            raise ConfigError("stage weights must be non-negative")
        if any(g < 0 for g in self.gammas.values()):
            raise ConfigError("semi-supervised weights must be non-negative")
        if self.unlabeled_reduction not in ("sum", "mean"):
            raise ConfigError(
                f"unlabeled_reduction must be sum or mean, got {self.unlabeled_reduction!r}")

    def gamma(self, target: str) -> float:
        return self.gammas.get(target, 0.0)

    def stage_weight(self, stage: str) -> float:
        try:
            return self.stage_weights[stage]
        except KeyError:
            raise ConfigError(f"no stage weight configured for stage {stage!r}") from None

    def supervised_only(self) -> "LossConfig":
        return LossConfig(dict(self.stage_weights), {t: 0.0 for t in self.gammas},
                          self.unlabeled_reduction)


@dataclass
class TargetLoss:
    supervised: float
    entropy: float
    labeled: int
    unlabeled: int


@dataclass
class LossBreakdown:
    per_target: dict[str, TargetLoss]
    per_stage: dict[str, float]
    total: Node


# ---------------------------------------------------------------------------
# graph terms
# ---------------------------------------------------------------------------

def masked_bce(probs: Node, labels: np.ndarray, mask: np.ndarray) -> Node:
    """Mean negative log likelihood over the rows whose mask is set; exactly
    zero (with no gradient) when nothing is labeled."""
    idx = np.flatnonzero(mask == 1.0)
    if idx.size == 0:
        return nm.constant([[0.0]])
    y = labels[idx]
    if not np.isfinite(y).all():
        raise ContractError("masked_bce consumed a poisoned label")
    y = y.reshape(-1, 1)
    p = nm.gather_rows(probs, idx)
    ll = nm.add(nm.mul_const(nm.log(p), y),
                nm.mul_const(nm.log(nm.affine(p, -1.0, 1.0)), 1.0 - y))
    return nm.affine(nm.mean_all(ll), -1.0)


def entropy_regularizer(probs: Node, mask: np.ndarray,
                        reduction: str = "mean") -> Node:
    """Binary entropy of the unlabeled rows' predictions, summed or averaged."""
    idx = np.flatnonzero(mask == 0.0)
    if idx.size == 0:
        return nm.constant([[0.0]])
    p = nm.gather_rows(probs, idx)
    q = nm.affine(p, -1.0, 1.0)
    h = nm.add(nm.mul(p, nm.log(p)), nm.mul(q, nm.log(q)))
    reduce = nm.mean_all if reduction == "mean" else nm.sum_all
    return nm.affine(reduce(h), -1.0)


def total_loss(result, batch: Batch, config: LossConfig,
               stages: tuple[tuple[str, tuple[str, ...]], ...]) -> LossBreakdown:
    """Per target: supervised + gamma * entropy; targets average within their
    stage; stages combine under the configured weights."""
    config.validate()
    per_target: dict[str, TargetLoss] = {}
    per_stage: dict[str, float] = {}
    total: Node | None = None
    for sname, targets in stages:
        stage_node: Node | None = None
        for t in targets:
            probs = result.probs[t]
            mask = batch.masks[t]
            sup = masked_bce(probs, batch.labels[t], mask)
            ent = entropy_regularizer(probs, mask, config.unlabeled_reduction)
            gamma = config.gamma(t)
            term = nm.add(sup, nm.affine(ent, gamma)) if gamma != 0.0 else sup
            stage_node = term if stage_node is None else nm.add(stage_node, term)
            per_target[t] = TargetLoss(
                supervised=float(sup.value[0, 0]), entropy=float(ent.value[0, 0]),
                labeled=int((mask == 1.0).sum()), unlabeled=int((mask == 0.0).sum()))
        stage_node = nm.affine(stage_node, 1.0 / len(targets))
        per_stage[sname] = float(stage_node.value[0, 0])
        weighted = nm.affine(stage_node, config.stage_weight(sname))
        total = weighted if total is None else nm.add(total, weighted)
    return LossBreakdown(per_target, per_stage, total)


# ---------------------------------------------------------------------------
# value-only path (evaluation diagnostics, finite differences)
# ---------------------------------------------------------------------------

def total_loss_value(params, model_cfg: MsisConfig, loss_cfg: LossConfig,
                     batch: Batch) -> float:
    return make_loss_value_fn(params, model_cfg, loss_cfg, batch)()


def make_loss_value_fn(params, model_cfg: MsisConfig, loss_cfg: LossConfig,
                       batch: Batch):
    """Build a fast scalar evaluator of the total loss at the current
    parameter values; index bookkeeping happens once, up front, and the
    arithmetic mirrors the graph terms operation for operation so the
    scalar is bit-identical to the tape's."""
    loss_cfg.validate()
    stages = model_cfg.stages
    plan = []
    for sname, targets in stages:
        weight = loss_cfg.stage_weight(sname)
        rows = []
        for t in targets:
            mask = batch.masks[t]
            obs = np.flatnonzero(mask == 1.0)
            y = batch.labels[t][obs].reshape(-1, 1)
            if obs.size and not np.isfinite(y).all():
                raise ContractError("poisoned label in loss evaluation")
            unobs = np.flatnonzero(mask == 0.0)
            rows.append((t, obs, y, unobs, loss_cfg.gamma(t)))
        plan.append((weight, 1.0 / len(rows), rows))
    reduction = loss_cfg.unlabeled_reduction

    def value() -> float:
        result = forward_values(params, model_cfg, batch.features)
        total = 0.0
        for weight, inv_len, rows in plan:
            stage = 0.0
            for t, obs, y, unobs, gamma in rows:
                p = result.probs[t]
                term = 0.0
                if obs.size:
                    po = p[obs]
                    term = -float((np.log(po) * y + np.log(-1.0 * po + 1.0) * (1.0 - y)).mean())
                if gamma != 0.0 and unobs.size:
                    pu = p[unobs]
                    q = -1.0 * pu + 1.0
                    term += gamma * -float((pu * np.log(pu) + q * np.log(q)).mean()
                                           if reduction == "mean"
                                           else (pu * np.log(pu) + q * np.log(q)).sum())
                stage += term
            total += weight * (stage * inv_len)
        return total

    return value


def make_fast_loss_value_fn(params, model_cfg: MsisConfig, loss_cfg: LossConfig,
                            batch: Batch):
    """Like make_loss_value_fn but built on the fused forward and a fully
    vectorized loss: about a dozen numpy calls per evaluation.

    Agrees with the tape total to float rounding (tested at 1e-12 relative),
    not bit for bit, because sums run in a different association order.
    Gradient checking over every scalar of the default model needs roughly
    a hundred thousand loss evaluations; this is the path that makes that
    affordable."""
    loss_cfg.validate()
    targets = model_cfg.all_targets()
    nt = len(targets)
    n = len(batch)
    w_pos = np.zeros((nt, n))
    w_neg = np.zeros((nt, n))
    w_unl = np.zeros((nt, n))
    n_obs = np.zeros(nt)
    n_unl = np.zeros(nt)
    gammas = np.array([loss_cfg.gamma(t) for t in targets])
    for i, t in enumerate(targets):
        mask = batch.masks[t]
        obs = mask == 1.0
        y = np.where(obs, batch.labels[t], 0.0)
        if obs.any() and not np.isfinite(batch.labels[t][obs]).all():
            raise ContractError("poisoned label in loss evaluation")
        w_pos[i] = mask * y
        w_neg[i] = mask * (1.0 - y)
        w_unl[i] = 1.0 - mask
        n_obs[i] = obs.sum()
        n_unl[i] = (mask == 0.0).sum()
    stage_slices = []
    offset = 0
    for sname, stage_targets in model_cfg.stages:
        ns = len(stage_targets)
        stage_slices.append((loss_cfg.stage_weight(sname) / ns,
                             slice(offset, offset + ns)))
        offset += ns
    # fold the per-target normalizers into the mask weights once
    sup_scale = -1.0 / np.maximum(n_obs, 1.0)
    w_pos *= sup_scale[:, None]
    w_neg *= sup_scale[:, None]
    ent_scale = -gammas.copy()
    if loss_cfg.unlabeled_reduction == "mean":
        ent_scale /= np.maximum(n_unl, 1.0)
    w_unl *= ent_scale[:, None]
    need_entropy = bool(((gammas > 0) & (n_unl > 0)).any())

    forward_plan = make_fused_forward(params, model_cfg, batch.features)
    logp = np.empty((nt, n))
    q = np.empty((nt, n))
    logq = np.empty((nt, n))
    terms = np.empty((nt, n))

    scratch = np.empty((nt, n))

    def value() -> float:
        p = forward_plan()
        np.log(p, out=logp)
        np.subtract(1.0, p, out=q)
        np.log(q, out=logq)
        np.multiply(w_pos, logp, out=terms)
        np.multiply(w_neg, logq, out=scratch)
        np.add(terms, scratch, out=terms)
        if need_entropy:
            np.multiply(p, logp, out=logp)
            np.multiply(q, logq, out=logq)
            np.add(logp, logq, out=logp)
            np.multiply(w_unl, logp, out=logp)
            np.add(terms, logp, out=terms)
        per_target = terms.sum(axis=1)
        total = 0.0
        for weight, sl in stage_slices:
            total += weight * per_target[sl].sum()
        return float(total)

    return value
