"""The multi-stage network: shared bottom, per-target towers, and the
information corridor that chains stages together.

Stage order encodes the business funnel. Each stage's tower outputs are
aggregated by intra-stage attention into a corridor vector, transformed,
and fused into every target of the next stage by inter-stage attention,
so later stages can read earlier interaction signals but never the other
way around.

All wiring below is written once against a small backend protocol and
executed either on tape nodes (training) or on raw arrays (evaluation,
finite differences); both paths perform the identical float operations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import expit

from . import numerics as nm
from .dataset import TARGETS
from .errors import ConfigError, ContractError, DimensionError
from .numerics import ParamStore

DEFAULT_STAGES = (
    ("ar", ("credit",)),
    ("ws", ("draw_30", "draw_90")),
    ("gb", ("mob1", "mob3", "mob6")),
)


@dataclass(frozen=True)
class MsisConfig:
    input_dim: int = 32
    shared_widths: tuple[int, ...] = (64, 32)
    tower_widths: tuple[int, ...] = (16, 8)
    corridor_dim: int = 8
    stages: tuple[tuple[str, tuple[str, ...]], ...] = DEFAULT_STAGES
    corridor_enabled: bool = True
    attention_input: str = "post_fusion"  # which reps intra-stage attention reads

    def validate(self) -> None:
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.corridor_dim < 1:
            raise ConfigError(f"corridor_dim must be >= 1, got {self.corridor_dim}")
        if any(w < 1 for w in self.shared_widths + self.tower_widths):
            raise ConfigError("layer widths must be positive")
        if not self.stages or any(not targets for _, targets in self.stages):
            raise ConfigError("every stage needs at least one target")
        flat = self.all_targets()
        if len(set(flat)) != len(flat):
            raise ConfigError("targets must be unique across stages")
        unknown = [t for t in flat if t not in TARGETS]
        if unknown:
            raise ConfigError(f"unknown targets {unknown}; must be among {TARGETS}")
        if self.attention_input not in ("post_fusion", "pre_fusion"):
            raise ConfigError(f"attention_input must be post_fusion or pre_fusion, "
                              f"got {self.attention_input!r}")
        if self.corridor_enabled and len(self.stages) > 1:
            if not self.tower_widths:
                raise ConfigError("corridor requires at least one tower layer")
            if self.tower_widths[-1] != self.corridor_dim:
                raise ConfigError(
                    f"tower output width {self.tower_widths[-1]} must equal "
                    f"corridor_dim {self.corridor_dim}")

    def all_targets(self) -> tuple[str, ...]:
        return tuple(t for _, targets in self.stages for t in targets)

    @property
    def rep_dim(self) -> int:
        return self.shared_widths[-1] if self.shared_widths else self.input_dim

    @property
    def tower_out_dim(self) -> int:
        return self.tower_widths[-1] if self.tower_widths else self.rep_dim

    def with_corridor_dim(self, d: int) -> "MsisConfig":
        widths = self.tower_widths[:-1] + (d,) if self.tower_widths else self.tower_widths
        return replace(self, corridor_dim=d, tower_widths=widths)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "shared_widths": list(self.shared_widths),
            "tower_widths": list(self.tower_widths),
            "corridor_dim": self.corridor_dim,
            "stages": [[name, list(targets)] for name, targets in self.stages],
            "corridor_enabled": self.corridor_enabled,
            "attention_input": self.attention_input,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "MsisConfig":
        return cls(
            input_dim=int(obj["input_dim"]),
            shared_widths=tuple(obj["shared_widths"]),
            tower_widths=tuple(obj["tower_widths"]),
            corridor_dim=int(obj["corridor_dim"]),
            stages=tuple((name, tuple(targets)) for name, targets in obj["stages"]),
            corridor_enabled=bool(obj["corridor_enabled"]),
            attention_input=obj["attention_input"],
        )


@dataclass
class CorridorState:
    """Attention bookkeeping for one stage pair, batch-shaped.

    alpha has one column per source-stage target; betas holds one (rows, 2)
    simplex per destination target, column 0 weighting the incoming
    corridor vector and column 1 the target's own tower."""

    src: str
    dst: str
    e_ou: object
    e_in: object
    alpha: object
    betas: dict[str, object]


@dataclass
class ForwardResult:
    probs: dict[str, object]
    corridor: dict[tuple[str, str], CorridorState]
    top: dict[str, object]


# ---------------------------------------------------------------------------
# backends: the same wiring runs on tape nodes or raw arrays
# ---------------------------------------------------------------------------

class _GraphBackend:
    def __init__(self, params: ParamStore):
        self._params = params

    def param(self, name: str):
        return self._params[name]

    def constant(self, arr: np.ndarray):
        return nm.constant(arr)

    dense = staticmethod(nm.dense_forward)
    relu = staticmethod(nm.relu)
    leaky_relu = staticmethod(nm.leaky_relu)
    sigmoid = staticmethod(nm.sigmoid)
    scaled_row_dot = staticmethod(nm.scaled_row_dot)
    hstack = staticmethod(nm.hstack)
    softmax_rows = staticmethod(nm.softmax_rows)
    column = staticmethod(nm.column)
    mul = staticmethod(nm.mul)
    add = staticmethod(nm.add)


class _ValueBackend:
    def __init__(self, params: ParamStore):
        self._params = params

    def param(self, name: str):
        return self._params[name].value

    @staticmethod
    def constant(arr):
        return arr

    dense = staticmethod(nm.dense_values)
    relu = staticmethod(nm.relu_values)
    leaky_relu = staticmethod(nm.leaky_relu_values)
    sigmoid = staticmethod(nm.sigmoid_values)
    softmax_rows = staticmethod(nm.softmax_rows_values)

    @staticmethod
    def scaled_row_dot(a, b, scale):
        return (a * b).sum(axis=1, keepdims=True) * scale

    @staticmethod
    def hstack(cols):
        return np.concatenate(cols, axis=1)

    @staticmethod
    def column(x, j):
        return np.ascontiguousarray(x[:, j:j + 1])

    @staticmethod
    def mul(a, b):
        return a * b

    @staticmethod
    def add(a, b):
        return a + b


# ---------------------------------------------------------------------------
# attention primitives
# ---------------------------------------------------------------------------

@dataclass
class FusionProjections:
    proj_in: Callable       # applied to the incoming corridor vector
    proj_self: Callable     # applied to the target's own tower
    score_in: tuple[Callable, Callable]
    score_self: tuple[Callable, Callable]


def intra_stage_attention(reps, g1, g2, g3, dim: int, ops=None):
    """Aggregate one stage's tower representations into a corridor vector.

    Each representation scores itself via <g1(h), g2(h)> / sqrt(dim); the
    softmax of those scores weights the g3-projected representations. A
    single-target stage has nothing to attend over: alpha is exactly [1]
    and the output is just g3(h)."""
    ops = ops or _DEFAULT_GRAPH_OPS
    rows = reps[0].shape[0]
    if len(reps) == 1:
        alpha = ops.constant(np.ones((rows, 1)))
        return g3(reps[0]), alpha
    scale = 1.0 / math.sqrt(dim)
    scores = [ops.scaled_row_dot(g1(r), g2(r), scale) for r in reps]
    alpha = ops.softmax_rows(ops.hstack(scores))
    combined = None
    for m, r in enumerate(reps):
        term = ops.mul(ops.column(alpha, m), g3(r))
        combined = term if combined is None else ops.add(combined, term)
    return combined, alpha


def inter_stage_fusion(e_in, h_target, projections: FusionProjections, dim: int,
                       ops=None, beta_override=None):
    """Fuse the incoming corridor vector with one destination tower.

    Both candidates score themselves the same way the source stage scores
    its towers; the softmax over the two scores gives beta, and the fused
    representation is beta_0 * proj(e_in) + beta_1 * proj(h). The two
    projections are separate parameter sets. `beta_override` is a test
    hook pinning beta to a fixed pair."""
    ops = ops or _DEFAULT_GRAPH_OPS
    if beta_override is not None:
        rows = e_in.shape[0]
        beta = ops.constant(np.tile(np.asarray(beta_override, dtype=np.float64), (rows, 1)))
    else:
        scale = 1.0 / math.sqrt(dim)
        s_in = ops.scaled_row_dot(projections.score_in[0](e_in),
                                  projections.score_in[1](e_in), scale)
        s_self = ops.scaled_row_dot(projections.score_self[0](h_target),
                                    projections.score_self[1](h_target), scale)
        beta = ops.softmax_rows(ops.hstack([s_in, s_self]))
    fused = ops.add(ops.mul(ops.column(beta, 0), projections.proj_in(e_in)),
                    ops.mul(ops.column(beta, 1), projections.proj_self(h_target)))
    return fused, beta


class _BareGraphOps(_GraphBackend):
    def __init__(self):
        pass


_DEFAULT_GRAPH_OPS = _BareGraphOps()


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def init_params(config: MsisConfig, seed: int) -> ParamStore:
    """Create every trainable tensor, in a fixed order, from one seed.

    Corridor projections are only created where they carry gradient:
    source-side attention exists for every stage but the last (and its
    g1/g2 pair only when that stage has multiple targets), fusion
    parameters for every stage but the first.

    Per-target tensors that vectorized paths consume together (tower
    layers, heads, fusion projections) are laid out as contiguous views
    into stacked group buffers; the parameters behave as ordinary named
    2-D tensors everywhere else."""
    config.validate()
    ps = ParamStore(seed)
    targets = config.all_targets()
    nt = len(targets)
    d = config.corridor_dim
    rep_dim = config.rep_dim
    use_corridor = config.corridor_enabled and len(config.stages) > 1

    dims = (rep_dim,) + config.tower_widths
    for i in range(len(config.tower_widths)):
        ps.groups[f"tower.w.{i}"] = np.empty((nt, dims[i], dims[i + 1]))
        ps.groups[f"tower.b.{i}"] = np.empty((nt, 1, dims[i + 1]))
    for sname, stargets in config.stages:
        ns = len(stargets)
        ps.groups[f"head.w.{sname}"] = np.empty((ns, config.tower_out_dim, 1))
        ps.groups[f"head.b.{sname}"] = np.empty((ns, 1, 1))
        if use_corridor and sname != config.stages[0][0]:
            ps.groups[f"fuse_in.w.{sname}"] = np.empty((3 * ns, d, d))
            ps.groups[f"fuse_in.b.{sname}"] = np.empty((3 * ns, 1, d))
            ps.groups[f"fuse_self.w.{sname}"] = np.empty((ns, 3, d, d))
            ps.groups[f"fuse_self.b.{sname}"] = np.empty((ns, 3, 1, d))

    prev = config.input_dim
    for i, width in enumerate(config.shared_widths):
        ps.add_dense(f"shared.{i}", prev, width)
        prev = width
    ti = 0
    for _, stargets in config.stages:
        for t in stargets:
            for i, width in enumerate(config.tower_widths):
                ps.add_dense(f"tower.{t}.{i}", dims[i], width,
                             slots=(ps.groups[f"tower.w.{i}"][ti],
                                    ps.groups[f"tower.b.{i}"][ti]))
            ti += 1
    for sname, stargets in config.stages:
        for j, t in enumerate(stargets):
            ps.add_dense(f"head.{t}", config.tower_out_dim, 1,
                         slots=(ps.groups[f"head.w.{sname}"][j],
                                ps.groups[f"head.b.{sname}"][j]))
    if use_corridor:
        for si in range(len(config.stages) - 1):
            sname, stargets = config.stages[si]
            if len(stargets) > 1:
                ps.add_dense(f"intra.{sname}.g1", d, d)
                ps.add_dense(f"intra.{sname}.g2", d, d)
            ps.add_dense(f"intra.{sname}.g3", d, d)
            ps.add_dense(f"corridor.{sname}-{config.stages[si + 1][0]}.f", d, d)
        for sname, stargets in config.stages[1:]:
            wi, bi = ps.groups[f"fuse_in.w.{sname}"], ps.groups[f"fuse_in.b.{sname}"]
            ws, bs = ps.groups[f"fuse_self.w.{sname}"], ps.groups[f"fuse_self.b.{sname}"]
            for j, t in enumerate(stargets):
                ps.add_dense(f"fuse.{t}.proj_in", d, d, slots=(wi[3 * j], bi[3 * j]))
                ps.add_dense(f"fuse.{t}.proj_self", d, d, slots=(ws[j, 0], bs[j, 0]))
                ps.add_dense(f"fuse.{t}.score_in.g1", d, d,
                             slots=(wi[3 * j + 1], bi[3 * j + 1]))
                ps.add_dense(f"fuse.{t}.score_in.g2", d, d,
                             slots=(wi[3 * j + 2], bi[3 * j + 2]))
                ps.add_dense(f"fuse.{t}.score_self.g1", d, d, slots=(ws[j, 1], bs[j, 1]))
                ps.add_dense(f"fuse.{t}.score_self.g2", d, d, slots=(ws[j, 2], bs[j, 2]))
    return ps


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def forward(params: ParamStore, config: MsisConfig, features: np.ndarray,
            ops=None) -> ForwardResult:
    """Run the full pipeline on a (batch, input_dim) feature matrix.

    With the default backend the result holds tape nodes ready for a
    backward sweep; pass a value backend (see forward_values) for plain
    arrays."""
    if features.ndim != 2 or features.shape[1] != config.input_dim:
        raise DimensionError(
            f"features {features.shape} do not match input_dim {config.input_dim}")
    ops = ops or _GraphBackend(params)
    P = ops.param

    def projection(name: str) -> Callable:
        # corridor projections rectify leakily: an exact-zero output row
        # would park every downstream pre-activation on its kink
        w, b = P(name + ".w"), P(name + ".b")
        return lambda v: ops.leaky_relu(ops.dense(v, w, b))

    shared = ops.constant(features)
    for i in range(len(config.shared_widths)):
        shared = ops.relu(ops.dense(shared, P(f"shared.{i}.w"), P(f"shared.{i}.b")))

    towers: dict[str, object] = {}
    for _, targets in config.stages:
        for t in targets:
            v = shared
            last = len(config.tower_widths) - 1
            for i in range(len(config.tower_widths)):
                v = ops.dense(v, P(f"tower.{t}.{i}.w"), P(f"tower.{t}.{i}.b"))
                if i < last:
                    v = ops.relu(v)
            towers[t] = v

    use_corridor = config.corridor_enabled and len(config.stages) > 1
    probs: dict[str, object] = {}
    top: dict[str, object] = {}
    corridor: dict[tuple[str, str], CorridorState] = {}
    prev_name = None
    prev_e_ou = None
    prev_alpha = None
    for si, (sname, targets) in enumerate(config.stages):
        if use_corridor and prev_e_ou is not None:
            e_in = projection(f"corridor.{prev_name}-{sname}.f")(prev_e_ou)
            fused: dict[str, object] = {}
            betas: dict[str, object] = {}
            for t in targets:
                fp = FusionProjections(
                    proj_in=projection(f"fuse.{t}.proj_in"),
                    proj_self=projection(f"fuse.{t}.proj_self"),
                    score_in=(projection(f"fuse.{t}.score_in.g1"),
                              projection(f"fuse.{t}.score_in.g2")),
                    score_self=(projection(f"fuse.{t}.score_self.g1"),
                                projection(f"fuse.{t}.score_self.g2")))
                fused[t], betas[t] = inter_stage_fusion(
                    e_in, towers[t], fp, config.corridor_dim, ops)
            corridor[(prev_name, sname)] = CorridorState(
                prev_name, sname, prev_e_ou, e_in, prev_alpha, betas)
        else:
            fused = {t: towers[t] for t in targets}
        for t in targets:
            logits = ops.dense(fused[t], P(f"head.{t}.w"), P(f"head.{t}.b"))
            probs[t] = ops.sigmoid(logits)
            top[t] = fused[t]
        if use_corridor and si < len(config.stages) - 1:
            reps = [fused[t] if config.attention_input == "post_fusion" else towers[t]
                    for t in targets]
            if len(targets) > 1:
                g1 = projection(f"intra.{sname}.g1")
                g2 = projection(f"intra.{sname}.g2")
            else:
                g1 = g2 = None
            prev_e_ou, prev_alpha = intra_stage_attention(
                reps, g1, g2, projection(f"intra.{sname}.g3"),
                config.corridor_dim, ops)
            prev_name = sname
    return ForwardResult(probs, corridor, top)


def forward_values(params: ParamStore, config: MsisConfig,
                   features: np.ndarray) -> ForwardResult:
    """Forward pass on raw arrays: no tape, bit-identical values."""
    return forward(params, config, features, ops=_ValueBackend(params))


def predict_probs(params: ParamStore, config: MsisConfig, features: np.ndarray,
                  chunk: int = 8192) -> dict[str, np.ndarray]:
    """Per-target probabilities as flat vectors, evaluated in chunks."""
    outs: dict[str, list[np.ndarray]] = {t: [] for t in config.all_targets()}
    for start in range(0, features.shape[0], chunk):
        result = forward_values(params, config, features[start:start + chunk])
        for t, p in result.probs.items():
            outs[t].append(p.ravel())
    return {t: np.concatenate(parts) for t, parts in outs.items()}


def make_fused_forward(params: ParamStore, config: MsisConfig,
                       features: np.ndarray):
    """Compile a zero-argument evaluator of per-target probabilities for a
    fixed feature matrix, returning a (n_targets, batch) array.

    Same math as forward(), but all parameter lookups happen once, here:
    per-target projections run as batched matmuls over the stacked group
    buffers laid out by init_params (kept live by in-place parameter
    updates), and every intermediate writes into a preallocated buffer.
    Gradient checking re-evaluates the loss twice per scalar parameter,
    which makes this path worth its weight; agreement with the tape
    forward is enforced by tests at 1e-12 relative."""
    config.validate()
    if f"head.w.{config.stages[0][0]}" not in params.groups:
        raise ContractError(
            "make_fused_forward needs group-buffered parameters from init_params")
    P = lambda name: params[name].value
    G = params.groups
    mm, add, mul, sub = np.matmul, np.add, np.multiply, np.subtract
    x = np.ascontiguousarray(features)
    b = x.shape[0]
    nt = len(config.all_targets())
    widths = config.tower_widths
    d = config.corridor_dim
    scale = 1.0 / math.sqrt(d)
    use_corridor = config.corridor_enabled and len(config.stages) > 1
    probs = np.empty((nt, b))

    shared_bufs = [np.empty((b, w)) for w in config.shared_widths]
    shared_ws = [(P(f"shared.{i}.w"), P(f"shared.{i}.b"))
                 for i in range(len(config.shared_widths))]
    tower_bufs = [np.empty((nt, b, w)) for w in widths]
    tower_ws = [(G[f"tower.w.{i}"], G[f"tower.b.{i}"]) for i in range(len(widths))]

    def bottom():
        src = x
        for buf, (w, bias) in zip(shared_bufs, shared_ws):
            mm(src, w, out=buf)
            add(buf, bias, out=buf)
            np.maximum(buf, 0.0, out=buf)
            src = buf
        if not widths:
            return np.broadcast_to(src, (nt, b, src.shape[1]))
        last = len(widths) - 1
        prev = src[None]
        for i, (buf, (w, bias)) in enumerate(zip(tower_bufs, tower_ws)):
            mm(prev, w, out=buf)
            add(buf, bias, out=buf)
            if i < last:
                np.maximum(buf, 0.0, out=buf)
            prev = buf
        return tower_bufs[-1]

    def compile_stage(si: int, sname: str, ns: int, sl: slice):
        head_w, head_b = G[f"head.w.{sname}"], G[f"head.b.{sname}"]
        logits = np.empty((ns, b, 1))
        fuse = use_corridor and si > 0
        emit = use_corridor and si < len(config.stages) - 1
        if fuse:
            prev_name = config.stages[si - 1][0]
            f_w = P(f"corridor.{prev_name}-{sname}.f.w")
            f_b = P(f"corridor.{prev_name}-{sname}.f.b")
            fin_w, fin_b = G[f"fuse_in.w.{sname}"], G[f"fuse_in.b.{sname}"]
            fself_w, fself_b = G[f"fuse_self.w.{sname}"], G[f"fuse_self.b.{sname}"]
            e_in = np.empty((b, d))
            e_proj = np.empty((3 * ns, b, d))
            h_proj = np.empty((ns, 3, b, d))
            prod = np.empty((ns, b, d))
            s_in = np.empty((ns, b))
            s_self = np.empty((ns, b))
            beta1 = np.empty((ns, b))
            fused = np.empty((ns, b, d))
            ftmp = np.empty((ns, b, d))
        if emit:
            g3_w, g3_b = P(f"intra.{sname}.g3.w"), P(f"intra.{sname}.g3.b")
            g3 = np.empty((ns, b, d))
            if ns > 1:
                g1_w, g1_b = P(f"intra.{sname}.g1.w"), P(f"intra.{sname}.g1.b")
                g2_w, g2_b = P(f"intra.{sname}.g2.w"), P(f"intra.{sname}.g2.b")
                g1 = np.empty((ns, b, d))
                g2 = np.empty((ns, b, d))
                score = np.empty((ns, b))
                zrow = np.empty(b)
                e_ou = np.empty((b, d))

        post_fusion = config.attention_input == "post_fusion"

        slope = nm.LEAKY_SLOPE
        if fuse:
            e_in_s = np.empty_like(e_in)
            e_proj_s = np.empty_like(e_proj)
            h_proj_s = np.empty_like(h_proj)
        if emit:
            g3_s = np.empty_like(g3)

        def leaky(buf, scratch):
            mul(buf, slope, out=scratch)
            np.maximum(buf, scratch, out=buf)

        def stage(h, prev_e):
            hs = towers = h[sl]
            if fuse:
                mm(prev_e, f_w, out=e_in)
                add(e_in, f_b, out=e_in)
                leaky(e_in, e_in_s)
                mm(e_in[None], fin_w, out=e_proj)
                add(e_proj, fin_b, out=e_proj)
                leaky(e_proj, e_proj_s)
                mm(hs[:, None], fself_w, out=h_proj)
                add(h_proj, fself_b, out=h_proj)
                leaky(h_proj, h_proj_s)
                mul(e_proj[1::3], e_proj[2::3], out=prod)
                prod.sum(axis=2, out=s_in)
                mul(h_proj[:, 1], h_proj[:, 2], out=prod)
                prod.sum(axis=2, out=s_self)
                sub(s_in, s_self, out=s_in)
                mul(s_in, scale, out=s_in)
                expit(s_in, out=s_in)
                sub(1.0, s_in, out=beta1)
                mul(s_in[:, :, None], e_proj[0::3], out=fused)
                mul(beta1[:, :, None], h_proj[:, 0], out=ftmp)
                add(fused, ftmp, out=fused)
                hs = fused
            mm(hs, head_w, out=logits)
            add(logits, head_b, out=logits)
            p = logits[:, :, 0]
            expit(p, out=p)
            np.maximum(p, nm.CLAMP_EPS, out=p)
            np.minimum(p, 1.0 - nm.CLAMP_EPS, out=p)
            probs[sl] = p
            if not emit:
                return None
            reps = hs if post_fusion else towers
            mm(reps, g3_w, out=g3)
            add(g3, g3_b, out=g3)
            leaky(g3, g3_s)
            if ns == 1:
                return g3[0]
            mm(reps, g1_w, out=g1)
            add(g1, g1_b, out=g1)
            leaky(g1, g3_s)
            mm(reps, g2_w, out=g2)
            add(g2, g2_b, out=g2)
            leaky(g2, g3_s)
            mul(g1, g2, out=g1)
            g1.sum(axis=2, out=score)
            mul(score, scale, out=score)
            sub(score, score.max(axis=0), out=score)
            np.exp(score, out=score)
            score.sum(axis=0, out=zrow)
            np.divide(score, zrow, out=score)
            mul(score[:, :, None], g3, out=g3)
            return g3.sum(axis=0, out=e_ou)

        return stage

    stage_steps = []
    offset = 0
    for si, (sname, stage_targets) in enumerate(config.stages):
        ns = len(stage_targets)
        stage_steps.append(compile_stage(si, sname, ns, slice(offset, offset + ns)))
        offset += ns

    def run() -> np.ndarray:
        h = bottom()
        prev_e = None
        for step in stage_steps:
            prev_e = step(h, prev_e)
        return probs

    return run


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "msis-checkpoint-v1"


def save_checkpoint(params: ParamStore, config: MsisConfig, path: str | Path) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "seed": params.seed,
        "config": config.to_dict(),
        "params": [[name, list(node.value.shape), node.value.ravel().tolist()]
                   for name, node in params.items()],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path: str | Path) -> tuple[ParamStore, MsisConfig]:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ContractError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    config = MsisConfig.from_dict(payload["config"])
    params = init_params(config, seed=int(payload["seed"]))
    values = {}
    for name, shape, flat in payload["params"]:
        values[name] = np.array(flat, dtype=np.float64).reshape(shape)
    params.load_values(values)
    return params, config
