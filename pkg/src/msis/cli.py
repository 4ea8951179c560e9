"""Experiment driver: simulate, train, evaluate, ablate, sweep, gradcheck,
and report as reproducible runs.

Configuration comes from a JSON file with nested sections (sim, model,
loss, train, split, baselines, sweep) merged over built-in defaults;
``--set section.key=value`` overrides single fields from the command line
(flags > file > defaults). Every command writes a manifest with the
resolved-config hash, the seed list, and a checksum per artifact, so any
result can be re-derived.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import baselines as bl
from . import dataset as ds
from . import evaluation as ev
from . import funnel_sim as fs
from . import loss as lo
from . import model as mo
from . import numerics as nm
from . import trainer as tr
from .errors import ConfigError

CONFIG_ENV_VAR = "MSIS_CONFIG"

DEFAULTS: dict = {
    "sim": {
        "n": 100000,
        "feature_dim": 32,
        "acceptance_rate": 0.3,
        "policy_alignment": 0.6,
        "draw_horizons": [30, 90],
        "n_terms": 6,
        "drift_shift": 0.5,
        "oot_fraction": 0.2,
        "seed": 0,
    },
    "model": {
        "input_dim": 32,
        "shared_widths": [64, 32],
        "tower_widths": [16, 8],
        "corridor_dim": 8,
        "stages": [[name, list(targets)] for name, targets in mo.DEFAULT_STAGES],
        "corridor_enabled": True,
        "attention_input": "post_fusion",
    },
    "loss": {
        "stage_weights": {"ar": 1.0, "ws": 1.0, "gb": 1.0},
        "gammas": lo.default_gammas(),
        "unlabeled_reduction": "mean",
    },
    "train": {
        "epochs": 50,
        "batch_size": 64,
        "learning_rate": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
        "patience": 5,
        "seeds": [0, 1, 2, 3, 4],
    },
    "split": {"seed": 0, "cutoff_day": None},
    "baselines": ["single_task"],
    "sweep": {"corridor_dim": [2, 4, 8, 16, 24],
              "gamma": [6e-5, 2e-4, 6e-4, 2e-3, 6e-3]},
}


@dataclasses.dataclass
class ExperimentConfig:
    sim: fs.SimConfig
    model: mo.MsisConfig
    loss: lo.LossConfig
    train: tr.TrainConfig
    split_seed: int
    cutoff_day: int
    baselines: tuple[str, ...]
    sweep: dict
    resolved: dict

    def sha256(self) -> str:
        return hashlib.sha256(
            json.dumps(self.resolved, sort_keys=True).encode()).hexdigest()


# map-valued fields whose keys are target/stage names, not a fixed schema
OPEN_KEYED = ("gammas", "stage_weights")


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config field {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            if key in OPEN_KEYED:
                merged = dict(base[key])
                merged.update(value)
                out[key] = merged
            else:
                out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _apply_set(resolved: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects section.key=value, got {assignment!r}")
    dotted, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = resolved
    parts = dotted.split(".")
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown config field {dotted!r}")
        node = node[part]
    leaf = parts[-1]
    open_keyed = len(parts) > 1 and parts[-2] in OPEN_KEYED
    if not isinstance(node, dict) or (leaf not in node and not open_keyed):
        raise ConfigError(f"unknown config field {dotted!r}")
    node[leaf] = value


def load_config(path: str | None, overrides: list[str]) -> ExperimentConfig:
    resolved = json.loads(json.dumps(DEFAULTS))  # deep copy
    path = path or os.environ.get(CONFIG_ENV_VAR)
    if path:
        with open(path) as fh:
            file_cfg = json.load(fh)
        resolved = _merge(resolved, file_cfg)
    for assignment in overrides:
        _apply_set(resolved, assignment)
    try:
        sim = fs.SimConfig(
            n=int(resolved["sim"]["n"]),
            feature_dim=int(resolved["sim"]["feature_dim"]),
            acceptance_rate=float(resolved["sim"]["acceptance_rate"]),
            policy_alignment=float(resolved["sim"]["policy_alignment"]),
            draw_horizons=tuple(resolved["sim"]["draw_horizons"]),
            n_terms=int(resolved["sim"]["n_terms"]),
            drift_shift=float(resolved["sim"]["drift_shift"]),
            oot_fraction=float(resolved["sim"]["oot_fraction"]),
            seed=int(resolved["sim"]["seed"]))
        sim.validate()
        model = mo.MsisConfig.from_dict(resolved["model"])
        model.validate()
        loss = lo.LossConfig(
            stage_weights={k: float(v) for k, v in
                           resolved["loss"]["stage_weights"].items()},
            gammas={k: float(v) for k, v in resolved["loss"]["gammas"].items()},
            unlabeled_reduction=resolved["loss"]["unlabeled_reduction"])
        loss.validate()
        train = tr.TrainConfig(
            epochs=int(resolved["train"]["epochs"]),
            batch_size=int(resolved["train"]["batch_size"]),
            learning_rate=float(resolved["train"]["learning_rate"]),
            beta1=float(resolved["train"]["beta1"]),
            beta2=float(resolved["train"]["beta2"]),
            epsilon=float(resolved["train"]["epsilon"]),
            patience=int(resolved["train"]["patience"]),
            seeds=tuple(int(s) for s in resolved["train"]["seeds"]))
        train.validate()
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid configuration: {exc}") from exc
    cutoff = resolved["split"]["cutoff_day"]
    cutoff = fs.oot_cutoff_day(sim) if cutoff is None else int(cutoff)
    return ExperimentConfig(sim, model, loss, train,
                            split_seed=int(resolved["split"]["seed"]),
                            cutoff_day=cutoff,
                            baselines=tuple(resolved["baselines"]),
                            sweep=resolved["sweep"], resolved=resolved)


# ---------------------------------------------------------------------------
# run directories and manifests
# ---------------------------------------------------------------------------

def _run_dir(args, cfg: ExperimentConfig) -> Path:
    if args.out:
        path = Path(args.out)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S", time.gmtime())
        path = Path("runs") / f"{stamp}-{cfg.sha256()[:8]}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command: str, cfg: ExperimentConfig,
                   artifacts: list[Path]) -> None:
    manifest = {
        "command": command,
        "config_sha256": cfg.sha256(),
        "seeds": list(cfg.train.seeds),
        "artifacts": {p.name: _sha256_file(p) for p in artifacts},
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# shared data plumbing
# ---------------------------------------------------------------------------

def _load_splits(data_dir: Path, cfg: ExperimentConfig):
    examples = ds.load_csv(data_dir / "dataset.csv")
    splits = ds.split_oot(examples, cfg.cutoff_day, seed=cfg.split_seed)
    standardizer = ds.Standardizer.fit(splits.train)
    return ds.Splits(standardizer.apply(splits.train),
                     standardizer.apply(splits.validation),
                     standardizer.apply(splits.test)), standardizer


def _load_counterfactuals(data_dir: Path):
    path = data_dir / "counterfactuals.csv"
    if not path.exists():
        raise ConfigError(f"full-population scope needs {path}")
    return fs.load_counterfactuals(path)


def _write_rows_csv(path: Path, rows: list[dict], seeds) -> None:
    with open(path, "w", newline="") as fh:
        import csv as _csv
        writer = _csv.writer(fh)
        writer.writerow(["seed", "target", "auc"])
        for seed, row in zip(seeds, rows):
            for target, value in row.items():
                writer.writerow([seed, target,
                                 "" if value is None else repr(value)])


def _read_rows_csv(path: Path) -> list[dict]:
    import csv as _csv
    by_seed: dict[str, dict] = {}
    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        next(reader)
        for seed, target, value in reader:
            by_seed.setdefault(seed, {})[target] = float(value) if value else None
    return list(by_seed.values())


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.set or [])
    out = _run_dir(args, cfg)
    population = fs.generate(cfg.sim)
    examples = fs.observe(population, cfg.sim.draw_horizons)
    ds.save_csv(examples, out / "dataset.csv")
    fs.save_counterfactuals(population, out / "counterfactuals.csv")
    write_manifest(out, "simulate", cfg,
                   [out / "dataset.csv", out / "counterfactuals.csv"])
    accepted = sum(1 for r in population if r.labels["credit"])
    print(f"simulated {len(population)} applications ({accepted} accepted) "
          f"into {out}")
    return 0


def _model_for_name(name: str, cfg: ExperimentConfig):
    if name == "msis":
        return None
    if ":" in name:
        kind, target = name.split(":", 1)
    else:
        kind, target = name, None
    return bl.BaselineKind(kind), target


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set or [])
    out = _run_dir(args, cfg)
    data_dir = Path(args.data)
    splits, standardizer = _load_splits(data_dir, cfg)
    standardizer.to_json(out / "standardizer.json")
    artifacts = [out / "standardizer.json"]
    name = args.model
    for seed in cfg.train.seeds:
        if name == "msis":
            params, history = tr.train_run(cfg.model, cfg.loss, cfg.train,
                                           splits, seed)
            model_cfg = cfg.model
        else:
            kind, target = _model_for_name(name, cfg)
            params, history, model_cfg = bl.train_baseline(
                kind, target, splits, cfg.train, seed,
                gamma=max(cfg.loss.gammas.values()),
                unlabeled_reduction=cfg.loss.unlabeled_reduction,
                base=cfg.model, loss_cfg=cfg.loss)
        tag = name.replace(":", "-")
        ckpt = out / f"checkpoint-{tag}-seed{seed}.json"
        log = out / f"train-log-{tag}-seed{seed}.csv"
        mo.save_checkpoint(params, model_cfg, ckpt)
        tr.write_history_csv(history, log)
        artifacts += [ckpt, log]
        print(f"{name} seed {seed}: best epoch {history.best_epoch} "
              f"of {len(history.epochs)}")
    write_manifest(out, f"train {name}", cfg, artifacts)
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config, args.set or [])
    out = _run_dir(args, cfg)
    data_dir = Path(args.data)
    run_dir = Path(args.run)
    splits, _ = _load_splits(data_dir, cfg)
    scope = ev.FULL_POPULATION if args.scope == "full" else ev.OBSERVED
    counterfactuals = _load_counterfactuals(data_dir) if scope == ev.FULL_POPULATION \
        else None
    tag = args.model.replace(":", "-")
    rows = []
    seeds = []
    for seed in cfg.train.seeds:
        ckpt = run_dir / f"checkpoint-{tag}-seed{seed}.json"
        if not ckpt.exists():
            raise ConfigError(f"missing checkpoint {ckpt}")
        params, model_cfg = mo.load_checkpoint(ckpt)
        rows.append(ev.evaluate(params, model_cfg, splits.test, scope,
                                counterfactuals))
        seeds.append(seed)
    rows_path = out / f"metrics-runs-{tag}-{args.scope}.csv"
    _write_rows_csv(rows_path, rows, seeds)
    rep = ev.report(rows, scope=scope)
    rep_path = out / f"metrics-report-{tag}-{args.scope}.csv"
    rep.to_csv(rep_path)
    print(rep.to_text())
    write_manifest(out, f"evaluate {args.model} {args.scope}", cfg,
                   [rows_path, rep_path])
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config, args.set or [])
    out = _run_dir(args, cfg)
    data_dir = Path(args.data)
    splits, _ = _load_splits(data_dir, cfg)
    scope = ev.FULL_POPULATION if args.scope == "full" else ev.OBSERVED
    counterfactuals = _load_counterfactuals(data_dir) if scope == ev.FULL_POPULATION \
        else None
    artifacts = []
    results: dict[str, ev.AblationResult] = {}
    variants = [ev.AblationVariant.FULL] + [
        v for v in ev.AblationVariant if v is not ev.AblationVariant.FULL]
    for variant in variants:
        result = ev.ablate(variant, cfg.model, cfg.loss, cfg.train, splits,
                           splits.test, counterfactuals, scope)
        results[variant.value] = result
        path = out / f"ablation-rows-{variant.value}.csv"
        _write_rows_csv(path, result.rows, cfg.train.seeds)
        artifacts.append(path)
        print(f"ablation {variant.value}: done")
    full_rows = results["full"].rows
    table_path = out / "ablation-report.csv"
    with open(table_path, "w", newline="") as fh:
        import csv as _csv
        writer = _csv.writer(fh)
        writer.writerow(["variant", "target", "auc_mean", "auc_std",
                         "gap_vs_full"])
        for variant, result in results.items():
            rep = ev.report(result.rows, baseline_rows=full_rows,
                            baseline_name="full", scope=scope)
            for target, m in rep.per_target.items():
                writer.writerow([variant, target, repr(m.mean), repr(m.std),
                                 "" if m.gain is None else repr(m.gain)])
    artifacts.append(table_path)
    write_manifest(out, "ablate", cfg, artifacts)
    print(f"ablation report written to {table_path}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.set or [])
    out = _run_dir(args, cfg)
    data_dir = Path(args.data)
    splits, _ = _load_splits(data_dir, cfg)
    counterfactuals = _load_counterfactuals(data_dir)
    values = cfg.sweep[args.param]
    final_targets = cfg.model.stages[-1][1]
    table: list[tuple[float, dict]] = []
    artifacts = []
    for value in values:
        if args.param == "corridor_dim":
            model_cfg = cfg.model.with_corridor_dim(int(value))
            loss_cfg = cfg.loss
        else:
            model_cfg = cfg.model
            loss_cfg = lo.LossConfig(
                dict(cfg.loss.stage_weights),
                {t: (0.0 if t == "credit" else float(value))
                 for t in cfg.loss.gammas},
                cfg.loss.unlabeled_reduction)
        rows = []
        for seed in cfg.train.seeds:
            params, _ = tr.train_run(model_cfg, loss_cfg, cfg.train, splits, seed)
            rows.append(ev.evaluate(params, model_cfg, splits.test,
                                    ev.FULL_POPULATION, counterfactuals))
        rep = ev.report(rows, scope=ev.FULL_POPULATION)
        table.append((value, rep.per_target))
        print(f"{args.param}={value}: " + " ".join(
            f"{t}={rep.per_target[t].mean:.4f}" for t in final_targets
            if t in rep.per_target))
    csv_path = out / f"sweep-{args.param}.csv"
    with open(csv_path, "w", newline="") as fh:
        import csv as _csv
        writer = _csv.writer(fh)
        writer.writerow([args.param, "target", "auc_mean", "auc_std"])
        for value, per_target in table:
            for t, m in per_target.items():
                writer.writerow([value, t, repr(m.mean), repr(m.std)])
    artifacts.append(csv_path)
    for t in final_targets:
        dat_path = out / f"sweep-{args.param}-{t}.dat"
        with open(dat_path, "w") as fh:
            fh.write(f"# {args.param}  auc_mean ({t}, full-population)\n")
            for value, per_target in table:
                if t in per_target:
                    fh.write(f"{value} {per_target[t].mean!r}\n")
        artifacts.append(dat_path)
    write_manifest(out, f"sweep {args.param}", cfg, artifacts)
    return 0


def cmd_gradcheck(args) -> int:
    cfg = load_config(args.config, args.set or [])
    out = _run_dir(args, cfg)
    sim_cfg = dataclasses.replace(cfg.sim, n=max(256, 4 * args.batch))
    examples = fs.observe(fs.generate(sim_cfg), sim_cfg.draw_horizons)
    examples = ds.Standardizer.fit(examples).apply(examples)
    worst = 0.0
    lines = []
    for seed in cfg.train.seeds:
        rng = np.random.default_rng(seed)
        rows = [examples[i] for i in rng.choice(len(examples), args.batch,
                                                replace=False)]
        batch = ds.make_batch(rows)
        params = mo.init_params(cfg.model, seed)
        loss_fn = lambda: lo.total_loss(
            mo.forward(params, cfg.model, batch.features), batch, cfg.loss,
            cfg.model.stages).total
        value_fn = lo.make_fast_loss_value_fn(params, cfg.model, cfg.loss, batch)
        report = nm.finite_diff_check(params, loss_fn, tol=args.tol,
                                      value_fn=value_fn)
        worst = max(worst, report.worst_rel_error)
        lines.append(f"seed {seed}: {report}")
        print(lines[-1])
    passed = worst < args.tol
    summary = f"worst over seeds: {worst:.3e} (tol {args.tol:g}) -> " \
        + ("PASS" if passed else "FAIL")
    lines.append(summary)
    print(summary)
    report_path = out / "gradcheck.txt"
    report_path.write_text("\n".join(lines) + "\n")
    write_manifest(out, "gradcheck", cfg, [report_path])
    return 0 if passed else 1


def cmd_report(args) -> int:
    cfg = load_config(args.config, args.set or [])
    out = _run_dir(args, cfg)
    named_rows: dict[str, list[dict]] = {}
    for item in args.runs:
        if "=" not in item:
            raise ConfigError(f"report expects name=rows.csv, got {item!r}")
        name, path = item.split("=", 1)
        named_rows[name] = _read_rows_csv(Path(path))
    baseline_rows = named_rows.get(args.baseline) if args.baseline else None
    if args.baseline and baseline_rows is None:
        raise ConfigError(f"baseline {args.baseline!r} not among run names")
    table_path = out / "comparison.csv"
    lines = []
    with open(table_path, "w", newline="") as fh:
        import csv as _csv
        writer = _csv.writer(fh)
        writer.writerow(["model", "target", "auc_mean", "auc_std", "gain",
                         "baseline"])
        for name, rows in named_rows.items():
            rep = ev.report(rows, baseline_rows=baseline_rows,
                            baseline_name=args.baseline)
            lines.append(f"== {name} ==\n{rep.to_text()}")
            for target, m in rep.per_target.items():
                writer.writerow([name, target, repr(m.mean), repr(m.std),
                                 "" if m.gain is None else repr(m.gain),
                                 args.baseline or ""])
    print("\n".join(lines))
    write_manifest(out, "report", cfg, [table_path])
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msis",
        description="Staged credit-decision experiments on a synthetic loan funnel")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help=f"JSON config file (or ${CONFIG_ENV_VAR})")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field, e.g. sim.n=5000")
        p.add_argument("--out", help="output directory (default runs/<stamp>-<hash>)")

    p = sub.add_parser("simulate", help="generate the synthetic loan funnel")
    common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("train", help="train a model across the configured seeds")
    common(p)
    p.add_argument("--data", required=True, help="directory with dataset.csv")
    p.add_argument("--model", default="msis",
                   help="msis | flat_multitask | single_task:<label> | "
                        "single_task_entropy:<label>")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="score trained checkpoints on the test split")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--run", required=True, help="directory with checkpoints")
    p.add_argument("--model", default="msis")
    p.add_argument("--scope", choices=["observed", "full"], default="observed")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the component-removal study")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--scope", choices=["observed", "full"], default="full")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("sweep", help="sweep the corridor width or entropy weight")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--param", choices=["corridor_dim", "gamma"], required=True)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of the gradients")
    common(p)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("report", help="aggregate per-seed metric files across models")
    common(p)
    p.add_argument("--baseline", help="run name the gains are measured against")
    p.add_argument("runs", nargs="+", metavar="NAME=ROWS.CSV")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
