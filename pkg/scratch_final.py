"""Dev scratch: full dress rehearsal of acceptance criteria 5, 6, 7."""
import time

import numpy as np

from msis import baselines as bl
from msis import dataset as ds
from msis import evaluation as ev
from msis import funnel_sim as fs
from msis import loss as L
from msis import model as M
from msis import trainer as T

GB = ("mob1", "mob3", "mob6")
SEEDS = (0, 1, 2, 3, 4)

t0 = time.perf_counter()
cfg = fs.SimConfig(n=100000, seed=0)
pop = fs.generate(cfg)
examples = fs.observe(pop)
cf = fs.counterfactual_table(pop)
splits = ds.split_oot(examples, fs.oot_cutoff_day(cfg))
std = ds.Standardizer.fit(splits.train)
splits = ds.Splits(std.apply(splits.train), std.apply(splits.validation),
                   std.apply(splits.test))
print(f"world ready ({time.perf_counter()-t0:.0f}s), gb_rows="
      f"{sum(1 for ex in splits.train if ex.labels['mob6'] is not None)}", flush=True)

tcfg = T.TrainConfig(epochs=25, batch_size=64, patience=5, seeds=SEEDS)
msis_cfg = M.MsisConfig()
loss_sum = L.LossConfig(unlabeled_reduction="sum")


def gb_row(params, mcfg):
    out = ev.evaluate(params, mcfg, splits.test, ev.FULL_POPULATION, cf)
    return {t: out[t] for t in GB}


# --- criterion 5 (+7): MSIS runs and single-task baseline
t5 = time.perf_counter()
msis_rows = []
histories = []
for seed in SEEDS:
    t1 = time.perf_counter()
    params, hist = T.train_run(msis_cfg, loss_sum, tcfg, splits, seed)
    msis_rows.append(gb_row(params, msis_cfg))
    histories.append(hist)
    print(f"msis seed {seed}: {np.mean(list(msis_rows[-1].values())):.4f} "
          f"({time.perf_counter()-t1:.0f}s, {len(hist.epochs)} ep, best {hist.best_epoch})", flush=True)
single_rows = []
for seed in SEEDS:
    row = {}
    for t in GB:
        p, _, c = bl.train_baseline(bl.BaselineKind.SINGLE_TASK, t, splits, tcfg, seed)
        row[t] = gb_row(p, c)[t]
    single_rows.append(row)
    print(f"single seed {seed}: {np.mean(list(row.values())):.4f}", flush=True)
elapsed5 = time.perf_counter() - t5
msis_means = np.array([np.mean(list(r.values())) for r in msis_rows])
single_means = np.array([np.mean(list(r.values())) for r in single_rows])
print(f"C5: msis {msis_means.mean():.4f} vs single {single_means.mean():.4f} "
      f"margin {msis_means.mean()-single_means.mean():+.4f} (>=0.005?) "
      f"in {elapsed5:.0f}s (<600?)", flush=True)

# --- criterion 7: entropy drops
ok = 0
for seed, hist in zip(SEEDS, histories):
    drops = {t: 1 - hist.best_record().unlabeled_entropy[t] /
             max(hist.epochs[0].unlabeled_entropy[t], 1e-12) for t in GB}
    good = all(d >= 0.10 for d in drops.values())
    ok += good
    print(f"C7 seed {seed}: drops {[f'{drops[t]*100:.0f}%' for t in GB]} -> {good}", flush=True)
print(f"C7: {ok}/5 seeds with >=10% drop per GB target (need >=4)", flush=True)

# --- criterion 6: ablation variants vs the full rows above
for variant in (ev.AblationVariant.NO_SEMI_SUPERVISED,
                ev.AblationVariant.ONE_AUXILIARY_STAGE,
                ev.AblationVariant.NO_CORRIDOR,
                ev.AblationVariant.SINGLE_INTRA_TARGET):
    t1 = time.perf_counter()
    result = ev.ablate(variant, msis_cfg, loss_sum, tcfg, splits, splits.test, cf)
    var_means = np.array([np.mean([v for v in row.values()]) for row in result.rows])
    wins = int((msis_means >= var_means).sum())
    print(f"C6 {variant.value}: full>=variant on {wins}/5 seeds "
          f"(full {np.round(msis_means,4)} vs var {np.round(var_means,4)}) "
          f"({time.perf_counter()-t1:.0f}s)", flush=True)
print(f"total {time.perf_counter()-t0:.0f}s", flush=True)
