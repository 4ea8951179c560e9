"""Dev scratch: n=100k trio (msis-sum, msis-g0, single) for candidate worlds."""
import sys
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

def run_world(tag, seeds, **knobs):
    defaults = {k: getattr(fs, k) for k in knobs}
    for k, v in knobs.items():
        setattr(fs, k, v)
    try:
        cfg = fs.SimConfig(n=100000, seed=0)
        pop = fs.generate(cfg)
        sel = [r for r in pop if r.labels["credit"] and r.draw_day <= 90]
        rej = [r for r in pop if not r.labels["credit"]]
        ps = {t: float(np.mean([r.labels[t] for r in sel])) for t in GB}
        pr = {t: float(np.mean([r.labels[t] for r in rej])) for t in GB}
        examples = fs.observe(pop)
        cf = fs.counterfactual_table(pop)
        splits = ds.split_oot(examples, fs.oot_cutoff_day(cfg))
        std = ds.Standardizer.fit(splits.train)
        splits = ds.Splits(std.apply(splits.train), std.apply(splits.validation),
                           std.apply(splits.test))
        n_gb = sum(1 for ex in splits.train if ex.labels["mob6"] is not None)
        print(f"== {tag}: gb={n_gb} sel={ {t: round(ps[t],3) for t in GB} } "
              f"rej={ {t: round(pr[t],3) for t in GB} }", flush=True)
        tcfg = T.TrainConfig(epochs=20, batch_size=64, patience=5)

        def gb_eval(params, mcfg=M.MsisConfig()):
            out = ev.evaluate(params, mcfg, splits.test, ev.FULL_POPULATION, cf)
            return np.array([out[t] for t in GB])

        for seed in seeds:
            t1 = time.perf_counter()
            p1, h1 = T.train_run(M.MsisConfig(), L.LossConfig(unlabeled_reduction="sum"),
                                 tcfg, splits, seed)
            s1 = gb_eval(p1)
            p0, _ = T.train_run(M.MsisConfig(), L.LossConfig().supervised_only(),
                                tcfg, splits, seed)
            s0 = gb_eval(p0)
            st = np.array([ev.evaluate(*bl.train_baseline(
                bl.BaselineKind.SINGLE_TASK, t, splits, tcfg, seed)[::2],
                splits.test, ev.FULL_POPULATION, cf)[t] for t in GB])
            print(f"  seed {seed}: sum={s1.mean():.4f}{np.round(s1,3)} "
                  f"g0={s0.mean():.4f} single={st.mean():.4f}{np.round(st,3)} "
                  f"({time.perf_counter()-t1:.0f}s)", flush=True)
    finally:
        for k, v in defaults.items():
            setattr(fs, k, v)


COMMON = dict(DRAW_QUALITY_LOADING=-0.3, DRAW_INTERCEPT=-8.2,
              HAZARD_INTERCEPT=-0.6, HAZARD_QUALITY_SLOPE=6.0)
run_world("blur-0.6", seeds=(0, 1, 2), SCORE_NOISE=0.6, **COMMON)
run_world("blur-0.45", seeds=(0, 1, 2), SCORE_NOISE=0.45, **COMMON)
print("done", flush=True)
