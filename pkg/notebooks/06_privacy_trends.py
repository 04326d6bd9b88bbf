"""
Privacy and personalization trends
==================================

Multinomial logistic regression on synthetic 10-class data, 20 clients,
averaged over 10 seeds.  A small lambda keeps clients' losses closer
together than a large one.  The loss gap between privacy budgets is small:
epsilon=1 is clearly worse, but epsilon=10 and epsilon=100 differ by less
than the seed-to-seed spread, so their order can flip with fewer seeds.
"""

# %%
from dataclasses import replace
from pathlib import Path

import numpy as np

from dpditto import fedsim
from dpditto.cli import build_workload
from dpditto.config import load_config

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "mlr_trends.toml")
seeds = range(10)


def final(eps, lam, attr):
    vals = []
    for s in seeds:
        wl = build_workload(cfg, s)
        run = fedsim.run_training(replace(cfg.training, seed=s, lam=lam),
                                  replace(cfg.privacy, epsilon=eps), wl.model, wl.datasets)
        vals.append(getattr(run[-1], attr))
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / np.sqrt(len(vals)))


# %%
for eps in (1.0, 10.0, 100.0):
    m, se = final(eps, 0.1, "mean_loss")
    print(f"epsilon={eps:6.1f}  final loss={m:.5f} +/- {se:.5f}")

# %%
for lam in (0.1, 2.0):
    m, se = final(10.0, lam, "empirical_fairness")
    print(f"lambda={lam:.1f}  final fairness={m:.3e} +/- {se:.1e}")
