"""
Fairness of personalized models
===============================

The across-client variance of the personalized excess loss, from the
closed form and from simulation.  The standard closed form and the exact
expectation disagree; the simulation sides with the exact one.
"""

# %%
from dpditto import blr, fairness as F
from dpditto.core import seeded_rng

inst = blr.generate_instance(blr.BlrParams(3, 6, 2, 4.0, 0.5, 0.5), rng=seeded_rng(2))
fp = F.fairness_params_from_instance(inst, sigma_z2=0.5)

# %%
print(f"{'lambda':>7} {'R':>10} {'R exact':>10} {'MC mean':>10} {'MC se':>9}")
for i, lam in enumerate((0.1, 0.5, 1.0, 1.9)):
    mean, se = F.mc_oracle(lam, fp, inst.u_hat, 200_000, seeded_rng(3, i))
    print(f"{lam:7.2f} {F.fairness_R(lam, fp):10.5f} {F.fairness_R_exact(lam, fp):10.5f} {mean:10.5f} {se:9.5f}")

# %% [markdown]
# With a shared aggregate noise vector the clients' noise is correlated and
# the variance is smaller still.

# %%
print(F.mc_oracle(1.0, fp, inst.u_hat, 100_000, seeded_rng(4), mode="correlated"))
