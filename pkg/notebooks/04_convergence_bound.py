"""
Convergence bound and the best number of rounds
===============================================

Evaluate the personalized-model bound h(T), its linear lower bound, and
the integer T that minimizes h.
"""

# %%
from dpditto import bounds
from dpditto.core import AssumptionParams

a = AssumptionParams(mu=3.0, l_smooth=4.0, g0=1.0, m_dist=0.5, psi1=2.0, psi2=3.0)
bp = bounds._derive(a, eta_g=0.1, eta_l=0.05, lam=0.5, n=5, d=4, delta_s=0.5, epsilon=1.0, delta=0.01)
print("eps_L, eps_G:", bp.eps_l, bp.eps_g)

# %%
lb = bounds.lower_bound(bp)
for t in (0, 1, 5, 20, 50, 100, 200):
    print(f"T={t:4d}  h={bounds.h(bp, t):.5f}  h_low={lb(t):.5f}")

# %% [markdown]
# Past T' the lower bound exceeds h(0), so the scan can stop there.

# %%
res = bounds.search_T(bp)
print(res)

# %%
# Less privacy noise pushes the best T out.
for eps in (0.5, 1.0, 5.0, 20.0):
    r = bounds.search_T(bp.with_epsilon(eps))
    print(f"epsilon={eps:5.1f}  T*={r.t_star}  h*={r.h_star:.5f}")
