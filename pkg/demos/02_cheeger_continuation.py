"""
Three routes to the s-Cheeger constant
======================================

As p decreases to 1 the first eigenvalue, |phi|_inf^(1-p) and |phi|_1^(1-p)
all approach the s-Cheeger constant. Here they are side by side on the
L-shaped domain, next to the best superlevel set of the last torsion function.
"""

# %%
from fraccheeger import FracParams, build_grid, continuation_estimates

grid = build_grid("l_shape", 24, 2)
schedule = (2.0, 1.5, 1.25, 1.1, 1.05)
est = continuation_estimates(grid, FracParams(2, 0.5, 2.0), schedule)

# %%
print(f"{'p':>5} {'lambda':>10} {'sup':>10} {'l1':>10} {'spread':>9}")
for p in est.completed:
    print(f"{p:5.2f} {est.lambda_curve[p]:10.4f} {est.sup_curve[p]:10.4f} "
          f"{est.l1_curve[p]:10.4f} {est.spread(p):9.2e}")

# %%
# The superlevel search gives an upper bound for the constant, with an
# explicit optimal set.
best = est.level_set
print("level-set quotient", round(est.level_set_value, 4), "using", best.count, "of", grid.size, "cells")
print(grid.lattice_mask(best.member_mask)[::3, ::3].astype(int))

# %%
# The reference ball shows the Faber-Krahn ordering in Cheeger form.
N, s = 2, 0.5
print("ball  ", est.ball_volume ** (s / N) * est.ball_level_set_value)
print("domain", grid.volume ** (s / N) * est.level_set_value)
