"""
Torsion function and first eigenpair on the unit square
=======================================================

Solve the fractional torsion problem and the first eigenvalue problem on a
32 x 32 grid for a few values of p, and look at the two-sided bound that
ties them together.
"""

# %%
import numpy as np

from fraccheeger import (FracParams, SolverConfig, assemble_weights, build_grid, first_eigenpair,
                         torsion_function)

grid = build_grid("square", 32, 2)
print(grid.size, "cells,", grid.n_orbits, "symmetry orbits")

# %%
# Each p needs its own weights, since the kernel exponent is N + s p.
# Warm-starting each torsion solve from the previous one keeps the p -> 1
# solves cheap.
warm = None
for p in (2.0, 1.5, 1.25, 1.1):
    W = assemble_weights(grid, FracParams(2, 0.5, p))
    tor = torsion_function(W, cfg=SolverConfig(warm_start=warm))
    warm = tor.phi
    eig = first_eigenpair(W)
    lower = tor.sup_norm ** (1 - p)
    upper = (grid.volume / tor.l1_norm) ** (p - 1)
    print(f"p={p:<5} {lower:9.4f} <= lambda={eig.lambda1:9.4f} <= {upper:9.4f}"
          f"   ({tor.iterations} Newton steps, {eig.iterations} power steps)")

# %%
# The eigenfunction is normalised to sup norm 1 and sits below a multiple of
# the torsion function.
c = eig.lambda1 ** (1 / (p - 1))
print("max(e - c phi) =", float(np.max(eig.eigenfunction - c * tor.phi)))
print(grid.to_lattice(eig.eigenfunction)[::8, ::8].round(3))
