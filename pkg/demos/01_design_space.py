"""Design spaces and initial designs.

Parameters live in physical units; every algorithm works in the unit cube.
This walk-through builds the two-parameter space of the dual-band antenna,
draws the two kinds of initial design and shows the Latin hypercube property.
"""

# %%
import numpy as np

from gesbo import ParameterSpace, full_factorial, latin_hypercube

space = ParameterSpace([("w_s", 0.5, 3.0), ("gap_2", 0.2, 1.2)])
print(space)
print("centre:", space.center, "normalized:", space.normalize(space.center))

# %%
# A 3x3 factorial puts anchors on the corners, edge midpoints and centre.
ff = full_factorial(space, [3, 3])
print(np.round(ff, 3))

# %%
# A Latin hypercube of n points has exactly one point in each of the n
# equal-width bins along every axis.
lhs = latin_hypercube(space, 8, seed=1)
bins = np.floor(space.normalize(lhs) * 8).astype(int)
print(np.round(lhs, 3))
print("bins per axis:", [sorted(b.tolist()) for b in bins.T])
