"""The global surrogate and Expected Improvement.

Every evaluated design contributes a Taylor model; inverse-distance weights
blend them into a surrogate that reproduces each anchor exactly. The spread
between the blend and the nearest anchor's own model serves as uncertainty,
and Expected Improvement trades the two off.
"""

# %%
import numpy as np

from gesbo import GlobalSurrogate, evaluate, full_factorial, instance, propose_global_candidate
from gesbo.global_model import surface_grid

model = instance("dual-band-2d")
spec = model.objective_spec
anchors = [evaluate(model, x, spec) for x in full_factorial(model.space, [3, 3])]
g = GlobalSurrogate(anchors, model.space)

# %%
# Exact at the anchors.
u = np.array([model.space.normalize(a.x) for a in anchors])
obj, sigma = g.objective_parts(u, spec)
print("max |surrogate - solver| at anchors:",
      np.max(np.abs(obj - [a.objective_value for a in anchors])), "dB")
print("max sigma at anchors:", sigma.max(), "dB")

# %%
# Coarse text view of the surrogate objective on a 9x9 grid (dB).
x1, x2, surf, sig = surface_grid(g, spec, 9)
print(np.array2string(surf.reshape(9, 9).T[::-1], precision=0, suppress_small=True))

# %%
best = min(a.objective_value for a in anchors)
ei = propose_global_candidate(g, best, spec, seed=0)
print(f"incumbent {best:.3f} dB; EI candidate {np.round(ei.candidate, 4)} with "
      f"predicted {ei.obj_approx:.3f} dB, sigma {ei.sigma:.3f}, EI {ei.ei:.4f}")
truth = evaluate(model, ei.candidate, spec).objective_value
print(f"solver says {truth:.3f} dB there")
