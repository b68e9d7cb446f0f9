"""Trust-region search on first-order Taylor models.

One solver call returns the spectrum and its parameter derivatives. A Taylor
model of re/im built from that single call is minimized inside a shrinking box
around the incumbent. Converges in a handful of calls, but only to the
optimum whose basin holds the start point.
"""

# %%
import numpy as np

from gesbo import evaluate, instance, run_local
from gesbo.local_model import LocalConfig
from gesbo.testbed import grid_oracle

model = instance("single-band-2d")
spec = model.objective_spec
oracle = grid_oracle(model)[0]
print(f"grid oracle: {oracle.value:.3f} dB at {np.round(oracle.x, 4)}")

start = evaluate(model, model.space.center, spec)
for k, ev in enumerate(run_local(start, LocalConfig(), model, spec, model.space), 1):
    print(f"call {k:2d}: {ev.objective_value:8.3f} dB at {np.round(ev.x, 4)}")

# %%
# The dual-band antenna has two local optima. Local search started in the
# basin of the weaker one stays there.
model = instance("dual-band-2d")
spec = model.objective_spec
opts = grid_oracle(model)
for o in opts:
    print(f"optimum {np.round(o.u, 3)} (normalized): {o.value:.3f} dB")

for u0 in [(0.2, 0.8), (0.5, 0.2)]:
    start = evaluate(model, model.space.denormalize(u0), spec)
    best = min(run_local(start, LocalConfig(), model, spec, model.space), key=lambda e: e.objective_value)
    print(f"start {u0} -> {best.objective_value:.3f} dB at {np.round(model.space.normalize(best.x), 3)}")
