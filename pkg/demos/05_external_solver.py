"""Driving an external solver through files.

Each call writes request.json into a fresh directory and runs a command with
the request and response paths appended. resonator_solver.py in this folder is
a stand-in for a field simulator. Same numbers as the in-process model.
"""

# %%
import sys
import tempfile
from pathlib import Path

import numpy as np

from gesbo import DoeSpec, ExternalSolver, OptimizerConfig, evaluate, instance, run

model = instance("dual-band-2d")
here = Path(__file__).resolve().parent
workdir = Path(tempfile.mkdtemp(prefix="gesbo-calls-"))
ext = ExternalSolver([sys.executable, str(here / "resonator_solver.py")], model.space, model.grid,
                     workdir=workdir)

x = model.space.center
a, b = evaluate(ext, x, model.objective_spec), evaluate(model, x, model.objective_spec)
print("max |external - builtin| in re:", np.max(np.abs(a.spectrum.re - b.spectrum.re)))
print("call directory:", sorted(p.name for p in next(workdir.iterdir()).iterdir()))

# %%
cfg = OptimizerConfig(doe=DoeSpec("full_factorial", levels=[3, 3]), max_iterations=4, stagnation_limit=4)
result = run(cfg, model.space, ext, model.objective_spec)
print(f"{len(result.history)} external calls, best {result.best.objective_value:.3f} dB "
      f"at {np.round(result.best.x, 4)}")
