"""Stand-alone solver speaking the external request/response protocol.

It plays the role a field simulator would: read ``request.json``, compute the
reflection spectrum and its parameter derivatives, write ``response.json``.
Here the "simulation" is a builtin resonator instance, so results can be
compared with the in-process solver.

    python3 resonator_solver.py request.json response.json [instance]
"""

import sys

import numpy as np

from gesbo.external import read_request, write_response
from gesbo.testbed import instance

request, response = sys.argv[1], sys.argv[2]
model = instance(sys.argv[3] if len(sys.argv) > 3 else "dual-band-2d")

names, x, freqs = read_request(request)
if list(names) != list(model.space.names):
    sys.exit(f"expected parameters {model.space.names}, got {names}")
if not np.allclose(freqs, model.grid.freqs):
    sys.exit("request frequencies differ from the model grid")

spectrum, d_re, d_im = model.respond(x)
write_response(response, spectrum.values, d_re, d_im)
