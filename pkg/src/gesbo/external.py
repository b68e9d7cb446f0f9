"""File-based protocol for plugging an external field solver into the optimizer.

For every design the optimizer creates a fresh call directory inside the
working directory, writes ``request.json`` there and runs::

    <command...> <call_dir>/request.json <call_dir>/response.json

with the call directory as the current directory.

``request.json``::

    {"parameters": [{"name": "w_s", "value": 1.25}, ...],
     "frequencies_GHz": [5.0, 5.012, ...]}

``response.json``::

    {"re": [m floats], "im": [m floats],
     "d_re": [[d floats] * m], "d_im": [[d floats] * m]}

Derivative arrays are row-major with one row per frequency and one column per
parameter, in units of 1/parameter-unit; a flat list of ``m * d`` values in the
same order is accepted too. An optional ``frequencies_GHz`` echo must match the
request. A nonzero exit status, a missing file, a missing field or a shape
mismatch counts as a solver failure.
"""

from __future__ import annotations

import json
import os
import subprocess
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .design_space import ParameterSpace
from .local_model import SolverError
from .spectrum import ComplexSpectrum, FrequencyGrid

REQUEST_NAME = "request.json"
RESPONSE_NAME = "response.json"
RESPONSE_FIELDS = ("re", "im", "d_re", "d_im")


def write_request(path, space: ParameterSpace, grid: FrequencyGrid, x) -> None:
    payload = {
        "parameters": [{"name": n, "value": float(v)} for n, v in zip(space.names, x)],
        "frequencies_GHz": [float(f) for f in grid.freqs],
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def read_request(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Parse a request file into (names, values, frequencies); for solver-side scripts."""
    payload = json.loads(Path(path).read_text())
    names = [p["name"] for p in payload["parameters"]]
    values = np.array([p["value"] for p in payload["parameters"]], dtype=float)
    return names, values, np.array(payload["frequencies_GHz"], dtype=float)


def write_response(path, spectrum_values, d_re, d_im) -> None:
    s = np.asarray(spectrum_values)
    payload = {
        "re": s.real.tolist(),
        "im": s.imag.tolist(),
        "d_re": np.asarray(d_re, dtype=float).tolist(),
        "d_im": np.asarray(d_im, dtype=float).tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def parse_response(payload: dict, grid: FrequencyGrid, d: int):
    """Validate a response mapping; returns ``(spectrum, d_re, d_im)``."""
    missing = [k for k in RESPONSE_FIELDS if k not in payload]
    if missing:
        raise SolverError(f"response is missing fields {missing}")
    m = len(grid)
    if "frequencies_GHz" in payload:
        echoed = np.asarray(payload["frequencies_GHz"], dtype=float)
        if echoed.shape != (m,) or not np.allclose(echoed, grid.freqs, rtol=1e-12, atol=0):
            raise SolverError("response frequencies do not match the request")
    try:
        re = np.asarray(payload["re"], dtype=float)
        im = np.asarray(payload["im"], dtype=float)
        for key, a in (("re", re), ("im", im)):
            if a.shape != (m,):
                raise SolverError(f"{key} must hold {m} values, got shape {a.shape}")
        derivs = []
        for key in ("d_re", "d_im"):
            a = np.asarray(payload[key], dtype=float)
            if a.ndim == 1 and a.size == m * d:
                a = a.reshape(m, d)
            if a.shape != (m, d):
                raise SolverError(f"{key} must be {m}x{d}, got shape {a.shape}")
            derivs.append(a)
        spectrum = ComplexSpectrum(grid, re, im)
    except (TypeError, ValueError) as exc:
        raise SolverError(f"malformed response: {exc}") from exc
    if not all(np.all(np.isfinite(a)) for a in derivs):
        raise SolverError("response derivatives contain non-finite values")
    return spectrum, derivs[0], derivs[1]


class ExternalSolver:
    """Runs an external program once per design via request/response JSON files."""

    def __init__(self, command: Sequence[str] | str, space: ParameterSpace, grid: FrequencyGrid,
                 workdir=".", timeout: float | None = None, env: dict | None = None):
        if isinstance(command, str):
            import shlex
            command = shlex.split(command)
        if not command:
            raise ValueError("external solver command is empty")
        self.command = list(command)
        self.space = space
        self.grid = grid
        self.workdir = Path(workdir)
        self.timeout = timeout
        self.env = env

    def respond(self, x):
        self.workdir.mkdir(parents=True, exist_ok=True)
        call_dir = Path(tempfile.mkdtemp(prefix="call_", dir=self.workdir))
        request = call_dir / REQUEST_NAME
        response = call_dir / RESPONSE_NAME
        write_request(request, self.space, self.grid, x)
        env = None if self.env is None else {**os.environ, **self.env}
        try:
            proc = subprocess.run(self.command + [str(request.resolve()), str(response.resolve())],
                                  cwd=call_dir, capture_output=True, text=True,
                                  timeout=self.timeout, env=env)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise SolverError(f"could not run external solver: {exc}", x) from exc
        if proc.returncode != 0:
            tail = (proc.stderr or proc.stdout).strip().splitlines()[-5:]
            detail = " | ".join(tail) or "no output"
            raise SolverError(f"external solver exited with status {proc.returncode}: {detail}", x)
        if not response.exists():
            raise SolverError(f"external solver wrote no {RESPONSE_NAME}", x)
        try:
            payload = json.loads(response.read_text())
        except json.JSONDecodeError as exc:
            raise SolverError(f"response is not valid JSON: {exc}", x) from exc
        if not isinstance(payload, dict):
            raise SolverError("response must be a JSON object", x)
        try:
            return parse_response(payload, self.grid, self.space.dim)
        except SolverError as exc:
            exc.x = np.array(x, dtype=float)
            raise
