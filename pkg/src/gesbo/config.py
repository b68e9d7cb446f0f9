"""Problem configuration: one JSON file describing parameters, objective, solver and optimizer.

A minimal builtin problem::

    {"solver": {"kind": "builtin", "instance": "dual-band-2d"}}

Every section is validated strictly. Unknown keys raise :class:`ConfigError`
naming the key path and its line in the file.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .design_space import ParameterSpace
from .driver import DoeSpec, OptimizerConfig
from .external import ExternalSolver
from .spectrum import FrequencyGrid, ObjectiveSpec
from .testbed import INSTANCES, Resonance, ResonatorModel, instance


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the offending key path, ``line`` its 1-based line."""

    def __init__(self, message: str, path: tuple = (), line: int | None = None):
        self.path = tuple(path)
        self.line = line
        where = ".".join(str(p) for p in self.path)
        loc = f" at {where}" if where else ""
        if line is not None:
            loc += f" (line {line})"
        super().__init__(f"{message}{loc}")


# Allowed keys per section. A value of None marks a leaf.
SCHEMA: dict[str, Any] = {
    "parameters": None,
    "objective": {"targets": None},
    "solver": {
        "kind": None,
        "instance": None,
        "overrides": {"f0": None, "q": None, "freq_sens": None, "coupling_sens": None,
                      "frequencies": None},
        "command": None,
        "workdir": None,
        "timeout": None,
        "frequencies": None,
    },
    "optimizer": {
        "doe": {"kind": None, "size": None, "levels": None},
        "max_iterations": None,
        "stagnation_limit": None,
        "improvement_tol": None,
        "shrink_factor": None,
        "initial_half_width": None,
        "min_half_width": None,
        "seeds": {"doe": None, "ei": None},
        "parallel": None,
        "weight_exponent": None,
        "weight_eps": None,
    },
    "output": {"directory": None},
}
PARAMETER_KEYS = ("name", "lower", "upper")
FREQUENCY_KEYS = ("start", "stop", "num", "bands", "values")


@dataclass
class Problem:
    """Fully parsed configuration."""

    space: ParameterSpace
    spec: ObjectiveSpec
    solver: Any
    optimizer: OptimizerConfig
    output: Path
    builtin: bool
    raw: dict


# -- locating keys ---------------------------------------------------------------


def _key_line(text: str | None, path: tuple) -> int | None:
    """1-based line of the last key in ``path``, or None if it cannot be located."""
    if not text or not path:
        return None
    try:
        node = yaml.compose(text)
        for i, part in enumerate(path):
            if isinstance(node, yaml.MappingNode):
                for k, v in node.value:
                    if k.value == part:
                        if i == len(path) - 1:
                            return k.start_mark.line + 1
                        node = v
                        break
                else:
                    return None
            elif isinstance(node, yaml.SequenceNode) and isinstance(part, int):
                node = node.value[part]
            else:
                return None
    except (yaml.YAMLError, IndexError):
        pass
    # fall back to the first textual occurrence of the key
    last = path[-1]
    if isinstance(last, str):
        m = re.search(r'"%s"\s*:' % re.escape(last), text)
        if m:
            return text.count("\n", 0, m.start()) + 1
    return None


def _check_keys(data, schema, path: tuple, text: str | None) -> None:
    if schema is None:
        return
    if not isinstance(data, dict):
        raise ConfigError("expected an object", path, _key_line(text, path))
    for key, value in data.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r}", path + (key,), _key_line(text, path + (key,)))
        _check_keys(value, schema[key], path + (key,), text)


# -- overrides -----------------------------------------------------------------


def apply_override(data: dict, assignment: str) -> None:
    """Apply ``dotted.key=value`` to ``data`` in place; the value is parsed as JSON
    when possible and kept as a string otherwise."""
    key, sep, value = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {assignment!r} is not of the form KEY=VALUE")
    path = tuple(key.strip().split("."))
    schema: Any = SCHEMA
    for i, part in enumerate(path):
        if not isinstance(schema, dict) or part not in schema:
            raise ConfigError(f"unknown key {part!r} in override", path[: i + 1])
        schema = schema[part]
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    node = data
    for part in path[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError("cannot override inside a non-object value", path)
    node[path[-1]] = parsed


# -- section parsers -------------------------------------------------------------


def _number(v, path, kind=float, positive=False, text=None):
    ok = isinstance(v, (int, float)) and not isinstance(v, bool)
    if ok and kind is int:
        ok = float(v).is_integer()
    if ok and positive:
        ok = v > 0
    if not ok or not np.isfinite(v):
        req = ("positive " if positive else "") + ("integer" if kind is int else "number")
        raise ConfigError(f"expected a {req}, got {v!r}", path, _key_line(text, path))
    return kind(v)


def _parse_parameters(items, text) -> ParameterSpace:
    path = ("parameters",)
    if not isinstance(items, list) or not items:
        raise ConfigError("expected a non-empty list of parameters", path, _key_line(text, path))
    params = []
    for i, item in enumerate(items):
        p = path + (i,)
        if not isinstance(item, dict):
            raise ConfigError("each parameter must be an object", p, _key_line(text, path))
        for k in item:
            if k not in PARAMETER_KEYS:
                raise ConfigError(f"unknown key {k!r}", p + (k,), _key_line(text, p + (k,)))
        missing = [k for k in PARAMETER_KEYS if k not in item]
        if missing:
            raise ConfigError(f"parameter is missing {missing}", p, _key_line(text, path))
        params.append((item["name"], _number(item["lower"], p + ("lower",), text=text),
                       _number(item["upper"], p + ("upper",), text=text)))
    try:
        return ParameterSpace(params)
    except ValueError as exc:
        raise ConfigError(str(exc), path, _key_line(text, path)) from None


def _parse_frequencies(spec, path, text) -> FrequencyGrid:
    if not isinstance(spec, dict):
        raise ConfigError("expected an object", path, _key_line(text, path))
    for k in spec:
        if k not in FREQUENCY_KEYS:
            raise ConfigError(f"unknown key {k!r}", path + (k,), _key_line(text, path + (k,)))
    try:
        if "values" in spec:
            return FrequencyGrid(np.asarray(spec["values"], dtype=float))
        num = _number(spec.get("num", 101), path + ("num",), int, True, text)
        if "bands" in spec:
            return FrequencyGrid.bands(*[tuple(b) for b in spec["bands"]], num=num)
        return FrequencyGrid.uniform(_number(spec["start"], path + ("start",), text=text),
                                     _number(spec["stop"], path + ("stop",), text=text), num=num)
    except KeyError as exc:
        raise ConfigError(f"frequency grid is missing {exc}", path, _key_line(text, path)) from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid frequency grid: {exc}", path, _key_line(text, path)) from None


def _builtin_solver(sec: dict, space: ParameterSpace | None, text) -> ResonatorModel:
    path = ("solver",)
    name = sec.get("instance")
    if name not in INSTANCES:
        raise ConfigError(f"unknown builtin instance {name!r}; available: {sorted(INSTANCES)}",
                          path + ("instance",), _key_line(text, path + ("instance",)))
    for k in ("command", "workdir", "timeout", "frequencies"):
        if k in sec:
            raise ConfigError(f"key {k!r} only applies to external solvers", path + (k,),
                              _key_line(text, path + (k,)))
    base = instance(name)
    ov = sec.get("overrides", {})
    if space is None and not ov:
        return base
    if space is None:
        space = base.space
    elif space.dim != base.space.dim:
        raise ConfigError(f"instance {name!r} has {base.space.dim} parameters, config lists {space.dim}",
                          ("parameters",), _key_line(text, ("parameters",)))
    k = len(base.resonances)
    opath = path + ("overrides",)
    try:
        f0 = np.asarray(ov.get("f0", [r.f0 for r in base.resonances]), dtype=float)
        q = np.asarray(ov.get("q", [r.q for r in base.resonances]), dtype=float)
        if f0.shape != (k,) or q.shape != (k,):
            raise ValueError(f"f0 and q need {k} entries")
        resonances = [Resonance(float(a), float(b), r.coupling) for a, b, r in zip(f0, q, base.resonances)]
        grid = base.grid
        if "frequencies" in ov:
            grid = _parse_frequencies(ov["frequencies"], opath + ("frequencies",), text)
        return ResonatorModel(resonances, ov.get("freq_sens", base.freq_sens),
                              ov.get("coupling_sens", base.coupling_sens), grid, space,
                              base.targets, name=name)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid override: {exc}", opath, _key_line(text, opath)) from None


def _external_solver(sec: dict, space: ParameterSpace | None, base_dir: Path, text) -> ExternalSolver:
    path = ("solver",)
    if space is None:
        raise ConfigError("external solvers need an explicit parameters list", ("parameters",))
    for k in ("instance", "overrides"):
        if k in sec:
            raise ConfigError(f"key {k!r} only applies to builtin solvers", path + (k,),
                              _key_line(text, path + (k,)))
    command = sec.get("command")
    if isinstance(command, str):
        command = [command]
    if not isinstance(command, list) or not command or not all(isinstance(c, str) for c in command):
        raise ConfigError("command must be a non-empty string or list of strings", path + ("command",),
                          _key_line(text, path + ("command",)))
    # the command runs inside a per-call directory, so let it name files next to the config
    command = [c.replace("{config_dir}", str(base_dir.resolve())) for c in command]
    if "frequencies" not in sec:
        raise ConfigError("external solvers need a frequencies grid", path, _key_line(text, path))
    grid = _parse_frequencies(sec["frequencies"], path + ("frequencies",), text)
    workdir = Path(sec.get("workdir", "solver_runs"))
    if not workdir.is_absolute():
        workdir = base_dir / workdir
    timeout = sec.get("timeout")
    if timeout is not None:
        timeout = _number(timeout, path + ("timeout",), positive=True, text=text)
    return ExternalSolver(command, space, grid, workdir=workdir, timeout=timeout)


def _parse_optimizer(sec: dict, text) -> OptimizerConfig:
    path = ("optimizer",)
    cfg = OptimizerConfig()
    doe = sec.get("doe", {})
    kind = doe.get("kind", "lhs")
    if kind not in ("lhs", "full_factorial"):
        raise ConfigError(f"unknown DoE kind {kind!r}", path + ("doe", "kind"),
                          _key_line(text, path + ("doe", "kind")))
    size = doe.get("size", 20 if kind == "lhs" else None)
    if size is not None:
        size = _number(size, path + ("doe", "size"), int, True, text)
    levels = doe.get("levels")
    if levels is not None:
        if not isinstance(levels, list):
            raise ConfigError("levels must be a list of integers", path + ("doe", "levels"),
                              _key_line(text, path + ("doe", "levels")))
        levels = [_number(v, path + ("doe", "levels"), int, True, text) for v in levels]
    cfg.doe = DoeSpec(kind, size, levels)

    ints = {"max_iterations": "max_iterations", "stagnation_limit": "stagnation_limit"}
    floats = ("improvement_tol", "shrink_factor", "initial_half_width", "min_half_width",
              "weight_exponent", "weight_eps")
    for key, attr in ints.items():
        if key in sec:
            setattr(cfg, attr, _number(sec[key], path + (key,), int, True, text))
    for key in floats:
        if key in sec:
            setattr(cfg, key, _number(sec[key], path + (key,), positive=True, text=text))
    seeds = sec.get("seeds", {})
    if "doe" in seeds:
        cfg.doe_seed = _number(seeds["doe"], path + ("seeds", "doe"), int, text=text)
    if "ei" in seeds:
        cfg.ei_seed = _number(seeds["ei"], path + ("seeds", "ei"), int, text=text)
    if "parallel" in sec:
        if not isinstance(sec["parallel"], bool):
            raise ConfigError("parallel must be true or false", path + ("parallel",),
                              _key_line(text, path + ("parallel",)))
        cfg.parallel_evals = sec["parallel"]
    return cfg


def parse_config(data: dict, text: str | None = None, base_dir=".") -> Problem:
    """Validate a configuration mapping and build the problem objects.

    ``text`` is the original file content, used to attach line numbers to errors.
    """
    if not isinstance(data, dict):
        raise ConfigError("the configuration must be a JSON object")
    _check_keys(data, SCHEMA, (), text)
    base_dir = Path(base_dir)

    space = _parse_parameters(data["parameters"], text) if "parameters" in data else None
    sec = data.get("solver")
    if sec is None:
        raise ConfigError("missing solver section", ("solver",))
    kind = sec.get("kind", "builtin")
    if kind == "builtin":
        solver = _builtin_solver(sec, space, text)
    elif kind == "external":
        solver = _external_solver(sec, space, base_dir, text)
    else:
        raise ConfigError(f"solver kind must be 'builtin' or 'external', got {kind!r}",
                          ("solver", "kind"), _key_line(text, ("solver", "kind")))
    space = solver.space

    obj = data.get("objective", {})
    path = ("objective", "targets")
    if "targets" in obj:
        try:
            spec = ObjectiveSpec(tuple(obj["targets"]) if isinstance(obj["targets"], list) else obj["targets"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), path, _key_line(text, path)) from None
    elif kind == "builtin":
        spec = solver.objective_spec
    else:
        raise ConfigError("objective targets are required", path)
    try:
        spec.validate(solver.grid)
    except ValueError as exc:
        raise ConfigError(str(exc), path, _key_line(text, path)) from None

    optimizer = _parse_optimizer(data.get("optimizer", {}), text)
    try:
        optimizer.validate(space.dim)
    except ValueError as exc:
        raise ConfigError(str(exc), ("optimizer",), _key_line(text, ("optimizer",))) from None

    out = Path(data.get("output", {}).get("directory", "out"))
    if not out.is_absolute():
        out = base_dir / out
    return Problem(space, spec, solver, optimizer, out, kind == "builtin", data)


def load_config(path, overrides=()) -> Problem:
    """Read, override and validate a configuration file.

    Relative paths inside the file resolve against the file's directory.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(data, dict):
        raise ConfigError("the configuration must be a JSON object", line=1)
    _check_keys(data, SCHEMA, (), text)
    data = copy.deepcopy(data)
    for item in overrides:
        apply_override(data, item)
    return parse_config(data, text, base_dir=path.parent)
