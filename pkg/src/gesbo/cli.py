"""Batch command-line front end.

Commands
--------
optimize
    Run the optimizer and write ``history.csv``, ``best.json``,
    ``best_spectrum.csv``, ``evaluations.json`` and ``progress.log``.
surface
    Dump the global objective and its error estimate on a regular grid over a
    2-parameter space, rebuilt from ``evaluations.json`` or from the initial
    design alone.
check
    Compare the builtin solver's derivatives with finite differences.

Exit status is 0 on success, 1 when ``check`` finds a derivative error above
tolerance, 2 on configuration errors and 3 when the solver aborts a run.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, Problem, load_config
from .design_space import unit_latin_hypercube
from .driver import IterationReport, OptimizationAborted, RunHistory, initialize, run
from .global_model import GlobalSurrogate, write_surface_csv
from .local_model import DesignEvaluation
from .spectrum import ComplexSpectrum, FrequencyGrid, to_db, write_spectrum_csv
from .testbed import ResonatorModel, fd_report

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3
CHECK_TOLERANCE = 1e-5
CHECK_POINTS = 20

logger = logging.getLogger("gesbo")


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="problem configuration (JSON)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output.directory)")
    common.add_argument("--seed", type=int, metavar="N", help="seed for both the initial design and the search")
    common.add_argument("--max-iters", type=int, metavar="K", help="iteration budget")
    common.add_argument("--stagnation", type=int, metavar="S", help="stop after S iterations without improvement")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field by dotted path, e.g. optimizer.doe.size=12 (repeatable)")
    common.add_argument("--parallel", type=_parse_bool, metavar="BOOL", help="evaluate candidates concurrently")
    common.add_argument("-v", "--verbose", action="store_true", help="log every iteration to stderr")

    parser = argparse.ArgumentParser(prog="gesbo", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("optimize", parents=[common], help="run the optimizer")
    surf = sub.add_parser("surface", parents=[common], help="dump the global surrogate on a 2-D grid")
    surf.add_argument("--resolution", type=int, default=101, metavar="N", help="grid points per axis")
    surf.add_argument("--doe-only", action="store_true",
                      help="build the surrogate from the initial design even if a history exists")
    chk = sub.add_parser("check", parents=[common], help="finite-difference check of builtin derivatives")
    chk.add_argument("--points", type=int, default=CHECK_POINTS, metavar="N", help="number of random designs")
    return parser


def _overrides(args) -> list[str]:
    items = list(args.set)
    if args.seed is not None:
        items += [f"optimizer.seeds.doe={args.seed}", f"optimizer.seeds.ei={args.seed}"]
    if args.max_iters is not None:
        items.append(f"optimizer.max_iterations={args.max_iters}")
    if args.stagnation is not None:
        items.append(f"optimizer.stagnation_limit={args.stagnation}")
    if args.parallel is not None:
        items.append(f"optimizer.parallel={json.dumps(args.parallel)}")
    if args.out is not None:
        items.append("output.directory=" + json.dumps(str(Path(args.out).resolve())))
    return items


# -- artifacts -----------------------------------------------------------------


def write_history_csv(history: RunHistory, names, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "origin", *names, "objective_dB"])
        for e in history.entries:
            ev = e.evaluation
            writer.writerow([e.iteration, e.origin, *map(_fmt, ev.x), _fmt(ev.objective_value)])


def best_record(history: RunHistory, names) -> dict:
    entry = history.entries[history.best_index]
    ev = entry.evaluation
    s = ev.spectrum
    return {
        "parameters": {n: float(v) for n, v in zip(names, ev.x)},
        "x": ev.x.tolist(),
        "objective_dB": ev.objective_value,
        "iteration": entry.iteration,
        "origin": entry.origin,
        "solver_calls": len(history),
        "spectrum": {"freq_GHz": s.grid.freqs.tolist(), "re": s.re.tolist(),
                     "im": s.im.tolist(), "dB": to_db(s).tolist()},
    }


def write_evaluations(history: RunHistory, names, path) -> None:
    """Everything needed to rebuild the surrogate later."""
    evs = history.evaluations
    payload = {
        "names": list(names),
        "freq_GHz": evs[0].grid.freqs.tolist(),
        "evaluations": [{"x": e.x.tolist(), "re": e.spectrum.re.tolist(), "im": e.spectrum.im.tolist(),
                         "d_re": e.d_re.tolist(), "d_im": e.d_im.tolist()} for e in evs],
    }
    Path(path).write_text(json.dumps(payload))


def read_evaluations(path, problem: Problem) -> list[DesignEvaluation]:
    payload = json.loads(Path(path).read_text())
    if payload["names"] != list(problem.space.names):
        raise ConfigError(f"{path} was written for parameters {payload['names']}, "
                          f"config has {list(problem.space.names)}")
    grid = FrequencyGrid(np.array(payload["freq_GHz"]))
    return [DesignEvaluation.create(np.array(e["x"]), ComplexSpectrum(grid, np.array(e["re"]), np.array(e["im"])),
                                    np.array(e["d_re"]), np.array(e["d_im"]), problem.spec)
            for e in payload["evaluations"]]


def _progress_line(r: IterationReport) -> str:
    ei = "n/a" if r.global_ei is None else f"{r.global_ei:.6g}"
    line = (f"iteration {r.iteration}: best {r.best_objective:.6f} dB, EI {ei}, "
            f"half width {r.half_width:.6g}, evaluated {','.join(r.evaluated) or 'none'}")
    if r.global_exhausted:
        line += ", expected improvement exhausted"
    if r.failures:
        line += f", failed {','.join(r.failures)}"
    return line


# -- commands ------------------------------------------------------------------


def cmd_optimize(problem: Problem) -> int:
    out = problem.output
    out.mkdir(parents=True, exist_ok=True)
    names = problem.space.names
    lines: list[str] = []

    def on_iteration(r: IterationReport) -> None:
        lines.append(_progress_line(r))
        logger.info(lines[-1])

    try:
        result = run(problem.optimizer, problem.space, problem.solver, problem.spec, callback=on_iteration)
    except OptimizationAborted as exc:
        lines.append(f"aborted: {exc}")
        if exc.cause is not None:
            lines.append(f"cause: {exc.cause}")
        if len(exc.history):
            write_history_csv(exc.history, names, out / "history.csv")
        (out / "progress.log").write_text("\n".join(lines) + "\n")
        print(f"solver aborted the run: {exc}", file=sys.stderr)
        return EXIT_ABORT

    history = result.history
    lines.append(f"{'converged' if result.converged else 'iteration budget spent'} after "
                 f"{len(history)} solver calls; best {history.best.objective_value:.6f} dB")
    write_history_csv(history, names, out / "history.csv")
    (out / "best.json").write_text(json.dumps(best_record(history, names), indent=1) + "\n")
    write_spectrum_csv(history.best.spectrum, out / "best_spectrum.csv")
    write_evaluations(history, names, out / "evaluations.json")
    (out / "progress.log").write_text("\n".join(lines) + "\n")
    best = history.best
    print(f"best objective {best.objective_value:.6f} dB at "
          + ", ".join(f"{n}={v:.6g}" for n, v in zip(names, best.x))
          + f" ({len(history)} solver calls); artifacts in {out}")
    return EXIT_OK


def cmd_surface(problem: Problem, resolution: int, doe_only: bool = False) -> int:
    if problem.space.dim != 2:
        raise ConfigError(f"surface dumps need exactly 2 parameters, the problem has {problem.space.dim}")
    if resolution < 2:
        raise ConfigError("resolution must be at least 2")
    out = problem.output
    out.mkdir(parents=True, exist_ok=True)
    saved = out / "evaluations.json"
    if saved.exists() and not doe_only:
        anchors = read_evaluations(saved, problem)
        source = f"{len(anchors)} evaluations from {saved}"
    else:
        try:
            anchors = initialize(problem.optimizer, problem.space, problem.solver, problem.spec).evaluations
        except OptimizationAborted as exc:
            print(f"solver aborted the initial design: {exc}", file=sys.stderr)
            return EXIT_ABORT
        source = f"{len(anchors)}-point initial design"
    g = GlobalSurrogate(anchors, problem.space, problem.optimizer.weight_exponent, problem.optimizer.weight_eps)
    path = out / "surface.csv"
    rows = write_surface_csv(g, problem.spec, resolution, path)
    print(f"wrote {rows} rows to {path} (surrogate from {source})")
    return EXIT_OK


def cmd_check(problem: Problem, points: int = CHECK_POINTS) -> int:
    solver = problem.solver
    if not isinstance(solver, ResonatorModel):
        print("check: external solvers have no derivative oracle here; "
              "only builtin instances can be checked", file=sys.stderr)
        return EXIT_CONFIG
    step = 1e-6
    # keep the central-difference stencil inside the box
    u = step + (1 - 2 * step) * unit_latin_hypercube(problem.space.dim, points, problem.optimizer.doe_seed)
    reports = [fd_report(solver, x, step) for x in problem.space.denormalize(u)]
    worst = max(reports, key=lambda r: r.max_rel_error)
    passed = worst.max_rel_error <= CHECK_TOLERANCE
    print(f"{'PASS' if passed else 'FAIL'}: {points} designs, worst "
          + worst.describe(problem.space, solver.grid) + f" (tolerance {CHECK_TOLERANCE:g})")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        problem = load_config(args.config, _overrides(args))
        if args.command == "optimize":
            return cmd_optimize(problem)
        if args.command == "surface":
            return cmd_surface(problem, args.resolution, args.doe_only)
        return cmd_check(problem, args.points)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
