"""Outer optimization loop: initial design, then one global and one local candidate per iteration."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .design_space import ParameterSpace, full_factorial, latin_hypercube
from .global_model import EiResult, GlobalSurrogate, propose_global_candidate
from .local_model import (
    MERGE_TOL,
    DesignEvaluation,
    LocalConfig,
    Solver,
    SolverError,
    TrustRegion,
    evaluate,
    local_candidate,
)
from .spectrum import ObjectiveSpec

logger = logging.getLogger(__name__)

Origin = Literal["doe", "global", "local"]
ORIGINS = ("doe", "global", "local")


class OptimizationAborted(RuntimeError):
    """Raised when the run cannot continue; ``history`` holds everything evaluated so far."""

    def __init__(self, message: str, history: "RunHistory", cause: SolverError | None = None):
        super().__init__(message)
        self.history = history
        self.cause = cause


@dataclass
class DoeSpec:
    kind: Literal["lhs", "full_factorial"] = "lhs"
    size: int | None = None
    levels: Sequence[int] | None = None

    def points(self, space: ParameterSpace, seed) -> np.ndarray:
        if self.kind == "lhs":
            if self.size is None:
                raise ValueError("an LHS design needs a size")
            return latin_hypercube(space, self.size, seed)
        if self.kind == "full_factorial":
            levels = self.levels if self.levels is not None else [self.size or 3] * space.dim
            return full_factorial(space, levels)
        raise ValueError(f"unknown DoE kind {self.kind!r}")

    def count(self, d: int) -> int:
        if self.kind == "lhs":
            return int(self.size or 0)
        levels = self.levels if self.levels is not None else [self.size or 3] * d
        return int(np.prod(levels))


@dataclass
class OptimizerConfig:
    doe: DoeSpec = field(default_factory=lambda: DoeSpec("lhs", 20))
    max_iterations: int = 20
    stagnation_limit: int = 5
    improvement_tol: float = 1e-6
    shrink_factor: float = 0.5
    initial_half_width: float = 0.25
    min_half_width: float = 1e-4
    doe_seed: int = 0
    ei_seed: int = 1
    parallel_evals: bool = False
    weight_exponent: float = 4.0
    weight_eps: float = 1e-5

    def validate(self, d: int) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.stagnation_limit < 1:
            raise ValueError("stagnation_limit must be >= 1")
        if self.doe.count(d) < 2:
            raise ValueError("the initial design needs at least 2 points")
        self.local_config()

    def local_config(self) -> LocalConfig:
        return LocalConfig(initial_half_width=self.initial_half_width, shrink_factor=self.shrink_factor,
                           min_half_width=self.min_half_width, seed=self.ei_seed)


@dataclass(frozen=True)
class HistoryEntry:
    iteration: int
    origin: Origin
    evaluation: DesignEvaluation


@dataclass
class IterationReport:
    iteration: int
    best_objective: float
    improved: bool
    global_ei: float | None
    global_exhausted: bool
    half_width: float
    evaluated: tuple[str, ...]
    failures: tuple[str, ...] = ()


@dataclass
class RunHistory:
    entries: list[HistoryEntry] = field(default_factory=list)
    best_index: int = -1
    reports: list[IterationReport] = field(default_factory=list)
    failures: list[tuple[int, str, SolverError]] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def add(self, iteration: int, origin: Origin, ev: DesignEvaluation) -> bool:
        """Append an evaluation; returns True if it became the new best."""
        if origin not in ORIGINS:
            raise ValueError(f"unknown origin {origin!r}")
        self.entries.append(HistoryEntry(iteration, origin, ev))
        if self.best_index < 0 or ev.objective_value < self.best.objective_value:
            self.best_index = len(self.entries) - 1
            return True
        return False

    @property
    def best(self) -> DesignEvaluation:
        if self.best_index < 0:
            raise ValueError("empty history")
        return self.entries[self.best_index].evaluation

    @property
    def evaluations(self) -> list[DesignEvaluation]:
        return [e.evaluation for e in self.entries]

    @property
    def objectives(self) -> np.ndarray:
        return np.array([e.evaluation.objective_value for e in self.entries])

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(self.objectives)

    def min_distance(self, space: ParameterSpace, x) -> float:
        if not self.entries:
            return np.inf
        units = space.normalize(np.array([e.evaluation.x for e in self.entries]))
        return float(np.min(np.linalg.norm(units - space.normalize(x), axis=1)))


@dataclass
class DriverState:
    """Loop state that persists between iterations."""

    region: TrustRegion
    stagnant: int = 0
    iteration: int = 0


def _evaluate_many(solver: Solver, xs, spec: ObjectiveSpec, parallel: bool,
                   evaluate_fn: Callable = evaluate) -> list[DesignEvaluation | SolverError]:
    def one(x):
        try:
            return evaluate_fn(solver, x, spec)
        except SolverError as exc:
            return exc

    if parallel and len(xs) > 1:
        with ThreadPoolExecutor(max_workers=len(xs)) as pool:
            return list(pool.map(one, xs))
    return [one(x) for x in xs]


def initialize(config: OptimizerConfig, space: ParameterSpace, solver: Solver,
               spec: ObjectiveSpec) -> RunHistory:
    """Evaluate the initial design of experiments."""
    config.validate(space.dim)
    spec.validate(solver.grid)
    points = config.doe.points(space, config.doe_seed)
    history = RunHistory()
    results = _evaluate_many(solver, list(points), spec, config.parallel_evals)
    for res in results:
        if isinstance(res, SolverError):
            raise OptimizationAborted(f"initial design failed: {res}", history, res)
        history.add(0, "doe", res)
    logger.info("initial design: %d evaluations, best %.4f dB", len(history), history.best.objective_value)
    return history


def new_state(config: OptimizerConfig, history: RunHistory) -> DriverState:
    return DriverState(config.local_config().region(history.best.x))


def iterate(history: RunHistory, state: DriverState, config: OptimizerConfig, space: ParameterSpace,
            solver: Solver, spec: ObjectiveSpec) -> IterationReport:
    """One refinement iteration; mutates ``history`` and ``state`` in place.

    The global Expected-Improvement candidate and the local trust-region
    candidate are both generated from the surrogate state at the start of the
    iteration and then evaluated.
    """
    state.iteration += 1
    it = state.iteration
    best_before = history.best
    surrogate = GlobalSurrogate(history.evaluations, space, config.weight_exponent, config.weight_eps)

    candidates: list[tuple[Origin, np.ndarray]] = []
    proposal: EiResult | None = None
    if len(surrogate) >= 2:
        proposal = propose_global_candidate(surrogate, best_before.objective_value, spec,
                                            seed=(config.ei_seed, it))
        if proposal.exhausted:
            logger.info("iteration %d: expected improvement exhausted", it)
        elif history.min_distance(space, proposal.candidate) <= MERGE_TOL:
            logger.info("iteration %d: global candidate coincides with an existing design", it)
        else:
            candidates.append(("global", proposal.candidate))

    # local candidate from the persistent trust region around the incumbent
    local_cfg = config.local_config()
    x_loc = local_candidate(state.region, best_before, spec, space, local_cfg, seed=(config.ei_seed, it, 1))
    if x_loc is not None and history.min_distance(space, x_loc) > MERGE_TOL and not any(
            np.linalg.norm(space.normalize(x_loc) - space.normalize(c)) <= MERGE_TOL for _, c in candidates):
        candidates.append(("local", x_loc))

    results = _evaluate_many(solver, [c for _, c in candidates], spec, config.parallel_evals)
    failures = []
    for (origin, x), res in zip(candidates, results):
        if isinstance(res, SolverError):
            failures.append(origin)
            history.failures.append((it, origin, res))
            logger.warning("iteration %d: %s candidate failed: %s", it, origin, res)
            continue
        history.add(it, origin, res)
    if candidates and len(failures) == len(candidates) and len(candidates) == 2:
        raise OptimizationAborted(f"iteration {it}: both candidates failed", history,
                                  history.failures[-1][2])

    best_after = history.best
    improved = best_after.objective_value < best_before.objective_value - config.improvement_tol
    if best_after is not best_before:
        # a new incumbent restarts the local search around it at full width
        state.region = local_cfg.region(best_after.x)
    else:
        state.region = state.region.shrunk()
    state.stagnant = 0 if improved else state.stagnant + 1

    report = IterationReport(
        iteration=it,
        best_objective=best_after.objective_value,
        improved=improved,
        global_ei=None if proposal is None else proposal.ei,
        global_exhausted=proposal is not None and proposal.exhausted,
        half_width=float(np.max(state.region.half_width)),
        evaluated=tuple(o for o, _ in candidates if o not in failures),
        failures=tuple(failures),
    )
    history.reports.append(report)
    logger.info("iteration %d: best %.4f dB, EI %s, half width %.3g, evaluated %s", it,
                report.best_objective, "n/a" if report.global_ei is None else f"{report.global_ei:.4g}",
                report.half_width, ",".join(report.evaluated) or "none")
    return report


@dataclass
class RunResult:
    history: RunHistory
    best: DesignEvaluation
    converged: bool

    def __iter__(self):
        return iter((self.history, self.best))


def run(config: OptimizerConfig, space: ParameterSpace, solver: Solver, spec: ObjectiveSpec,
        callback: Callable[[IterationReport], None] | None = None) -> RunResult:
    """Initialize, then iterate until stagnation or the iteration budget is spent."""
    history = initialize(config, space, solver, spec)
    state = new_state(config, history)
    converged = False
    for _ in range(config.max_iterations):
        report = iterate(history, state, config, space, solver, spec)
        if callback is not None:
            callback(report)
        if state.stagnant >= config.stagnation_limit:
            converged = True
            break
    return RunResult(history, history.best, converged)
