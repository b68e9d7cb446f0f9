"""First-order Taylor models of a complex spectrum and the shrinking trust-region search.

The real and imaginary parts are linearized around a single evaluated design
using the solver's analytical derivatives. The dB objective is assembled from
the linearized parts afterwards, so it stays nonlinear in the parameters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Protocol

import numpy as np

from .design_space import ParameterSpace
from .search import compass_search
from .spectrum import ComplexSpectrum, FrequencyGrid, ObjectiveSpec, db_from_parts, objective

logger = logging.getLogger(__name__)

IMPROVEMENT_THRESHOLD = 1e-9
MERGE_TOL = 1e-9


class SolverError(RuntimeError):
    """A solver call failed; ``x`` holds the offending design vector."""

    def __init__(self, message: str, x=None):
        super().__init__(message)
        self.x = None if x is None else np.array(x, dtype=float)

    def __str__(self):
        base = super().__str__()
        return base if self.x is None else f"{base} (design {self.x.tolist()})"


class Solver(Protocol):
    """Anything that returns a spectrum plus its parameter derivatives.

    ``respond(x)`` takes a physical design vector and returns
    ``(spectrum, d_re, d_im)`` with derivative arrays of shape ``(m, d)`` in
    units of 1/parameter-unit.
    """

    space: ParameterSpace
    grid: FrequencyGrid

    def respond(self, x: np.ndarray) -> tuple[ComplexSpectrum, np.ndarray, np.ndarray]: ...


@dataclass(frozen=True, eq=False)
class DesignEvaluation:
    """Record of one solver call: design, spectrum, derivatives and objective."""

    x: np.ndarray
    spectrum: ComplexSpectrum
    d_re: np.ndarray
    d_im: np.ndarray
    objective_value: float

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        m, d = len(self.spectrum.grid), x.size
        arrays = []
        for name in ("d_re", "d_im"):
            a = np.array(getattr(self, name), dtype=float)
            if a.shape != (m, d):
                raise ValueError(f"{name} must have shape ({m}, {d}), got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite values")
            a.flags.writeable = False
            arrays.append(a)
        x.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "d_re", arrays[0])
        object.__setattr__(self, "d_im", arrays[1])
        object.__setattr__(self, "objective_value", float(self.objective_value))

    @classmethod
    def create(cls, x, spectrum: ComplexSpectrum, d_re, d_im, spec: ObjectiveSpec) -> "DesignEvaluation":
        return cls(x, spectrum, d_re, d_im, objective(spectrum, spec))

    @property
    def grid(self) -> FrequencyGrid:
        return self.spectrum.grid


def evaluate(solver: Solver, x, spec: ObjectiveSpec) -> DesignEvaluation:
    """Run the solver at ``x`` and wrap the result; failures become ``SolverError``."""
    x = solver.space.check(x)
    try:
        spectrum, d_re, d_im = solver.respond(x)
        return DesignEvaluation.create(x, spectrum, d_re, d_im, spec)
    except SolverError as exc:
        if exc.x is None:
            exc.x = np.array(x)
        raise
    except Exception as exc:
        raise SolverError(f"solver failed: {exc}", x) from exc


class TaylorModel:
    """Linear predictor of the real and imaginary parts anchored at one evaluation."""

    def __init__(self, anchor: DesignEvaluation, space: ParameterSpace):
        if anchor.x.size != space.dim:
            raise ValueError("anchor dimension does not match the parameter space")
        self.anchor = anchor
        self.space = space
        self._cache: dict[tuple, tuple] = {}

    @cached_property
    def anchor_unit(self) -> np.ndarray:
        return self.space.normalize(self.anchor.x)

    def predict(self, x) -> ComplexSpectrum:
        return taylor_predict(self, x)

    def target_terms(self, spec: ObjectiveSpec) -> tuple[np.ndarray, np.ndarray]:
        """Complex value and normalized-coordinate gradient at the target frequencies.

        Interpolation to the targets is linear, so it commutes with the linear
        Taylor step and the objective can be evaluated on the targets alone.
        """
        key = spec.targets
        if key not in self._cache:
            w = self.anchor.grid.interpolation_matrix(spec.targets)
            a = self.anchor
            value = w @ a.spectrum.re + 1j * (w @ a.spectrum.im)
            grad = (w @ a.d_re + 1j * (w @ a.d_im)) * self.space.span
            self._cache[key] = (value, grad)
        return self._cache[key]

    def objective_unit(self, u: np.ndarray, spec: ObjectiveSpec) -> np.ndarray:
        """Assembled objective for an ``(n, d)`` batch of normalized points."""
        value, grad = self.target_terms(spec)
        s = value + (u - self.anchor_unit) @ grad.T
        return spec.aggregate(db_from_parts(s.real, s.imag))


def taylor_predict(model: TaylorModel, x) -> ComplexSpectrum:
    """First-order prediction of the spectrum at physical design ``x``."""
    x = model.space.check(x, atol=1e-12)
    a = model.anchor
    dx = x - a.x
    if not np.any(dx):
        return a.spectrum
    return ComplexSpectrum(a.grid, a.spectrum.re + a.d_re @ dx, a.spectrum.im + a.d_im @ dx)


def local_objective(model: TaylorModel, x, spec: ObjectiveSpec) -> float:
    return objective(taylor_predict(model, x), spec)


@dataclass(frozen=True)
class TrustRegion:
    """Box of per-dimension half widths (normalized units) around ``center``."""

    center: np.ndarray
    half_width: np.ndarray
    shrink_factor: float = 0.5
    min_half_width: float = 1e-4

    def __post_init__(self):
        center = np.array(self.center, dtype=float)
        hw = np.broadcast_to(np.asarray(self.half_width, dtype=float), center.shape).copy()
        if not 0.0 < self.shrink_factor < 1.0:
            raise ValueError(f"shrink_factor must lie in (0, 1), got {self.shrink_factor}")
        if not self.min_half_width > 0:
            raise ValueError("min_half_width must be positive")
        if np.any(hw <= 0) or np.any(hw > 0.5):
            raise ValueError(f"half widths must lie in (0, 0.5], got {hw}")
        center.flags.writeable = False
        hw.flags.writeable = False
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "half_width", hw)

    def box(self, space: ParameterSpace) -> tuple[np.ndarray, np.ndarray]:
        """Region box intersected with the unit cube, in normalized coordinates."""
        c = space.normalize(self.center)
        return np.maximum(c - self.half_width, 0.0), np.minimum(c + self.half_width, 1.0)

    def shrunk(self, center=None) -> "TrustRegion":
        hw = np.maximum(self.half_width * self.shrink_factor, self.min_half_width)
        hw = np.minimum(hw, self.half_width)
        return replace(self, center=self.center if center is None else center, half_width=hw)


@dataclass
class LocalConfig:
    initial_half_width: float = 0.25
    shrink_factor: float = 0.5
    min_half_width: float = 1e-4
    stagnation_local: int = 3
    max_local_steps: int = 10
    grid_points: int = 33
    random_points_per_dim: int = 256
    polish_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.initial_half_width <= 0.5:
            raise ValueError("initial_half_width must lie in (0, 0.5]")
        if not 0 < self.min_half_width <= self.initial_half_width:
            raise ValueError("min_half_width must lie in (0, initial_half_width]")
        if not 0 < self.shrink_factor < 1:
            raise ValueError("shrink_factor must lie in (0, 1)")
        if self.stagnation_local < 1 or self.max_local_steps < 1:
            raise ValueError("stagnation_local and max_local_steps must be >= 1")

    def region(self, center) -> TrustRegion:
        c = np.asarray(center, dtype=float)
        return TrustRegion(c, np.full(c.size, self.initial_half_width),
                           self.shrink_factor, self.min_half_width)


def seed_points(lo: np.ndarray, hi: np.ndarray, grid_points: int, random_per_dim: int, seed) -> np.ndarray:
    d = lo.size
    if d <= 2:
        axes = [np.linspace(a, b, grid_points) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    rng = np.random.default_rng(seed)
    return lo + rng.random((random_per_dim * d, d)) * (hi - lo)


def minimize_on_region(
    model: TaylorModel,
    region: TrustRegion,
    spec: ObjectiveSpec,
    space: ParameterSpace,
    config: LocalConfig | None = None,
    seed=None,
) -> np.ndarray:
    """Minimize the Taylor-assembled objective over the trust region.

    Dense seeding (a 33^d grid for d <= 2, otherwise 256 d random points)
    followed by a compass-search polish. The center wins all ties.
    """
    config = config or LocalConfig()
    lo, hi = region.box(space)
    center = space.normalize(region.center)

    def fun(u):
        return model.objective_unit(u, spec)

    f_center = float(fun(center[None, :])[0])
    pts = seed_points(lo, hi, config.grid_points, config.random_points_per_dim,
                      config.seed if seed is None else seed)
    vals = fun(pts)
    k = int(np.argmin(vals))
    start, f_start = (pts[k], vals[k]) if vals[k] < f_center else (center, f_center)
    spacing = float(np.max(hi - lo)) / max(config.grid_points - 1, 1)
    u, fu = compass_search(fun, start, lo, hi, step=max(spacing, config.polish_tol),
                           tol=config.polish_tol, f0=f_start)
    if not fu < f_center:
        return region.center.copy()
    return space.denormalize(np.clip(u, lo, hi))


@dataclass
class LocalStepResult:
    evaluation: DesignEvaluation | None
    region: TrustRegion
    improved: bool


def local_candidate(
    state: TrustRegion,
    best: DesignEvaluation,
    spec: ObjectiveSpec,
    space: ParameterSpace,
    config: LocalConfig | None = None,
    seed=None,
) -> np.ndarray | None:
    """Surrogate minimizer inside the region, or None if it is the center itself."""
    if not np.allclose(state.center, best.x, rtol=0, atol=1e-12 * float(np.max(space.span))):
        raise ValueError("trust region must be centered on the incumbent design")
    candidate = minimize_on_region(TaylorModel(best, space), state, spec, space, config, seed=seed)
    if np.linalg.norm(space.normalize(candidate) - space.normalize(best.x)) <= MERGE_TOL:
        return None
    return candidate


def local_step(
    state: TrustRegion,
    best: DesignEvaluation,
    solver: Solver,
    spec: ObjectiveSpec,
    space: ParameterSpace,
    config: LocalConfig | None = None,
    seed=None,
) -> LocalStepResult:
    """One trust-region iteration from the incumbent ``best``.

    A candidate that improves on ``best`` by more than the improvement
    threshold becomes the new center; either way the region shrinks. A
    candidate coinciding with the center is not sent to the solver.
    """
    candidate = local_candidate(state, best, spec, space, config, seed)
    if candidate is None:
        return LocalStepResult(None, state.shrunk(), False)
    ev = evaluate(solver, candidate, spec)
    if ev.objective_value < best.objective_value - IMPROVEMENT_THRESHOLD:
        return LocalStepResult(ev, state.shrunk(center=ev.x), True)
    return LocalStepResult(ev, state.shrunk(), False)


def run_local(
    start: DesignEvaluation,
    config: LocalConfig,
    solver: Solver,
    spec: ObjectiveSpec,
    space: ParameterSpace,
) -> list[DesignEvaluation]:
    """Iterate ``local_step`` until stagnation or the step budget runs out.

    Returns every evaluation in call order, starting with ``start``.
    """
    history = [start]
    best = start
    region = config.region(start.x)
    stagnant = 0
    for step in range(config.max_local_steps):
        res = local_step(region, best, solver, spec, space, config, seed=(config.seed, step))
        region = res.region
        if res.evaluation is not None:
            history.append(res.evaluation)
        if res.improved:
            best = res.evaluation
            stagnant = 0
        else:
            stagnant += 1
        logger.debug("local step %d: best %.6g dB, half width %.3g", step, best.objective_value,
                     float(np.max(region.half_width)))
        if stagnant >= config.stagnation_local:
            break
    return history
