"""Analytic multi-resonator reflection models with closed-form parameter derivatives.

They stand in for a full-wave field solver: each model returns the complex
reflection coefficient on a frequency grid together with exact derivatives of
its real and imaginary parts with respect to every design parameter.

    S(f; x) = 1 - sum_k c_k(x) / (1 + 2j Q_k (f - f_k(x)) / f_k(x))

with f_k(x) = f0_k (1 + g_k . xs) and c_k(x) = c0_k (1 + h_k . xs), where
xs = 2 normalize(x) - 1 lies in [-1, 1]^d.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .design_space import ParameterSpace
from .local_model import DesignEvaluation, Solver, evaluate
from .search import compass_search
from .spectrum import ComplexSpectrum, FrequencyGrid, ObjectiveSpec, db_from_parts


@dataclass(frozen=True)
class Resonance:
    f0: float
    q: float
    coupling: complex

    def __post_init__(self):
        if not (self.f0 > 0 and self.q > 0):
            raise ValueError(f"resonance needs f0 > 0 and Q > 0, got f0={self.f0}, Q={self.q}")


class ResonatorModel:
    """Superposition of Lorentzian resonances whose frequency and coupling move with x.

    Parameters
    ----------
    resonances : sequence of Resonance
    freq_sens : (K, d) array
        Relative resonance-frequency sensitivity to each scaled parameter.
    coupling_sens : (K, d) array
        Relative coupling sensitivity to each scaled parameter.
    grid : FrequencyGrid
    space : ParameterSpace
    targets : sequence of float, optional
        Default objective target frequencies for this instance.
    """

    def __init__(self, resonances: Sequence[Resonance], freq_sens, coupling_sens,
                 grid: FrequencyGrid, space: ParameterSpace, targets=(), name: str = "custom"):
        self.resonances = tuple(resonances)
        k, d = len(self.resonances), space.dim
        self.freq_sens = np.array(freq_sens, dtype=float).reshape(k, d)
        self.coupling_sens = np.array(coupling_sens, dtype=float).reshape(k, d)
        if k == 0:
            raise ValueError("at least one resonance is required")
        # worst case over the box of the scaled frequency factor
        if np.any(1.0 - np.abs(self.freq_sens).sum(axis=1) <= 0):
            raise ValueError("resonance frequency can reach zero inside the design box")
        self.grid = grid
        self.space = space
        self.name = name
        self.targets = tuple(float(t) for t in targets)
        self._f0 = np.array([r.f0 for r in self.resonances])
        self._q = np.array([r.q for r in self.resonances])
        self._c0 = np.array([r.coupling for r in self.resonances], dtype=complex)

    def __repr__(self):
        return f"ResonatorModel({self.name!r}, K={len(self.resonances)}, d={self.space.dim})"

    @property
    def objective_spec(self) -> ObjectiveSpec:
        if not self.targets:
            raise ValueError(f"instance {self.name!r} defines no default targets")
        return ObjectiveSpec(self.targets)

    def response_unit(self, u, freqs=None, dtype=np.float64) -> np.ndarray:
        """Complex response for an ``(n, d)`` batch of normalized points, shape ``(n, m)``.

        ``dtype`` may be ``np.longdouble`` for reference finite differences.
        """
        u = np.atleast_2d(np.asarray(u, dtype=dtype))
        f = np.asarray(self.grid.freqs if freqs is None else freqs, dtype=dtype)
        xs = 2 * u - 1
        fk = self._f0.astype(dtype) * (1 + xs @ self.freq_sens.T.astype(dtype))
        ck = (1 + xs @ self.coupling_sens.T.astype(dtype)) * self._c0.astype(np.result_type(dtype, 1j))
        q = self._q.astype(dtype)
        detune = 2j * q[None, :, None] * (f[None, None, :] / fk[:, :, None] - 1)
        return 1 - np.sum(ck[:, :, None] / (1 + detune), axis=1)

    def respond(self, x) -> tuple[ComplexSpectrum, np.ndarray, np.ndarray]:
        """Spectrum and analytic derivatives at physical design ``x``."""
        x = self.space.check(x)
        xs = 2 * self.space.normalize(x) - 1
        f = self.grid.freqs
        scale = 2.0 / self.space.span                                    # d xs / d x
        fk = self._f0 * (1 + self.freq_sens @ xs)                        # (K,)
        ck = self._c0 * (1 + self.coupling_sens @ xs)                    # (K,)
        dfk = (self._f0[:, None] * self.freq_sens) * scale               # (K, d)
        dck = (self._c0[:, None] * self.coupling_sens) * scale           # (K, d)
        den = 1 + 2j * self._q[:, None] * (f[None, :] / fk[:, None] - 1)  # (K, m)
        s = 1 - np.sum(ck[:, None] / den, axis=0)
        # d den / d fk = -2j Q f / fk^2
        dden_dfk = -2j * self._q[:, None] * f[None, :] / fk[:, None] ** 2  # (K, m)
        # dS/dx_i = -sum_k [dck_i / den - ck dden_dfk dfk_i / den^2]
        term_c = np.einsum("km,ki->mi", 1 / den, dck)
        term_f = np.einsum("km,ki->mi", ck[:, None] * dden_dfk / den**2, dfk)
        ds = -(term_c - term_f)
        return ComplexSpectrum(self.grid, s.real, s.imag), ds.real.copy(), ds.imag.copy()

    def objective_unit(self, u, spec: ObjectiveSpec) -> np.ndarray:
        """True objective for a batch of normalized points, using only the grid
        nodes the target interpolation touches."""
        w = self.grid.interpolation_matrix(spec.targets)
        cols = np.flatnonzero(np.any(w != 0, axis=0))
        s = self.response_unit(u, self.grid.freqs[cols]) @ w[:, cols].T
        return spec.aggregate(db_from_parts(s.real, s.imag))


def solve(model: ResonatorModel, x, spec: ObjectiveSpec | None = None) -> DesignEvaluation:
    """Evaluate ``model`` at ``x`` as a solver call."""
    return evaluate(model, x, spec or model.objective_spec)


# -- finite-difference oracle -------------------------------------------------

@dataclass
class FdReport:
    max_rel_error: float
    x: np.ndarray
    node: int = -1
    param: int = -1
    part: str = ""

    def describe(self, space: ParameterSpace, grid: FrequencyGrid) -> str:
        if self.node < 0:
            return f"max relative error {self.max_rel_error:.3e}"
        return (f"max relative error {self.max_rel_error:.3e} in d({self.part} S)/d({space.names[self.param]}) "
                f"at {grid.freqs[self.node]:.6g} GHz, design {np.round(self.x, 12).tolist()}")


def fd_report(solver: Solver, x, step: float = 1e-6, floor: float = 1e-9,
              richardson: bool = False) -> FdReport:
    """Compare stored derivatives with central differences of the response.

    The step is taken in normalized coordinates. Components whose analytic and
    finite-difference magnitudes are both below ``floor`` are exempt. Analytic
    models are differenced in extended precision so that round-off does not
    dominate the comparison.

    With ``richardson=True`` the central differences at ``step`` and
    ``step / 2`` are combined into a fourth-order estimate. This separates
    stencil truncation error from derivative mistakes where a derivative
    component passes through zero.
    """
    space = solver.space
    x = space.check(x)
    u = space.normalize(x)
    if step <= 0 or np.any(u - step < 0) or np.any(u + step > 1):
        raise ValueError(f"finite-difference step {step} leaves the design box around {x}")
    _, d_re, d_im = solver.respond(x)
    fd = _central(solver, u, step)
    if richardson:
        fd = (4 * _central(solver, u, step / 2) - fd) / 3
    fd = fd / space.span                                   # per physical unit, (m, d)
    worst = FdReport(0.0, x)
    for part, analytic, numeric in (("re", d_re, fd.real), ("im", d_im, fd.imag)):
        scale = np.maximum(np.abs(analytic), np.abs(numeric))
        err = np.zeros_like(scale)
        mask = scale >= floor
        err[mask] = np.abs(analytic - numeric)[mask] / scale[mask]
        k = np.unravel_index(int(np.argmax(err)), err.shape)
        if err[k] > worst.max_rel_error:
            worst = FdReport(float(err[k]), x, int(k[0]), int(k[1]), part)
    return worst


def _central(solver: Solver, u: np.ndarray, step: float) -> np.ndarray:
    """Central differences per normalized coordinate, shape (m, d)."""
    space = solver.space
    eye = np.eye(space.dim)
    if isinstance(solver, ResonatorModel):
        ul = u.astype(np.longdouble)
        hl = np.longdouble(step)
        plus = solver.response_unit(ul + hl * eye, dtype=np.longdouble)
        minus = solver.response_unit(ul - hl * eye, dtype=np.longdouble)
        return ((plus - minus) / (2 * hl)).astype(complex).T
    plus = np.stack([solver.respond(space.denormalize(u + step * e))[0].values for e in eye])
    minus = np.stack([solver.respond(space.denormalize(u - step * e))[0].values for e in eye])
    return ((plus - minus) / (2 * step)).T


def fd_check(solver: Solver, x, step: float = 1e-6) -> float:
    """Worst relative error between analytic and central-difference derivatives."""
    return fd_report(solver, x, step).max_rel_error


# -- brute-force optimum oracles ----------------------------------------------

@dataclass
class Optimum:
    u: np.ndarray
    x: np.ndarray
    value: float


def _strict_local_minima(values: np.ndarray) -> np.ndarray:
    """Boolean mask of grid cells strictly below every existing neighbour."""
    d = values.ndim
    padded = np.pad(values, 1, mode="constant", constant_values=np.inf)
    mask = np.ones(values.shape, dtype=bool)
    for offset in np.ndindex(*(3,) * d):
        if all(o == 1 for o in offset):
            continue
        sl = tuple(slice(o, o + n) for o, n in zip(offset, values.shape))
        mask &= values < padded[sl]
    return mask


def grid_oracle(model: ResonatorModel, spec: ObjectiveSpec | None = None, resolution: int = 201,
                dedup: float = 0.02) -> list[Optimum]:
    """Enumerate local optima of the true objective on a regular grid.

    Strict grid-local minima are polished by compass search on the true model,
    merged within ``dedup`` normalized distance, and returned best first.
    """
    spec = spec or model.objective_spec
    d = model.space.dim
    if d > 3:
        raise ValueError(f"grid oracle supports d <= 3, got d={d}")
    axis = np.linspace(0.0, 1.0, resolution)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    values = np.concatenate([model.objective_unit(chunk, spec)
                             for chunk in np.array_split(pts, max(1, len(pts) // 20000))])
    mask = _strict_local_minima(values.reshape((resolution,) * d)).ravel()
    lo, hi = np.zeros(d), np.ones(d)
    found: list[Optimum] = []
    for idx in np.flatnonzero(mask):
        u, val = compass_search(lambda v: model.objective_unit(v, spec), pts[idx], lo, hi,
                                step=1.0 / (resolution - 1), tol=1e-10, f0=values[idx])
        if all(np.linalg.norm(u - o.u) > dedup for o in found):
            found.append(Optimum(u, model.space.denormalize(u), val))
        else:
            j = next(j for j, o in enumerate(found) if np.linalg.norm(u - o.u) <= dedup)
            if val < found[j].value:
                found[j] = Optimum(u, model.space.denormalize(u), val)
    return sorted(found, key=lambda o: o.value)


def minimax_polish(model: ResonatorModel, spec: ObjectiveSpec, u0, t0: float | None = None):
    """Refine a start point on the epigraph form ``min t  s.t.  dB_i(u) <= t``.

    The objective is a maximum over targets and is kinked where two targets
    tie; coordinate search stalls there, the smooth constrained form does not.
    Returns ``(u, value)`` with the value re-evaluated at the clipped point.
    """
    d = model.space.dim
    w = model.grid.interpolation_matrix(spec.targets)

    def target_db(u):
        s = model.response_unit(u[None]) @ w.T
        return db_from_parts(s.real, s.imag)[0]

    u0 = np.asarray(u0, dtype=float)
    t0 = float(np.max(target_db(u0))) if t0 is None else t0
    res = minimize(lambda z: z[-1], np.r_[u0, t0], method="SLSQP",
                   constraints=[{"type": "ineq", "fun": lambda z: z[-1] - target_db(z[:-1])}],
                   bounds=[(0.0, 1.0)] * d + [(None, None)], options={"ftol": 1e-12, "maxiter": 500})
    u = np.clip(res.x[:-1], 0.0, 1.0)
    value = float(spec.aggregate(target_db(u)))
    if value > t0:
        return u0, t0
    return u, value


def random_search_oracle(model: ResonatorModel, spec: ObjectiveSpec | None = None, n: int = 100_000,
                         seed: int = 0, n_polish: int = 10, minimax: bool = False) -> Optimum:
    """Best of ``n`` uniform random points, the top ``n_polish`` refined by compass search.

    With ``minimax=True`` each polished point is further refined by
    :func:`minimax_polish`.
    """
    spec = spec or model.objective_spec
    d = model.space.dim
    rng = np.random.default_rng(seed)
    pts = rng.random((n, d))
    values = np.concatenate([model.objective_unit(c, spec) for c in np.array_split(pts, max(1, n // 10000))])
    lo, hi = np.zeros(d), np.ones(d)
    best = None
    for idx in np.argsort(values)[:n_polish]:
        u, val = compass_search(lambda v: model.objective_unit(v, spec), pts[idx], lo, hi,
                                step=0.05, tol=1e-9, f0=values[idx])
        if minimax:
            u, val = minimax_polish(model, spec, u, val)
        if best is None or val < best.value:
            best = Optimum(u, model.space.denormalize(u), val)
    return best


# -- shipped instances ---------------------------------------------------------

def single_band_1d() -> ResonatorModel:
    """One resonance tuned by a single length; target 2.44 GHz (cf. a single-band patch)."""
    space = ParameterSpace([("length", 26.0, 34.0)])
    return ResonatorModel(
        [Resonance(2.35, 25.0, 0.93)],
        freq_sens=[[0.06]],
        coupling_sens=[[0.0]],
        grid=FrequencyGrid.uniform(2.0, 2.9, 101),
        space=space,
        targets=(2.44,),
        name="single-band-1d",
    )


def single_band_2d() -> ResonatorModel:
    """Length tunes the resonance, width mostly tunes the coupling; target 2.44 GHz."""
    space = ParameterSpace([("length", 26.0, 34.0), ("width", 8.0, 16.0)])
    return ResonatorModel(
        [Resonance(2.35, 25.0, 0.86 * np.exp(0.15j))],
        freq_sens=[[0.05, 0.015]],
        coupling_sens=[[0.0, 0.09]],
        grid=FrequencyGrid.uniform(2.0, 2.9, 101),
        space=space,
        targets=(2.44,),
        name="single-band-2d",
    )


def dual_band_2d() -> ResonatorModel:
    """Two-parameter slot antenna analog with one global and one local optimum at 5.6 GHz.

    The slot width tunes the main resonance; the gap moves two weaker modes
    through the target. Aligning the main mode with either of them produces a
    separate matching basin.
    """
    space = ParameterSpace([("w_s", 0.5, 3.0), ("gap_2", 0.2, 1.2)])
    return ResonatorModel(
        [Resonance(5.685, 30.0, 0.55 * np.exp(0.1j)),
         Resonance(5.714, 40.0, 0.40 * np.exp(-0.1j)),
         Resonance(5.463, 40.0, 0.30)],
        freq_sens=[[0.05, 0.01], [0.01, 0.05], [-0.01, 0.05]],
        coupling_sens=np.zeros((3, 2)),
        grid=FrequencyGrid.uniform(5.0, 6.2, 101),
        space=space,
        targets=(5.6,),
        name="dual-band-2d",
    )


def dual_band_9d() -> ResonatorModel:
    """Nine-parameter dual-band analog with targets 2.4 and 5.8 GHz.

    Three parameters dominate (slot length, slot width and stub length); the
    rest perturb frequencies and couplings weakly.
    """
    space = ParameterSpace([
        ("l_slot", 14.0, 22.0), ("w_s", 0.5, 3.0), ("l_stub", 4.0, 9.0),
        ("w_stub", 0.5, 2.0), ("gap_1", 0.2, 1.2), ("gap_2", 0.2, 1.2),
        ("l_feed", 8.0, 14.0), ("w_feed", 1.5, 3.5), ("offset", -2.0, 2.0),
    ])
    freq_sens = [
        [-0.060, 0.015, 0.004, 0.003, -0.004, 0.002, 0.003, -0.002, 0.002],
        [0.006, 0.012, -0.050, -0.004, 0.003, 0.006, -0.002, 0.003, 0.002],
    ]
    coupling_sens = [
        [0.010, 0.060, 0.020, 0.010, 0.030, -0.010, 0.040, 0.020, -0.010],
        [0.010, -0.010, 0.030, 0.060, -0.020, 0.040, 0.030, -0.020, 0.010],
    ]
    return ResonatorModel(
        [Resonance(2.55, 30.0, 0.80 * np.exp(0.2j)), Resonance(5.65, 35.0, 0.78 * np.exp(-0.25j))],
        freq_sens=freq_sens,
        coupling_sens=coupling_sens,
        grid=FrequencyGrid.bands((2.0, 2.9), (5.3, 6.3), num=101),
        space=space,
        targets=(2.4, 5.8),
        name="dual-band-9d",
    )


INSTANCES: dict[str, Callable[[], ResonatorModel]] = {
    "single-band-1d": single_band_1d,
    "single-band-2d": single_band_2d,
    "dual-band-2d": dual_band_2d,
    "dual-band-9d": dual_band_9d,
}


def instance(name: str) -> ResonatorModel:
    try:
        return INSTANCES[name]()
    except KeyError:
        raise KeyError(f"unknown testbed instance {name!r}; available: {sorted(INSTANCES)}") from None
