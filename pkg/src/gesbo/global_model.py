"""Interpolating global surrogate built from all local Taylor models, plus Expected Improvement.

The global prediction at x is a convex combination of every anchor's Taylor
prediction at x. The weights are normalized, regularized inverse-distance
(Shepard-type) weights, which concentrate on an anchor as x approaches it, so
the surrogate reproduces every evaluated spectrum.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .design_space import ParameterSpace, unit_latin_hypercube
from .local_model import MERGE_TOL, DesignEvaluation, TaylorModel
from .search import compass_search
from .spectrum import ComplexSpectrum, ObjectiveSpec, db_from_parts, objective

EXHAUSTION_EI = 1e-15
# dB values carry relative round-off of a few ulps; EI below that resolution is noise
EI_ROUNDOFF = 1e-13
SIGMA_MIN = 1e-12
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class GlobalSurrogate:
    """Weighted blend of the Taylor models of all anchors.

    Parameters
    ----------
    anchors : sequence of DesignEvaluation
        Evaluated designs sharing one frequency grid. Designs closer than the
        merge tolerance to an earlier anchor are dropped.
    space : ParameterSpace
    weight_exponent : float
        Decay exponent of the inverse-distance weights.
    eps : float
        Regularization length (normalized units) that keeps weights finite at
        the anchors.
    """

    def __init__(self, anchors: Sequence[DesignEvaluation], space: ParameterSpace,
                 weight_exponent: float = 4.0, eps: float = 1e-5):
        if not anchors:
            raise ValueError("a global surrogate needs at least one anchor")
        grid = anchors[0].grid
        kept: list[DesignEvaluation] = []
        units: list[np.ndarray] = []
        for a in anchors:
            if a.grid != grid:
                raise ValueError("all anchors must share one frequency grid")
            u = space.normalize(a.x)
            if any(np.linalg.norm(u - v) <= MERGE_TOL for v in units):
                continue
            kept.append(a)
            units.append(u)
        self.anchors = tuple(kept)
        self.space = space
        self.grid = grid
        self.weight_exponent = float(weight_exponent)
        self.eps = float(eps)
        self.models = tuple(TaylorModel(a, space) for a in self.anchors)
        self.anchor_units = np.array(units)
        self._target_cache: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}

    def __len__(self):
        return len(self.anchors)

    # -- weights ---------------------------------------------------------------

    def weights_unit(self, u: np.ndarray) -> np.ndarray:
        """Weights for an ``(p, d)`` batch of normalized points, shape ``(p, n)``."""
        d2 = _sq_dist(u, self.anchor_units)
        # work in log space; the shift cancels in the normalization
        logw = -0.5 * self.weight_exponent * np.log(d2 + self.eps**2)
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        return w / w.sum(axis=1, keepdims=True)

    def nearest_index(self, u: np.ndarray) -> np.ndarray:
        """Index of the nearest anchor per point; ties resolve to the lowest index."""
        return np.argmin(_sq_dist(u, self.anchor_units), axis=1)

    # -- target-frequency fast path -------------------------------------------

    def _targets(self, spec: ObjectiveSpec) -> tuple[np.ndarray, np.ndarray]:
        key = spec.targets
        if key not in self._target_cache:
            terms = [m.target_terms(spec) for m in self.models]
            values = np.stack([t[0] for t in terms])          # (n, t)
            grads = np.stack([t[1] for t in terms])           # (n, t, d)
            self._target_cache[key] = (values, grads)
        return self._target_cache[key]

    def local_target_values(self, u: np.ndarray, spec: ObjectiveSpec) -> np.ndarray:
        """Every anchor's Taylor prediction at the targets, shape ``(p, n, t)`` complex."""
        values, grads = self._targets(spec)
        du = u[:, None, :] - self.anchor_units[None, :, :]        # (p, n, d)
        return values[None] + np.einsum("pnd,ntd->pnt", du, grads)

    def objective_parts(self, u: np.ndarray, spec: ObjectiveSpec) -> tuple[np.ndarray, np.ndarray]:
        """Global objective and sigma estimate for a batch of normalized points."""
        u = np.atleast_2d(u)
        local = self.local_target_values(u, spec)
        w = self.weights_unit(u)
        s = np.einsum("pn,pnt->pt", w, local)
        glob = spec.aggregate(db_from_parts(s.real, s.imag))
        near = local[np.arange(len(u)), self.nearest_index(u)]
        loc = spec.aggregate(db_from_parts(near.real, near.imag))
        return glob, np.abs(glob - loc)

    def objective_unit(self, u: np.ndarray, spec: ObjectiveSpec) -> np.ndarray:
        return self.objective_parts(u, spec)[0]


def _sq_dist(u: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    u = np.atleast_2d(u)
    diff = u[:, None, :] - anchors[None, :, :]
    return np.einsum("pnd,pnd->pn", diff, diff)


def weights(g: GlobalSurrogate, x) -> np.ndarray:
    """Normalized interpolation weights of all anchors at physical design ``x``."""
    return g.weights_unit(g.space.normalize(x)[None, :])[0]


def global_predict(g: GlobalSurrogate, x) -> ComplexSpectrum:
    """Weighted sum of all anchors' Taylor predictions at ``x`` on the full grid."""
    u = g.space.normalize(x)
    w = g.weights_unit(u[None, :])[0]
    re = np.zeros(len(g.grid))
    im = np.zeros(len(g.grid))
    for wi, model in zip(w, g.models):
        a = model.anchor
        dx = np.asarray(x, dtype=float) - a.x
        re += wi * (a.spectrum.re + a.d_re @ dx)
        im += wi * (a.spectrum.im + a.d_im @ dx)
    return ComplexSpectrum(g.grid, re, im)


def global_objective(g: GlobalSurrogate, x, spec: ObjectiveSpec) -> float:
    return objective(global_predict(g, x), spec)


def sigma_estimate(g: GlobalSurrogate, x, spec: ObjectiveSpec) -> float:
    """Disagreement between the global surrogate and the nearest anchor's Taylor model (dB)."""
    u = g.space.normalize(x)
    k = int(g.nearest_index(u[None, :])[0])
    local = objective(g.models[k].predict(x), spec)
    return abs(global_objective(g, x, spec) - local)


def expected_improvement(obj_best, obj_approx, sigma):
    """Expected Improvement of a normally distributed objective below ``obj_best``.

    Vectorized over its arguments. Where ``sigma`` is below 1e-12 the plug-in
    improvement ``max(obj_best - obj_approx, 0)`` is returned.
    """
    obj_best, obj_approx, sigma = np.broadcast_arrays(
        np.asarray(obj_best, dtype=float), np.asarray(obj_approx, dtype=float),
        np.asarray(sigma, dtype=float))
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    gain = obj_best - obj_approx
    tiny = sigma < SIGMA_MIN
    s = np.where(tiny, 1.0, sigma)
    z = gain / s
    ei = gain * ndtr(z) + s * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    ei = np.where(tiny, np.maximum(gain, 0.0), np.maximum(ei, 0.0))
    return ei[()] if ei.ndim == 0 else ei


@dataclass
class EiResult:
    candidate: np.ndarray
    ei: float
    obj_approx: float
    sigma: float
    exhausted: bool = False


def propose_global_candidate(
    g: GlobalSurrogate,
    obj_best: float,
    spec: ObjectiveSpec,
    seed=None,
    n_cloud: int | None = None,
    polish_tol: float = 1e-6,
) -> EiResult:
    """Maximize Expected Improvement over a seeded Latin hypercube cloud, then polish.

    The cloud holds ``4096 d`` points (capped at 50000) by default. The best
    cloud point is refined by compass search on -EI. The result is flagged as
    exhausted when its EI is below :func:`exhaustion_threshold`.
    """
    if len(g) < 2:
        raise ValueError("expected improvement search needs at least 2 distinct anchors")
    d = g.space.dim
    n_cloud = n_cloud or min(4096 * d, 50_000)
    cloud = unit_latin_hypercube(d, n_cloud, seed)

    def neg_ei(u):
        obj, sig = g.objective_parts(u, spec)
        return -expected_improvement(obj_best, obj, sig)

    vals = np.concatenate([neg_ei(c) for c in np.array_split(cloud, max(1, n_cloud // 4096))])
    k = int(np.argmin(vals))
    u, f = compass_search(neg_ei, cloud[k], np.zeros(d), np.ones(d), step=0.5 / n_cloud ** (1 / d),
                          tol=polish_tol, f0=vals[k])
    obj, sig = g.objective_parts(u[None, :], spec)
    ei = float(-f)
    return EiResult(g.space.denormalize(u), ei, float(obj[0]), float(sig[0]),
                    exhausted=ei < exhaustion_threshold(obj_best))


def exhaustion_threshold(obj_best: float) -> float:
    """EI below this value counts as zero: 1e-15, raised to the round-off level of ``obj_best``."""
    return max(EXHAUSTION_EI, EI_ROUNDOFF * max(1.0, abs(obj_best)))


def surface_grid(g: GlobalSurrogate, spec: ObjectiveSpec, resolution: int):
    """Global objective and sigma on a regular grid over a 2-D space.

    Returns physical coordinates ``(x1, x2)`` (each ``resolution**2`` long, the
    second parameter varying fastest) and the two value arrays.
    """
    if g.space.dim != 2:
        raise ValueError(f"surface dumps need a 2-parameter space, got d={g.space.dim}")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    axis = np.linspace(0.0, 1.0, resolution)
    mesh = np.meshgrid(axis, axis, indexing="ij")
    u = np.stack([m.ravel() for m in mesh], axis=1)
    obj, sig = g.objective_parts(u, spec)
    x = g.space.denormalize(u)
    return x[:, 0], x[:, 1], obj, sig


def write_surface_csv(g: GlobalSurrogate, spec: ObjectiveSpec, resolution: int, path) -> int:
    """Write ``x1, x2, obj_dB, sigma_dB`` rows; returns the number of data rows."""
    x1, x2, obj, sig = surface_grid(g, spec, resolution)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x1", "x2", "obj_dB", "sigma_dB"])
        for row in zip(x1, x2, obj, sig):
            writer.writerow([f"{v:.17g}" for v in row])
    return len(obj)
