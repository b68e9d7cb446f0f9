"""Bounded design domains, normalized coordinates and initial designs of experiments.

All surrogate arithmetic happens in the unit hypercube; physical units are only
used at the solver boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_FACTORIAL_POINTS = 10**6


@dataclass(frozen=True)
class Parameter:
    name: str
    lower: float
    upper: float


class ParameterSpace:
    """Ordered collection of named, box-bounded design variables.

    Parameters
    ----------
    params : sequence of (name, lower, upper)
        One entry per design variable. Names must be unique identifiers and
        ``lower < upper`` must hold strictly.
    """

    def __init__(self, params: Sequence[tuple[str, float, float] | Parameter]):
        items = [p if isinstance(p, Parameter) else Parameter(str(p[0]), float(p[1]), float(p[2]))
                 for p in params]
        if not items:
            raise ValueError("a parameter space needs at least one parameter")
        names = [p.name for p in items]
        if len(set(names)) != len(names):
            raise ValueError(f"parameter names must be unique, got {names}")
        for p in items:
            if not p.name.isidentifier():
                raise ValueError(f"parameter name {p.name!r} is not an identifier")
            if not (np.isfinite(p.lower) and np.isfinite(p.upper)) or not p.lower < p.upper:
                raise ValueError(f"parameter {p.name!r}: need finite lower < upper, "
                                 f"got [{p.lower}, {p.upper}]")
        self.params = tuple(items)
        self.lower = np.array([p.lower for p in items])
        self.upper = np.array([p.upper for p in items])
        self.lower.flags.writeable = False
        self.upper.flags.writeable = False

    @property
    def dim(self) -> int:
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return self.denormalize(np.full(self.dim, 0.5))

    def __repr__(self):
        inner = ", ".join(f"{p.name}=[{p.lower:g}, {p.upper:g}]" for p in self.params)
        return f"ParameterSpace({inner})"

    def __eq__(self, other):
        return isinstance(other, ParameterSpace) and self.params == other.params

    def __hash__(self):
        return hash(self.params)

    def check(self, x, *, atol: float = 0.0) -> np.ndarray:
        """Validate a physical design vector (or an ``(n, d)`` batch) against the box.

        Returns the input as a float array. ``atol`` widens the box to absorb
        round-off from a normalize/denormalize round trip.
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,) or x.ndim > 2:
            raise ValueError(f"expected design vector(s) of dimension {self.dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("design vector contains non-finite values")
        slack = atol * self.span
        if np.any(x < self.lower - slack) or np.any(x > self.upper + slack):
            raise ValueError(f"design vector {x} outside bounds [{self.lower}, {self.upper}]")
        return x

    def normalize(self, x) -> np.ndarray:
        x = self.check(x, atol=1e-12)
        return (x - self.lower) / self.span

    def denormalize(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-1:] != (self.dim,):
            raise ValueError(f"expected unit vector(s) of dimension {self.dim}, got shape {u.shape}")
        # endpoints map exactly onto the bounds
        x = self.lower + u * self.span
        return np.where(u == 1.0, self.upper, np.where(u == 0.0, self.lower, x))

    def clip_unit(self, u) -> np.ndarray:
        return np.clip(u, 0.0, 1.0)


def normalize(space: ParameterSpace, x) -> np.ndarray:
    """Map a physical design vector to the unit hypercube."""
    return space.normalize(x)


def denormalize(space: ParameterSpace, u) -> np.ndarray:
    return space.denormalize(u)


def distance(space: ParameterSpace, a, b) -> float:
    """Euclidean distance between two designs measured in normalized coordinates."""
    return float(np.linalg.norm(space.normalize(a) - space.normalize(b)))


def full_factorial(space: ParameterSpace, levels_per_dim: Sequence[int]) -> np.ndarray:
    """Cartesian grid of equally spaced levels, bounds included.

    The last dimension varies fastest. Returns an ``(prod(levels), d)`` array in
    physical units.
    """
    levels = [int(v) for v in levels_per_dim]
    if len(levels) != space.dim:
        raise ValueError(f"need {space.dim} level counts, got {len(levels)}")
    if any(v < 2 for v in levels):
        raise ValueError(f"every dimension needs at least 2 levels, got {levels}")
    if int(np.prod([float(v) for v in levels])) > MAX_FACTORIAL_POINTS:
        raise ValueError(f"full factorial with levels {levels} exceeds {MAX_FACTORIAL_POINTS} points")
    axes = [np.linspace(0.0, 1.0, v) for v in levels]
    mesh = np.meshgrid(*axes, indexing="ij")
    unit = np.stack([m.ravel() for m in mesh], axis=1)
    return space.denormalize(unit)


def latin_hypercube(space: ParameterSpace, n: int, seed: int | None = None) -> np.ndarray:
    """Plain Latin hypercube sample with uniform placement inside each bin.

    Every one of the ``n`` equal-width bins of every dimension holds exactly one
    point. No space-filling optimization is applied.
    """
    return space.denormalize(unit_latin_hypercube(space.dim, n, seed))


def unit_latin_hypercube(d: int, n: int, seed) -> np.ndarray:
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    perms = np.stack([rng.permutation(n) for _ in range(d)], axis=1)
    u = (perms + rng.random((n, d))) / n
    return np.minimum(u, np.nextafter(1.0, 0.0))
