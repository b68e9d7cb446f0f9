"""Complex reflection spectra, dB conversion and scalar objectives."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAGNITUDE_FLOOR = 1e-15
DB_FLOOR = 20.0 * np.log10(MAGNITUDE_FLOOR)


class FrequencyGrid:
    """Strictly increasing, positive frequency nodes in GHz."""

    def __init__(self, freqs):
        freqs = np.array(freqs, dtype=float).ravel()
        if freqs.size < 2:
            raise ValueError("a frequency grid needs at least 2 nodes")
        if not np.all(np.isfinite(freqs)) or np.any(freqs <= 0):
            raise ValueError("frequencies must be finite and positive")
        if np.any(np.diff(freqs) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        freqs.flags.writeable = False
        self.freqs = freqs

    @classmethod
    def uniform(cls, start: float, stop: float, num: int = 101) -> "FrequencyGrid":
        return cls(np.linspace(start, stop, num))

    @classmethod
    def bands(cls, *bands: tuple[float, float], num: int = 101) -> "FrequencyGrid":
        """Concatenate ``num`` uniform nodes per (start, stop) band."""
        return cls(np.concatenate([np.linspace(a, b, num) for a, b in sorted(bands)]))

    def __len__(self):
        return self.freqs.size

    def __eq__(self, other):
        return isinstance(other, FrequencyGrid) and np.array_equal(self.freqs, other.freqs)

    def __repr__(self):
        return f"FrequencyGrid({len(self)} nodes, {self.freqs[0]:g}-{self.freqs[-1]:g} GHz)"

    @property
    def span(self) -> tuple[float, float]:
        return float(self.freqs[0]), float(self.freqs[-1])

    def contains(self, f: float) -> bool:
        return self.freqs[0] <= f <= self.freqs[-1]

    def interpolation_matrix(self, targets: Sequence[float]) -> np.ndarray:
        """Rows of linear interpolation weights, shape ``(len(targets), m)``.

        ``matrix @ values`` interpolates nodal values to the targets; a target
        sitting on a node selects that node with weight exactly 1.
        """
        targets = np.atleast_1d(np.asarray(targets, dtype=float))
        out = np.zeros((targets.size, len(self)))
        for row, f in enumerate(targets):
            if not self.contains(f):
                raise ValueError(f"frequency {f} GHz outside grid span {self.span}")
            k = int(np.searchsorted(self.freqs, f))
            if self.freqs[min(k, len(self) - 1)] == f:
                out[row, k] = 1.0
                continue
            f0, f1 = self.freqs[k - 1], self.freqs[k]
            t = (f - f0) / (f1 - f0)
            out[row, k - 1] = 1.0 - t
            out[row, k] = t
        return out


@dataclass(frozen=True, eq=False)
class ComplexSpectrum:
    grid: FrequencyGrid
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        re = np.array(self.re, dtype=float)
        im = np.array(self.im, dtype=float)
        m = len(self.grid)
        if re.shape != (m,) or im.shape != (m,):
            raise ValueError(f"spectrum arrays must have shape ({m},), got {re.shape} and {im.shape}")
        if not (np.all(np.isfinite(re)) and np.all(np.isfinite(im))):
            raise ValueError("spectrum contains non-finite values")
        re.flags.writeable = False
        im.flags.writeable = False
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def from_complex(cls, grid: FrequencyGrid, s) -> "ComplexSpectrum":
        s = np.asarray(s)
        return cls(grid, s.real, s.imag)

    @property
    def values(self) -> np.ndarray:
        return self.re + 1j * self.im

    def db(self) -> np.ndarray:
        return to_db(self)


def db_from_parts(re, im):
    """Element-wise ``20 log10 |re + j im|`` with the magnitude floor applied."""
    mag = np.hypot(re, im)
    return 20.0 * np.log10(np.maximum(mag, MAGNITUDE_FLOOR))


def to_db(s: ComplexSpectrum) -> np.ndarray:
    return db_from_parts(s.re, s.im)


def sample_db(s: ComplexSpectrum, f: float) -> float:
    """dB value at frequency ``f``.

    Off-grid frequencies are reached by interpolating the real and imaginary
    parts linearly, never the dB curve itself.
    """
    w = s.grid.interpolation_matrix([f])[0]
    return float(db_from_parts(w @ s.re, w @ s.im))


@dataclass(frozen=True)
class ObjectiveSpec:
    """Target frequencies whose worst (largest) dB value is minimized."""

    targets: tuple[float, ...]

    def __post_init__(self):
        targets = tuple(float(f) for f in np.atleast_1d(self.targets))
        if not targets:
            raise ValueError("an objective needs at least one target frequency")
        if not all(np.isfinite(f) and f > 0 for f in targets):
            raise ValueError(f"target frequencies must be positive, got {targets}")
        object.__setattr__(self, "targets", targets)

    def validate(self, grid: FrequencyGrid) -> None:
        for f in self.targets:
            if not grid.contains(f):
                raise ValueError(f"target {f} GHz outside grid span {grid.span}")

    def aggregate(self, target_db: np.ndarray) -> np.ndarray:
        """Reduce dB values over the trailing target axis to the objective."""
        return np.max(target_db, axis=-1)


def objective(s: ComplexSpectrum, spec: ObjectiveSpec) -> float:
    """Worst-case dB value over the target frequencies."""
    w = s.grid.interpolation_matrix(spec.targets)
    return float(spec.aggregate(db_from_parts(w @ s.re, w @ s.im)))


def write_spectrum_csv(s: ComplexSpectrum, path) -> None:
    """Write ``freq_GHz, re, im, dB`` columns with round-trip precision."""
    db = to_db(s)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["freq_GHz", "re", "im", "dB"])
        for row in zip(s.grid.freqs, s.re, s.im, db):
            writer.writerow([f"{v:.17g}" for v in row])
