"""Normalized sample sets, histograms and goodness-of-fit measures."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MIN_BINS = 50
MAX_BINS = 200


@dataclass(frozen=True)
class SampleSet:
    """Received intensities normalized to unit mean.

    ``raw_mean`` keeps the normalization constant so absolute powers can be
    recovered as ``intensities * raw_mean``.
    """

    intensities: np.ndarray = field(repr=False)
    raw_mean: float = 1.0

    def __post_init__(self):
        x = np.asarray(self.intensities, dtype=float)
        if x.ndim != 1 or x.size == 0:
            raise ValueError("a sample set needs a non-empty 1-D array")
        if not np.all(np.isfinite(x)) or np.any(x < 0):
            raise ValueError("intensities must be finite and nonnegative")
        x.setflags(write=False)
        object.__setattr__(self, "intensities", x)

    @classmethod
    def from_powers(cls, powers) -> "SampleSet":
        """Normalize raw received powers by their sample mean."""
        p = np.asarray(powers, dtype=float)
        if p.size == 0:
            raise ValueError("no samples")
        m = math.fsum(p) / p.size
        if not m > 0:
            raise ValueError("received powers have a non-positive mean")
        return cls(p / m, raw_mean=m)

    @property
    def count(self) -> int:
        return self.intensities.size

    def mean(self) -> float:
        return math.fsum(self.intensities) / self.count

    def variance(self) -> float:
        """Unbiased sample variance; for unit-mean data this is the scintillation index."""
        if self.count < 2:
            return math.nan
        return float(np.var(self.intensities, ddof=1))


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray = field(repr=False)
    densities: np.ndarray = field(repr=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        f = np.asarray(self.densities, dtype=float)
        if e.ndim != 1 or f.shape != (e.size - 1,) or f.size < 1:
            raise ValueError("need M+1 edges for M densities")
        if np.any(np.diff(e) <= 0):
            raise ValueError("bin edges must be strictly ascending")
        if np.any(f < 0):
            raise ValueError("densities must be nonnegative")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "densities", f)

    @property
    def n_bins(self) -> int:
        return self.densities.size

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def total_mass(self) -> float:
        return float(np.sum(self.densities * self.widths))


def default_bin_count(n: int) -> int:
    """ceil(sqrt(n)) clamped to [MIN_BINS, MAX_BINS]."""
    return int(min(max(math.ceil(math.sqrt(n)), MIN_BINS), MAX_BINS))


def make_histogram(samples: SampleSet | np.ndarray, n_bins: int | None = None) -> Histogram:
    """Equal-width density histogram over [0, max(samples)]."""
    x = np.asarray(getattr(samples, "intensities", samples), dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    m = default_bin_count(x.size) if n_bins is None else int(n_bins)
    if m < 1:
        raise ValueError("n_bins must be positive")
    top = float(x.max())
    if top <= 0:
        raise ValueError("all samples are zero")
    counts, edges = np.histogram(x, bins=m, range=(0.0, top))
    dens = counts / (x.size * np.diff(edges))
    return Histogram(edges, dens)


def r_squared(hist: Histogram, density: Callable[[np.ndarray], np.ndarray]) -> float:
    """Coefficient of determination between histogram densities and a model density at bin centres."""
    if hist.n_bins < 2:
        raise ValueError("R^2 needs at least two bins")
    fm = hist.densities
    ss_tot = float(np.sum((fm - fm.mean()) ** 2))
    if ss_tot == 0:
        raise ValueError("histogram has zero variance; R^2 is undefined")
    fp = np.asarray(density(hist.centers), dtype=float)
    fp = np.where(np.isfinite(fp), fp, 0.0)
    return 1.0 - float(np.sum((fm - fp) ** 2)) / ss_tot


def empirical_cdf(x) -> np.ndarray:
    """Right-continuous empirical CDF (rank/Num) evaluated at each sample."""
    x = np.asarray(x, dtype=float)
    s = np.sort(x)
    return np.searchsorted(s, x, side="right") / x.size


def mse(samples: SampleSet | np.ndarray, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Mean squared difference between the empirical and model CDFs at the samples."""
    x = np.asarray(getattr(samples, "intensities", samples), dtype=float)
    if x.size < 2:
        raise ValueError("MSE needs at least two samples")
    F = np.asarray(cdf(x), dtype=float)
    return float(np.mean((empirical_cdf(x) - F) ** 2))
