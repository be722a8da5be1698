"""Sampling constraints and phase-screen placement for a vertical link."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class PlanError(ValueError):
    """A requested plan violates a sampling constraint."""


@dataclass(frozen=True)
class GridSpec:
    n_points: int
    delta1: float
    delta2: float
    wavelength: float
    source_extent: float

    def __post_init__(self):
        n = self.n_points
        if n < 64 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 64, got {n}")
        if not (self.delta1 > 0 and self.delta2 > 0 and self.wavelength > 0 and self.source_extent > 0):
            raise ValueError("grid spacings, wavelength and source extent must be positive")
        if self.source_extent > n * self.delta1 * (1 + 1e-12):
            raise ValueError("source extent D1 exceeds the grid width N*delta1")

    @classmethod
    def for_beam(cls, n_points: int, delta1: float, wavelength: float, w0: float, delta2: float | None = None):
        """Grid with the default source extent D1 = 4*w0 (twice the beam diameter)."""
        return cls(n_points, delta1, delta1 if delta2 is None else delta2, wavelength, min(4 * w0, n_points * delta1))

    @property
    def frequency_spacing(self) -> float:
        return 1.0 / (self.n_points * self.delta1)

    @property
    def width(self) -> float:
        return self.n_points * self.delta1


def max_screen_spacing(grid: GridSpec) -> float:
    """Largest screen separation N*delta1*delta2/lambda."""
    return grid.n_points * grid.delta1 * grid.delta2 / grid.wavelength


def magnification_bounds(delta1: float, delta_d: float, D1: float, wavelength: float) -> tuple[float, float]:
    """Admissible receiver-plane spacing interval for one propagation step."""
    if min(delta1, delta_d, D1, wavelength) <= 0:
        raise ValueError("all arguments must be positive")
    half = wavelength * delta_d / D1
    return max(delta1 - half, 0.0), delta1 + half


def min_screens(link_depth: float, delta_d_max: float) -> int:
    if link_depth <= 0 or delta_d_max <= 0:
        raise ValueError("link depth and delta_d_max must be positive")
    return max(1, math.ceil(link_depth / delta_d_max))


@dataclass(frozen=True)
class PropagationPlan:
    """Equal-interval layers with one screen at the centre of each.

    ``plane_depths`` holds the entry plane, the layer boundaries and the exit
    plane (n+1 values); ``screen_depths`` the n screen positions;
    ``spacings`` the grid spacing at each plane.
    """

    transmitter_depth: float
    link_depth: float
    screen_depths: tuple[float, ...]
    plane_depths: tuple[float, ...]
    step_lengths: tuple[float, ...]
    magnifications: tuple[float, ...]
    spacings: tuple[float, ...]
    delta_d_max: float
    n_min: int

    def __post_init__(self):
        self.validate()

    @property
    def n_screens(self) -> int:
        return len(self.screen_depths)

    @property
    def receiver_depth(self) -> float:
        return self.transmitter_depth + self.link_depth

    def screen_spacings(self) -> tuple[float, ...]:
        """Grid spacing at each screen (half-way through its layer)."""
        return tuple(s * math.sqrt(m) for s, m in zip(self.spacings[:-1], self.magnifications))

    def validate(self) -> None:
        n = len(self.step_lengths)
        if not (len(self.screen_depths) == len(self.magnifications) == n and len(self.plane_depths) == n + 1):
            raise PlanError("inconsistent plan lengths")
        if abs(sum(self.step_lengths) - self.link_depth) > 1e-9 * self.link_depth:
            raise PlanError("step lengths do not sum to the link depth")
        for dd in self.step_lengths:
            if dd > self.delta_d_max * (1 + 1e-12):
                raise PlanError(f"step {dd} m exceeds delta_d_max {self.delta_d_max} m")
        for p, m in enumerate(self.magnifications):
            if not math.isclose(m, self.spacings[p + 1] / self.spacings[p], rel_tol=1e-12):
                raise PlanError(f"magnification {p + 1} inconsistent with stored spacings")

    def report(self) -> str:
        lines = [
            f"transmitter_depth_m = {self.transmitter_depth!r}",
            f"link_depth_m = {self.link_depth!r}",
            f"receiver_depth_m = {self.receiver_depth!r}",
            f"delta_d_max_m = {self.delta_d_max:.2f}",
            f"delta_d_max_exact_m = {self.delta_d_max!r}",
            f"n_screens = {self.n_screens}",
            f"n_screens_min = {self.n_min}",
            f"screen_margin = {self.n_screens - self.n_min}",
            "# index, screen_depth_m, delta_d_m, magnification, spacing_margin_m",
        ]
        for p, (z, dd, m) in enumerate(zip(self.screen_depths, self.step_lengths, self.magnifications), start=1):
            lines.append(f"{p}, {z!r}, {dd!r}, {m!r}, {self.delta_d_max - dd!r}")
        return "\n".join(lines) + "\n"


def plan_screens(grid: GridSpec, d_T: float, d_L: float, n_screens: int) -> PropagationPlan:
    if d_L <= 0 or d_T < 0:
        raise ValueError("link depth must be positive and transmitter depth nonnegative")
    dmax = max_screen_spacing(grid)
    nmin = min_screens(d_L, dmax)
    if n_screens < nmin:
        raise PlanError(
            f"N_p = {n_screens} violates N_p >= d_L/delta_d_max "
            f"({d_L} m / {dmax:.2f} m requires at least {nmin} screens)"
        )
    dd = d_L / n_screens
    ratio = grid.delta2 / grid.delta1
    spacings = tuple(grid.delta1 * ratio ** (p / n_screens) for p in range(n_screens + 1))
    mags = tuple(spacings[p + 1] / spacings[p] for p in range(n_screens))
    for p in range(n_screens):
        lo, hi = magnification_bounds(spacings[p], dd, grid.source_extent, grid.wavelength)
        if not (lo <= spacings[p + 1] <= hi):
            raise PlanError(f"layer {p + 1}: spacing {spacings[p + 1]} outside admissible [{lo}, {hi}]")
    screens = tuple(d_T + (p - 0.5) * dd for p in range(1, n_screens + 1))
    planes = tuple(float(v) for v in d_T + dd * np.arange(n_screens + 1))
    return PropagationPlan(
        transmitter_depth=float(d_T),
        link_depth=float(d_L),
        screen_depths=screens,
        plane_depths=planes,
        step_lengths=(dd,) * n_screens,
        magnifications=mags,
        spacings=spacings,
        delta_d_max=dmax,
        n_min=nmin,
    )
