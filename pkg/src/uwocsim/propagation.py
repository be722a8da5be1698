"""Split-step wave-optics propagation and aperture reception."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .planner import GridSpec, PropagationPlan, magnification_bounds
from .screens import PhaseScreen, dump_grid


class GeometryError(ValueError):
    """Field, screen, plan or receiver geometries do not match."""


class SamplingError(ValueError):
    """A propagation step violates the grid-spacing constraint."""


@dataclass(frozen=True)
class OpticalField:
    amplitude: np.ndarray = field(repr=False)
    spacing: float
    wavelength: float
    depth: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.amplitude, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GeometryError("field must be a square 2-D grid")
        object.__setattr__(self, "amplitude", a)

    @property
    def n_points(self) -> int:
        return self.amplitude.shape[0]

    @property
    def wavenumber(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    def power(self) -> float:
        return float(np.sum(self.intensity) * self.spacing**2)

    def coords(self) -> np.ndarray:
        return (np.arange(self.n_points) - self.n_points // 2) * self.spacing


@dataclass(frozen=True)
class ReceiverSpec:
    aperture_diameter: float
    center: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class IntensitySample:
    received_power: float
    realization: int = 0


def gaussian_source(grid: GridSpec, w0: float, depth: float = 0.0) -> OpticalField:
    """Unit-peak Gaussian beam exp(-r^2/w0^2) centred on the grid."""
    if not 0 < w0 < grid.n_points * grid.delta1 / 4:
        raise GeometryError(
            f"w0 = {w0} m must lie in (0, N*delta1/4 = {grid.n_points * grid.delta1 / 4} m) to keep a guard band"
        )
    x = (np.arange(grid.n_points) - grid.n_points // 2) * grid.delta1
    g = np.exp(-(x**2) / w0**2)
    return OpticalField(np.outer(g, g).astype(complex), grid.delta1, grid.wavelength, depth)


def vacuum_step(
    field: OpticalField,
    delta_d: float,
    magnification: float = 1.0,
    *,
    source_extent: float | None = None,
) -> OpticalField:
    """Scaled angular-spectrum propagation over ``delta_d``.

    The output grid spacing is ``magnification * field.spacing``. With unit
    magnification this is the plain Fresnel transfer-function propagator.
    """
    if delta_d <= 0:
        raise ValueError("delta_d must be positive")
    if magnification <= 0:
        raise SamplingError("magnification must be positive")
    n, d1, k = field.n_points, field.spacing, field.wavenumber
    m = magnification
    if m != 1.0:
        D1 = source_extent if source_extent is not None else n * d1
        lo, hi = magnification_bounds(d1, delta_d, D1, field.wavelength)
        if not lo <= m * d1 <= hi:
            raise SamplingError(f"output spacing {m * d1} outside admissible [{lo}, {hi}]")
    fx = np.fft.fftfreq(n, d1)
    f2 = fx[None, :] ** 2 + fx[:, None] ** 2
    kernel = np.exp(-1j * np.pi**2 * 2 * delta_d / (m * k) * f2)
    u = field.amplitude
    if m != 1.0:
        x1 = field.coords()
        r1 = x1[None, :] ** 2 + x1[:, None] ** 2
        u = u * np.exp(1j * k / 2 * (1 - m) / delta_d * r1)
    u = np.fft.ifft2(np.fft.fft2(u) * kernel)
    if m != 1.0:
        x2 = field.coords() * m
        r2 = x2[None, :] ** 2 + x2[:, None] ** 2
        u = u * np.exp(1j * k / 2 * (m - 1) / (m * delta_d) * r2) / m
    return OpticalField(u, d1 * m, field.wavelength, field.depth + delta_d)


def apply_screen(field: OpticalField, screen: PhaseScreen) -> OpticalField:
    if screen.phase.shape != field.amplitude.shape or not np.isclose(screen.spacing, field.spacing, rtol=1e-9):
        raise GeometryError("screen geometry does not match the field")
    return replace(field, amplitude=field.amplitude * np.exp(-1j * screen.phase))


def absorbing_window(n: int, spacing: float, exponent: int = 8, fraction: float = 0.9) -> np.ndarray:
    """Super-Gaussian edge absorber exp(-(r/R)^exponent), R = fraction*N*spacing/2."""
    x = (np.arange(n) - n // 2) * spacing
    r = np.hypot(x[None, :], x[:, None])
    radius = fraction * n * spacing / 2
    return np.exp(-((r / radius) ** exponent))


def propagate_link(
    source: OpticalField,
    plan: PropagationPlan,
    screens: Sequence[PhaseScreen],
    *,
    absorber: bool = False,
    on_screen: Callable[[int, OpticalField], None] | None = None,
) -> OpticalField:
    """Half-step, screen, full steps between screens, half-step to the receiver."""
    if len(screens) != plan.n_screens:
        raise GeometryError(f"plan has {plan.n_screens} screens, got {len(screens)}")
    for p, (s, z) in enumerate(zip(screens, plan.screen_depths), start=1):
        if not np.isclose(s.depth, z, rtol=0, atol=1e-9 * max(1.0, abs(z))):
            raise GeometryError(f"screen {p} at depth {s.depth} m, plan expects {z} m")
    if not np.isclose(source.depth, plan.transmitter_depth, rtol=0, atol=1e-9 * max(1.0, plan.transmitter_depth)):
        raise GeometryError("source field is not at the transmitter depth")
    u = source
    window = None
    for p, (screen, dd, m) in enumerate(zip(screens, plan.step_lengths, plan.magnifications), start=1):
        half_m = float(np.sqrt(m))
        u = vacuum_step(u, dd / 2, half_m)
        u = replace(u, depth=screen.depth)
        u = apply_screen(u, screen)
        if absorber:
            if window is None or window.shape != u.amplitude.shape or half_m != 1.0:
                window = absorbing_window(u.n_points, u.spacing)
            u = replace(u, amplitude=u.amplitude * window)
        if on_screen is not None:
            on_screen(p, u)
        u = vacuum_step(u, dd / 2, half_m)
        u = replace(u, depth=plan.plane_depths[p])
    return u


def propagate_vacuum(source: OpticalField, distance: float, n_steps: int = 1) -> OpticalField:
    u = source
    for _ in range(n_steps):
        u = vacuum_step(u, distance / n_steps)
    return u


def aperture_mask(n: int, spacing: float, receiver: ReceiverSpec) -> np.ndarray:
    if not 0 < receiver.aperture_diameter <= n * spacing:
        raise GeometryError(f"aperture {receiver.aperture_diameter} m does not fit a {n * spacing} m grid")
    x = (np.arange(n) - n // 2) * spacing
    cx, cy = receiver.center
    r2 = (x[None, :] - cx) ** 2 + (x[:, None] - cy) ** 2
    return r2 <= (receiver.aperture_diameter / 2) ** 2


def receive(field: OpticalField, receiver: ReceiverSpec, realization: int = 0) -> IntensitySample:
    """Sum of |U|^2*delta^2 over pixels whose centres fall inside the aperture disk."""
    mask = aperture_mask(field.n_points, field.spacing, receiver)
    power = float(np.sum(field.intensity[mask]) * field.spacing**2)
    return IntensitySample(received_power=power, realization=realization)


def beam_radius(field: OpticalField) -> float:
    """1/e^2 intensity radius from the second moment, sqrt(2*<r^2>)."""
    x = field.coords()
    I = field.intensity
    total = I.sum()
    cx = float((I.sum(axis=0) * x).sum() / total)
    cy = float((I.sum(axis=1) * x).sum() / total)
    r2 = (x[None, :] - cx) ** 2 + (x[:, None] - cy) ** 2
    return float(np.sqrt(2 * (I * r2).sum() / total))


def dump_intensity(directory: str | Path, prefix: str = "slice") -> Callable[[int, OpticalField], None]:
    """``on_screen`` callback writing the intensity at each screen depth."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def _cb(p: int, u: OpticalField) -> None:
        dump_grid(directory / f"{prefix}_{p:03d}.bin", u.intensity, u.spacing)

    return _cb
