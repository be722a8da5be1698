"""Random phase screens by FFT power-spectrum inversion plus subharmonics."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .planner import GridSpec

DUMP_MAGIC = b"UWPS"
_HEADER = struct.Struct("<4sId")  # magic, N, spacing -> 16 bytes

PSDFunc = Callable[[np.ndarray], np.ndarray]


def make_rng(seed_tag: int | Sequence[int]) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by an int or an int tuple."""
    entropy = [int(seed_tag)] if np.isscalar(seed_tag) else [int(s) for s in seed_tag]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class PhaseScreen:
    phase: np.ndarray = field(repr=False)
    spacing: float
    depth: float = 0.0
    seed_tag: tuple[int, ...] = ()

    def __post_init__(self):
        ph = np.asarray(self.phase, dtype=float)
        if ph.ndim != 2 or ph.shape[0] != ph.shape[1]:
            raise ValueError("phase screen must be a square 2-D grid")
        if not np.all(np.isfinite(ph)):
            raise ValueError("phase screen contains non-finite values")
        object.__setattr__(self, "phase", ph)

    @property
    def n_points(self) -> int:
        return self.phase.shape[0]


def _fft_kappa(n: int, spacing: float) -> tuple[np.ndarray, np.ndarray, float]:
    dk = 2 * np.pi / (n * spacing)
    k1 = 2 * np.pi * np.fft.fftfreq(n, spacing)
    kx, ky = np.meshgrid(k1, k1)
    return kx, ky, dk


def _sanitize_psd(values, shape) -> np.ndarray:
    v = np.broadcast_to(np.asarray(values, dtype=float), shape).copy()
    if np.any(np.isnan(v)) or np.any(np.isposinf(v)):
        raise ValueError("phase PSD is not finite on the sampled frequency grid")
    return np.clip(v, 0.0, None)


def fft_psd_grid(n: int, spacing: float, psd: PSDFunc) -> tuple[np.ndarray, float]:
    """PSD sampled on the FFT frequency grid (DC set to 0, negatives clamped)."""
    kx, ky, dk = _fft_kappa(n, spacing)
    kappa = np.hypot(kx, ky)
    kappa[0, 0] = dk  # placeholder, overwritten below
    F = _sanitize_psd(psd(kappa), kappa.shape)
    F[0, 0] = 0.0
    return F, dk


def subharmonic_frequencies(n: int, spacing: float, levels: int):
    """Yield (level, kx, ky, dk_level) for the 8 off-centre points of each 3x3 patch."""
    dk = 2 * np.pi / (n * spacing)
    for level in range(1, levels + 1):
        dkl = dk / 3**level
        for v in (-1, 0, 1):
            for u in (-1, 0, 1):
                if u == 0 and v == 0:
                    continue
                yield level, u * dkl, v * dkl, dkl


def generate_screen(
    grid: GridSpec,
    psd: PSDFunc,
    seed: int | Sequence[int],
    n_subharmonic_levels: int = 3,
    *,
    spacing: float | None = None,
    depth: float = 0.0,
) -> PhaseScreen:
    """Draw one screen whose phase variance is the discrete PSD integral.

    Each Fourier coefficient is h*sqrt(F)*dkappa with Re(h), Im(h) standard
    normal; the real part of the synthesized field is kept, then the
    grid mean (piston) is removed.
    """
    if n_subharmonic_levels < 0:
        raise ValueError("n_subharmonic_levels must be >= 0")
    n = grid.n_points
    delta = grid.delta1 if spacing is None else spacing
    rng = make_rng(seed)
    F, dk = fft_psd_grid(n, delta, psd)
    h = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    phase = np.fft.ifft2(h * np.sqrt(F) * dk).real * (n * n)

    if n_subharmonic_levels:
        x = (np.arange(n) - n / 2) * delta
        subs = list(subharmonic_frequencies(n, delta, n_subharmonic_levels))
        kappa = np.array([np.hypot(kx, ky) for _, kx, ky, _ in subs])
        Fs = _sanitize_psd(psd(kappa), kappa.shape)
        hs = rng.standard_normal(len(subs)) + 1j * rng.standard_normal(len(subs))
        low = np.zeros((n, n), dtype=complex)
        for (_, kx, ky, dkl), f, hh in zip(subs, Fs, hs):
            low += (hh * np.sqrt(f) * dkl) * np.outer(np.exp(1j * ky * x), np.exp(1j * kx * x))
        phase = phase + low.real

    phase -= phase.mean()
    tag = (int(seed),) if np.isscalar(seed) else tuple(int(s) for s in seed)
    return PhaseScreen(phase=phase, spacing=float(delta), depth=float(depth), seed_tag=tag)


@dataclass(frozen=True)
class EnsembleStats:
    mean_map: np.ndarray = field(repr=False)
    mean: float
    variance: float
    structure_function: dict[int, float]


def screen_ensemble_stats(screens: Sequence[PhaseScreen], lags: Sequence[int] = (1, 2, 4, 8, 16)) -> EnsembleStats:
    """Ensemble statistics of a stack of screens.

    ``variance`` is the unbiased across-screen variance averaged over pixels;
    ``structure_function`` maps a lag in pixels to <[phi(x+r) - phi(x)]^2>,
    averaged over x- and y-shifts, positions and screens.
    """
    if len(screens) < 2:
        raise ValueError("need at least 2 screens")
    shape, spacing = screens[0].phase.shape, screens[0].spacing
    for s in screens[1:]:
        if s.phase.shape != shape or s.spacing != spacing:
            raise ValueError("screens have mismatched geometry")
    stack = np.stack([s.phase for s in screens])
    mean_map = stack.mean(axis=0)
    var = float(stack.var(axis=0, ddof=1).mean())
    sf: dict[int, float] = {}
    for r in lags:
        if not 0 < r < shape[0]:
            continue
        dx = stack[:, :, r:] - stack[:, :, :-r]
        dy = stack[:, r:, :] - stack[:, :-r, :]
        sf[int(r)] = float(0.5 * (np.mean(dx * dx) + np.mean(dy * dy)))
    return EnsembleStats(mean_map=mean_map, mean=float(mean_map.mean()), variance=var, structure_function=sf)


def dump_grid(path: str | Path, data: np.ndarray, spacing: float) -> None:
    """Write a square real grid: 16-byte header then row-major float64 LE."""
    arr = np.ascontiguousarray(data, dtype="<f8")
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError("only square 2-D grids can be dumped")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DUMP_MAGIC, arr.shape[0], float(spacing)))
        fh.write(arr.tobytes(order="C"))


def load_grid(path: str | Path) -> tuple[np.ndarray, float]:
    raw = Path(path).read_bytes()
    magic, n, spacing = _HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise ValueError(f"{path}: not a uwocsim grid dump")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != n * n:
        raise ValueError(f"{path}: truncated grid dump")
    return data.reshape(n, n).copy(), spacing


def dump_screen(path: str | Path, screen: PhaseScreen) -> None:
    dump_grid(path, screen.phase, screen.spacing)
