"""Oceanic refractive-index power spectrum and the per-screen phase PSD."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environment import TurbulenceLayerParams

COMPONENTS = ("T", "S", "TS")


@dataclass(frozen=True)
class SpectrumParams:
    layer: TurbulenceLayerParams
    beta0: float = 0.72

    def __post_init__(self):
        if not self.beta0 > 0:
            raise ValueError("beta0 must be positive")


def _check_kappa(kappa) -> np.ndarray:
    k = np.asarray(kappa, dtype=float)
    if np.any(~(k > 0)):
        raise ValueError("kappa must be > 0")
    return k


def _component(kappa: np.ndarray, chi: float, c_q: float, p: SpectrumParams) -> np.ndarray:
    lay = p.layer
    x = kappa * lay.eta
    pref = p.beta0 * chi * lay.epsilon ** (-1.0 / 3.0) / (4 * np.pi)
    bracket = 1 + 21.61 * x**0.61 * c_q**0.02 - 18.18 * x**0.55 * c_q**0.04
    return pref * kappa ** (-11.0 / 3.0) * np.exp(-174.90 * x * x * c_q**0.96) * bracket


def component_spectrum(q: str, kappa, params: SpectrumParams):
    """Temperature (``"T"``), salinity (``"S"``) or co-spectrum (``"TS"``), in m^3.

    The bracket term is not sign-definite; negative values are returned as-is.
    """
    if q not in COMPONENTS:
        raise ValueError(f"unknown spectrum component {q!r}")
    k = _check_kappa(kappa)
    out = _component(k, params.layer.chi(q), params.layer.c(q), params)
    return out if out.ndim else float(out)


def refractive_index_spectrum(kappa, params: SpectrumParams):
    k = _check_kappa(kappa)
    lay = params.layer
    out = (
        lay.A**2 * _component(k, lay.chi_T, lay.c_T, params)
        + lay.B**2 * _component(k, lay.chi_S, lay.c_S, params)
        + 2 * lay.A * lay.B * _component(k, lay.chi_TS, lay.c_TS, params)
    )
    return out if out.ndim else float(out)


def phase_psd(kappa, wavenumber: float, delta_d: float, params: SpectrumParams):
    """Phase power spectral density 2*pi*k^2*delta_d*Phi_n(kappa), in m^2."""
    if not (wavenumber > 0 and delta_d > 0):
        raise ValueError("wavenumber and delta_d must be positive")
    return 2 * np.pi * wavenumber**2 * delta_d * refractive_index_spectrum(kappa, params)


class PhasePSD:
    """Callable phase PSD for one screen, as consumed by :func:`screens.generate_screen`."""

    def __init__(self, params: SpectrumParams, wavelength: float, delta_d: float):
        self.params = params
        self.wavenumber = 2 * np.pi / wavelength
        self.delta_d = delta_d

    def __call__(self, kappa):
        return phase_psd(kappa, self.wavenumber, self.delta_d, self.params)
