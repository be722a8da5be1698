"""Ocean profiles and the layer-wise turbulence parameters derived from them.

Profiles are depth-ordered temperature/salinity tables (typically an Argo
cast exported to CSV). Everything downstream of a profile is a pure function
of (profile, depth, epsilon, K_T) plus the fit constants in
``data/coefficients.txt``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

T_RANGE = (-5.0, 40.0)
S_RANGE = (0.0, 45.0)
KELVIN = 273.15
PROFILE_HEADER = ("depth_m", "temperature_C", "salinity_ppt")

DEFAULT_EPSILON = 1e-5
DEFAULT_K_T = 1e-5
DEFAULT_WAVELENGTH = 532e-9


class ProfileError(ValueError):
    """Raised for malformed or physically invalid profile data."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateGradientError(ValueError):
    """dS/dz vanishes, so the temperature-salinity gradient ratio is undefined."""


def parse_coefficients(text: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"coefficient file line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = float(value)
    return out


@lru_cache(maxsize=None)
def _default_coefficients() -> tuple[tuple[str, float], ...]:
    text = resources.files("uwocsim").joinpath("data/coefficients.txt").read_text()
    return tuple(parse_coefficients(text).items())


def load_coefficients(path: str | Path | None = None) -> dict[str, float]:
    """Read a key=value coefficient table; ``None`` gives the bundled defaults."""
    if path is None:
        return dict(_default_coefficients())
    return parse_coefficients(Path(path).read_text())


def _check_ranges(temperature: float, salinity: float, line: int | None = None) -> None:
    if not (T_RANGE[0] <= temperature <= T_RANGE[1]):
        raise ProfileError(f"temperature {temperature} degC outside {list(T_RANGE)}", line)
    if not (S_RANGE[0] <= salinity <= S_RANGE[1]):
        raise ProfileError(f"salinity {salinity} ppt outside {list(S_RANGE)}", line)


@dataclass(frozen=True)
class OceanProfile:
    depth: np.ndarray
    temperature: np.ndarray
    salinity: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        for name in ("depth", "temperature", "salinity"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.depth.shape == self.temperature.shape == self.salinity.shape):
            raise ProfileError("depth, temperature and salinity lengths differ")
        if self.depth.size < 2:
            raise ProfileError("a profile needs at least 2 samples")
        if np.any(np.diff(self.depth) <= 0):
            bad = int(np.argmax(np.diff(self.depth) <= 0)) + 2
            raise ProfileError(f"depths must be strictly increasing (sample {bad})")
        for t, s in zip(self.temperature, self.salinity):
            _check_ranges(float(t), float(s))

    @property
    def span(self) -> tuple[float, float]:
        return float(self.depth[0]), float(self.depth[-1])

    def __len__(self) -> int:
        return int(self.depth.size)

    def _check_depth(self, depth: float) -> None:
        lo, hi = self.span
        if not (lo <= depth <= hi):
            raise ValueError(f"depth {depth} m outside profile span [{lo}, {hi}]")


@dataclass(frozen=True)
class SeawaterState:
    temperature: float
    salinity: float
    depth: float

    def __post_init__(self):
        _check_ranges(self.temperature, self.salinity)

    @property
    def temperature_kelvin(self) -> float:
        return self.temperature + KELVIN


@dataclass(frozen=True)
class ThermoCoefficients:
    alpha_c: float
    beta_c: float
    eta: float
    A: float
    B: float
    c_T: float
    c_S: float
    c_TS: float
    nu: float
    prandtl_T: float
    prandtl_S: float


@dataclass(frozen=True)
class TurbulenceLayerParams:
    """Inputs of the oceanic refractive-index spectrum for one layer."""

    A: float
    B: float
    chi_T: float
    chi_S: float
    chi_TS: float
    omega: float
    H: float
    dr: float
    eta: float
    epsilon: float
    alpha_c: float
    beta_c: float
    c_T: float
    c_S: float
    c_TS: float
    depth: float = float("nan")
    extras: Mapping[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.chi_T < 0 or self.chi_S < 0 or self.chi_TS < 0:
            raise ValueError("dissipation rates must be nonnegative")
        if self.eta <= 0 or self.epsilon <= 0:
            raise ValueError("eta and epsilon must be positive")
        if self.alpha_c <= 0 or self.beta_c <= 0:
            raise ValueError("alpha_c and beta_c must be positive")
        # a turbulence-free layer (chi_T == 0) may carry omega = dr = 0
        if self.dr < 0 or (self.dr == 0 and self.chi_T > 0):
            raise ValueError("dr must be positive")

    @property
    def turbulence_free(self) -> bool:
        return self.chi_T == 0.0

    def chi(self, q: str) -> float:
        return {"T": self.chi_T, "S": self.chi_S, "TS": self.chi_TS}[q]

    def c(self, q: str) -> float:
        return {"T": self.c_T, "S": self.c_S, "TS": self.c_TS}[q]


def load_profile(path: str | Path, source_id: str | None = None) -> OceanProfile:
    """Parse a ``depth_m,temperature_C,salinity_ppt`` CSV into a profile.

    ``#`` comment lines and blank lines are skipped. Errors carry the 1-based
    line number of the offending row.
    """
    path = Path(path)
    rows: list[tuple[float, float, float]] = []
    header_seen = False
    prev_depth = None
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            cells = next(csv.reader([stripped]))
            cells = [c.strip() for c in cells]
            if not header_seen:
                if tuple(cells) != PROFILE_HEADER:
                    raise ProfileError(
                        f"expected header {','.join(PROFILE_HEADER)}, got {stripped!r}", lineno
                    )
                header_seen = True
                continue
            if len(cells) != 3:
                raise ProfileError(f"expected 3 fields, got {len(cells)}", lineno)
            try:
                depth, temp, sal = (float(c) for c in cells)
            except ValueError as exc:
                raise ProfileError(f"unparseable number ({exc})", lineno) from None
            if not all(math.isfinite(v) for v in (depth, temp, sal)):
                raise ProfileError("non-finite value", lineno)
            if prev_depth is not None and depth <= prev_depth:
                raise ProfileError(
                    f"depth {depth} not greater than previous {prev_depth} (non-monotone, row {len(rows) + 1})",
                    lineno,
                )
            _check_ranges(temp, sal, lineno)
            rows.append((depth, temp, sal))
            prev_depth = depth
    if not header_seen:
        raise ProfileError(f"{path}: empty profile file")
    if len(rows) < 2:
        raise ProfileError(f"{path}: a profile needs at least 2 samples")
    arr = np.asarray(rows)
    return OceanProfile(arr[:, 0], arr[:, 1], arr[:, 2], source_id=source_id or path.stem)


def write_profile(profile: OceanProfile, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        if profile.source_id:
            fh.write(f"# source_id: {profile.source_id}\n")
        fh.write(",".join(PROFILE_HEADER) + "\n")
        for z, t, s in zip(profile.depth.tolist(), profile.temperature.tolist(), profile.salinity.tolist()):
            fh.write(f"{z!r},{t!r},{s!r}\n")


def state_at(profile: OceanProfile, depth: float) -> SeawaterState:
    """Linearly interpolated (T, S) at ``depth``."""
    profile._check_depth(depth)
    t = float(np.interp(depth, profile.depth, profile.temperature))
    s = float(np.interp(depth, profile.depth, profile.salinity))
    return SeawaterState(temperature=t, salinity=s, depth=float(depth))


def gradients_at(profile: OceanProfile, depth: float) -> tuple[float, float]:
    """Vertical gradients (dT/dz, dS/dz), z positive downward.

    Between samples this is the slope of the bracketing segment; at an
    interior sample it is the central difference over its two neighbours;
    at the first/last sample it is one-sided.
    """
    profile._check_depth(depth)
    z = profile.depth
    idx = int(np.searchsorted(z, depth))
    n = z.size
    if idx < n and z[idx] == depth:
        lo, hi = max(idx - 1, 0), min(idx + 1, n - 1)
    else:
        lo, hi = idx - 1, idx
    dz = z[hi] - z[lo]
    dT = (profile.temperature[hi] - profile.temperature[lo]) / dz
    dS = (profile.salinity[hi] - profile.salinity[lo]) / dz
    return float(dT), float(dS)


# -- thermodynamic fits ---------------------------------------------------------


def _eos(c: Mapping[str, float], t: float, s: float, z: float):
    ta = t - c["eos_t0"]
    sa = s - c["eos_s0"]
    rho = (
        c["eos_rho0"]
        - c["eos_a0"] * (1 + 0.5 * c["eos_lambda1"] * ta + c["eos_mu1"] * z) * ta
        + c["eos_b0"] * (1 - 0.5 * c["eos_lambda2"] * sa - c["eos_mu2"] * z) * sa
        - c["eos_nu"] * ta * sa
    )
    drho_dt = -c["eos_a0"] * (1 + c["eos_lambda1"] * ta + c["eos_mu1"] * z) - c["eos_nu"] * sa
    drho_ds = c["eos_b0"] * (1 - c["eos_lambda2"] * sa - c["eos_mu2"] * z) - c["eos_nu"] * ta
    return rho, -drho_dt / rho, drho_ds / rho


def seawater_density(t: float, s: float, z: float = 0.0, coeffs: Mapping[str, float] | None = None) -> float:
    return _eos(coeffs or load_coefficients(), t, s, z)[0]


def dynamic_viscosity(t: float, s: float, coeffs: Mapping[str, float] | None = None) -> float:
    c = coeffs or load_coefficients()
    mu_w = c["visc_w0"] + 1.0 / (c["visc_w1"] * (t + c["visc_w2"]) ** 2 - c["visc_w3"])
    sk = s / 1000.0
    a = c["visc_a0"] + c["visc_a1"] * t + c["visc_a2"] * t * t
    b = c["visc_b0"] + c["visc_b1"] * t + c["visc_b2"] * t * t
    return mu_w * (1 + a * sk + b * sk * sk)


def kinematic_viscosity(t: float, s: float, z: float = 0.0, coeffs: Mapping[str, float] | None = None) -> float:
    c = coeffs or load_coefficients()
    return dynamic_viscosity(t, s, c) / _eos(c, t, s, z)[0]


def _specific_heat(c: Mapping[str, float], t: float, s: float) -> float:
    cp_w = c["cp_w0"] + t * (c["cp_w1"] + t * (c["cp_w2"] + t * (c["cp_w3"] + t * c["cp_w4"])))
    a = c["cp_a0"] + c["cp_a1"] * t + c["cp_a2"] * t * t
    b = c["cp_b0"] + c["cp_b1"] * t + c["cp_b2"] * t * t
    return cp_w + a * s + b * s**1.5


def _prandtl_numbers(c: Mapping[str, float], t: float, s: float, z: float, nu: float) -> tuple[float, float]:
    rho = _eos(c, t, s, z)[0]
    k = c["cond_k0"] * (1 + c["cond_t1"] * t + c["cond_t2"] * t * t + c["cond_s1"] * s)
    kappa_t = k / (rho * _specific_heat(c, t, s))
    t_ref = c["salt_diff_t_ref"]
    d_salt = (
        c["salt_diff_ref"]
        * ((t + KELVIN) / (t_ref + KELVIN))
        * (dynamic_viscosity(t_ref, s, c) / dynamic_viscosity(t, s, c))
    )
    return nu / kappa_t, nu / d_salt


def index_coefficients(
    t: float, s: float, wavelength: float = DEFAULT_WAVELENGTH, coeffs: Mapping[str, float] | None = None
) -> tuple[float, float]:
    """Magnitudes of dn/dT (per K) and dn/dS (per ppt) from the Quan-Fry fit."""
    c = coeffs or load_coefficients()
    lam = wavelength * 1e9
    dn_dt = (c["qf_n2"] + 2 * c["qf_n3"] * t) * s + 2 * c["qf_n4"] * t + c["qf_n7"] / lam
    dn_ds = c["qf_n1"] + c["qf_n2"] * t + c["qf_n3"] * t * t + c["qf_n6"] / lam
    return abs(dn_dt), abs(dn_ds)


def thermo_coefficients(
    state: SeawaterState,
    epsilon: float = DEFAULT_EPSILON,
    *,
    wavelength: float = DEFAULT_WAVELENGTH,
    beta0: float | None = None,
    coeffs: Mapping[str, float] | None = None,
) -> ThermoCoefficients:
    c = coeffs or load_coefficients()
    if beta0 is None:
        beta0 = c["beta0"]
    t, s, z = state.temperature, state.salinity, state.depth
    _, alpha_c, beta_c = _eos(c, t, s, z)
    nu = dynamic_viscosity(t, s, c) / _eos(c, t, s, z)[0]
    eta = (nu**3 / epsilon) ** 0.25
    pr_t, pr_s = _prandtl_numbers(c, t, s, z, nu)
    pr_ts = 2 * pr_t * pr_s / (pr_t + pr_s)
    scale = c["c_scale"] ** (4.0 / 3.0) * beta0
    A, B = index_coefficients(t, s, wavelength, c)
    return ThermoCoefficients(
        alpha_c=alpha_c,
        beta_c=beta_c,
        eta=eta,
        A=A,
        B=B,
        c_T=scale / pr_t,
        c_S=scale / pr_s,
        c_TS=scale / pr_ts,
        nu=nu,
        prandtl_T=pr_t,
        prandtl_S=pr_s,
    )


def eddy_diffusivity_ratio(omega: float, coeffs: Mapping[str, float] | None = None) -> float:
    c = coeffs or load_coefficients()
    w = abs(omega)
    if w >= 1.0:
        return w / (w - math.sqrt(w * (w - 1.0)))
    if w >= 0.5:
        return c["dr_mid_slope"] * w - c["dr_mid_offset"]
    return c["dr_low_slope"] * w


def layer_params(
    profile: OceanProfile,
    depth: float,
    epsilon: float = DEFAULT_EPSILON,
    K_T: float = DEFAULT_K_T,
    *,
    wavelength: float = DEFAULT_WAVELENGTH,
    beta0: float | None = None,
    coeffs: Mapping[str, float] | None = None,
) -> TurbulenceLayerParams:
    if epsilon <= 0 or K_T <= 0:
        raise ValueError("epsilon and K_T must be positive")
    c = coeffs or load_coefficients()
    dT, dS = gradients_at(profile, depth)
    if dS == 0.0:
        raise DegenerateGradientError(f"dS/dz = 0 at depth {depth} m; H and omega are undefined")
    thermo = thermo_coefficients(
        state_at(profile, depth), epsilon, wavelength=wavelength, beta0=beta0, coeffs=c
    )
    return _assemble_layer(dT, dS, thermo, epsilon, K_T, depth, c)


def _assemble_layer(dT, dS, thermo: ThermoCoefficients, epsilon, K_T, depth, c) -> TurbulenceLayerParams:
    H = dT / dS
    omega = (thermo.alpha_c / thermo.beta_c) * abs(H)
    dr = eddy_diffusivity_ratio(omega, c)
    chi_T = K_T * dT * dT
    if chi_T == 0.0:
        chi_S = chi_TS = 0.0
    else:
        chi_S = thermo.alpha_c**2 * chi_T * dr / (omega**2 * thermo.beta_c**2)
        chi_TS = thermo.alpha_c * chi_T * (1 + dr) / (2 * omega * thermo.beta_c)
    return TurbulenceLayerParams(
        A=thermo.A,
        B=thermo.B,
        chi_T=chi_T,
        chi_S=chi_S,
        chi_TS=chi_TS,
        omega=omega,
        H=H,
        dr=dr,
        eta=thermo.eta,
        epsilon=epsilon,
        alpha_c=thermo.alpha_c,
        beta_c=thermo.beta_c,
        c_T=thermo.c_T,
        c_S=thermo.c_S,
        c_TS=thermo.c_TS,
        depth=float(depth),
        extras={"dT_dz": dT, "dS_dz": dS, "nu": thermo.nu, "K_T": K_T},
    )
