"""Campaign orchestration: plan, simulate, fit, goodness of fit, BER.

Every stage reads and writes plain files in the output directory, so a
campaign can be resumed or mixed with externally produced samples:

=================  ==========================================================
``plan.txt``       screen placement report
``samples.csv``    ``realization,received_power,normalized_intensity``
``fit_report.json`` per-model parameters, log-likelihood, R^2, MSE, flags
``histogram.csv``  ``bin_left,bin_right,density``
``ber.csv``        ``snr_db,average_ber,method`` for the fitted WGG model
``provenance.json`` config hash, seed, code version, timestamp
=================  ==========================================================

Only ``provenance.json`` carries a timestamp; every other byte is a
function of the configuration and the master seed.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .ber import BERCurve, ber_curve
from .environment import DegenerateGradientError, ProfileError, layer_params, load_profile
from .fading.distributions import ALL_FAMILIES, WGGParams
from .fading.fitting import FitReport, fit_all, score_fit
from .fading.gof import Histogram, SampleSet, make_histogram
from .planner import GridSpec, PlanError, PropagationPlan, plan_screens
from .propagation import GeometryError, ReceiverSpec, SamplingError, aperture_mask, gaussian_source, propagate_link, receive
from .screens import generate_screen
from .spectrum import PhasePSD, SpectrumParams

BUILTIN_PREFIX = "builtin:"
SAMPLES_FILE = "samples.csv"
PLAN_FILE = "plan.txt"
REPORT_FILE = "fit_report.json"
HISTOGRAM_FILE = "histogram.csv"
BER_FILE = "ber.csv"
PROVENANCE_FILE = "provenance.json"

# exit codes shared with the CLI
EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 1, 2, 3


class ConfigError(ValueError):
    pass


class ArtifactError(ValueError):
    """A stage input is missing or incompatible."""


class StageError(RuntimeError):
    """A failure inside one stage, tagged with the stage name and an exit code."""

    def __init__(self, stage: str, message: str, exit_code: int = EXIT_NUMERICAL):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.exit_code = exit_code


_VALIDATION_ERRORS = (ConfigError, ArtifactError, ProfileError, PlanError, GeometryError, DegenerateGradientError, FileNotFoundError)
_NUMERICAL_ERRORS = (SamplingError, ArithmeticError, FloatingPointError, RuntimeError, np.linalg.LinAlgError)


def _tag(stage: str, exc: BaseException) -> StageError:
    if isinstance(exc, StageError):
        return exc
    if isinstance(exc, _VALIDATION_ERRORS):
        code = EXIT_VALIDATION
    elif isinstance(exc, _NUMERICAL_ERRORS):
        code = EXIT_NUMERICAL
    elif isinstance(exc, ValueError):
        code = EXIT_VALIDATION
    else:
        code = EXIT_NUMERICAL
    err = StageError(stage, f"{type(exc).__name__}: {exc}", code)
    err.__cause__ = exc
    return err


# -- configuration ---------------------------------------------------------------


def parse_snr_range(text: str) -> tuple[float, float, float]:
    """``start:stop:step`` in dB."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ConfigError(f"SNR range must look like start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"SNR range must be numeric, got {text!r}") from None
    if not (start < stop and step > 0):
        raise ConfigError(f"SNR range needs start < stop and step > 0, got {text!r}")
    return start, stop, step


@dataclass(frozen=True)
class CampaignConfig:
    """Campaign settings; keys follow the simulation-parameter symbols, SI units.

    Defaults are the full-scale link (N=1024, 0.25 mm spacing, 70 m from 20 m
    depth, ten screens) on the packaged synthetic profile.
    """

    profile: str = BUILTIN_PREFIX + "synthetic_pacific"
    N: int = 1024
    delta1: float = 0.25e-3
    delta2: float = 0.25e-3
    wavelength: float = 532e-9
    w0: float = 0.03
    D_a: float = 0.10
    d_T: float = 20.0
    d_L: float = 70.0
    N_p: int = 10
    epsilon: float = 1e-5
    K_T: float = 1e-5
    beta0: float = 0.72
    realizations: int = 2000
    seed: int = 0
    subharmonic_levels: int = 3
    sampling: str = "aperture"
    absorber: bool = True
    models: tuple[str, ...] = ALL_FAMILIES
    snr_db: tuple[float, float, float] = (0.0, 50.0, 1.0)
    n_bins: int = 0
    workers: int = 1
    output_dir: str = "campaign_out"

    # keys that do not change any emitted artifact
    _NON_SEMANTIC = ("workers", "output_dir")

    def __post_init__(self):
        for name in ("delta1", "delta2", "wavelength", "w0", "D_a", "d_L", "epsilon", "K_T", "beta0"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        if not (math.isfinite(self.d_T) and self.d_T >= 0):
            raise ConfigError(f"d_T must be >= 0, got {self.d_T!r}")
        for name in ("N", "N_p", "realizations", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.subharmonic_levels < 0 or self.n_bins < 0:
            raise ConfigError("subharmonic_levels and n_bins must be >= 0")
        if self.sampling not in ("aperture", "pixel"):
            raise ConfigError(f"sampling must be 'aperture' or 'pixel', got {self.sampling!r}")
        unknown = [m for m in self.models if m not in ALL_FAMILIES]
        if unknown:
            raise ConfigError(f"unknown models {unknown}; choose from {', '.join(ALL_FAMILIES)}")

    @classmethod
    def from_text(cls, text: str, base_dir: str | Path | None = None) -> "CampaignConfig":
        values: dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            values[key] = val
        cfg = cls.from_mapping(values)
        if base_dir is not None and not cfg.profile.startswith(BUILTIN_PREFIX) and not Path(cfg.profile).is_absolute():
            cfg = replace(cfg, profile=str(Path(base_dir) / cfg.profile))
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "CampaignConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text, base_dir=path.parent)

    @classmethod
    def from_mapping(cls, values: dict) -> "CampaignConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, val in values.items():
            if key not in known or key.startswith("_"):
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, known[key].type, val)
        return cls(**kwargs)

    def to_text(self, *, semantic_only: bool = False) -> str:
        lines = []
        for f in fields(self):
            if semantic_only and f.name in self._NON_SEMANTIC:
                continue
            v = getattr(self, f.name)
            if f.name == "models":
                v = ",".join(v)
            elif f.name == "snr_db":
                v = ":".join(repr(float(x)) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text(semantic_only=True).encode()).hexdigest()


def _coerce(key: str, typ, val):
    if not isinstance(val, str):
        if key == "models":
            return tuple(val)
        if key == "snr_db":
            return tuple(float(v) for v in val)
        return val
    try:
        if key in ("N", "N_p", "realizations", "seed", "subharmonic_levels", "n_bins", "workers"):
            return int(val)
        if key == "absorber":
            low = val.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(val)
            return low in ("true", "1", "yes")
        if key == "models":
            return tuple(m.strip() for m in val.split(",") if m.strip())
        if key == "snr_db":
            return parse_snr_range(val)
        if key in ("profile", "sampling", "output_dir"):
            return val
        return float(val)
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"bad value for {key}: {val!r}") from None


def resolve_profile_path(spec: str) -> Path:
    if spec.startswith(BUILTIN_PREFIX):
        name = spec[len(BUILTIN_PREFIX) :]
        path = Path(str(resources.files("uwocsim") / "data" / "profiles" / f"{name}.csv"))
        if not path.exists():
            raise ConfigError(f"no built-in profile named {name!r}")
        return path
    return Path(spec)


# -- simulation -------------------------------------------------------------------


@dataclass
class SimulationContext:
    """Everything a realization needs; realization-independent parts are built once."""

    config: CampaignConfig
    grid: GridSpec
    plan: PropagationPlan
    psds: list[PhasePSD]
    screen_spacings: tuple[float, ...]
    receiver: ReceiverSpec
    w0: float


def build_context(cfg: CampaignConfig) -> SimulationContext:
    profile = load_profile(resolve_profile_path(cfg.profile))
    lo, hi = profile.span
    if not (lo <= cfg.d_T and cfg.d_T + cfg.d_L <= hi):
        raise ConfigError(f"profile spans [{lo}, {hi}] m but the link needs [{cfg.d_T}, {cfg.d_T + cfg.d_L}] m")
    grid = GridSpec.for_beam(cfg.N, cfg.delta1, cfg.wavelength, cfg.w0, cfg.delta2)
    plan = plan_screens(grid, cfg.d_T, cfg.d_L, cfg.N_p)
    psds = []
    for z, dd in zip(plan.screen_depths, plan.step_lengths):
        layer = layer_params(profile, z, cfg.epsilon, cfg.K_T, wavelength=cfg.wavelength, beta0=cfg.beta0)
        psds.append(PhasePSD(SpectrumParams(layer, cfg.beta0), cfg.wavelength, dd))
    return SimulationContext(cfg, grid, plan, psds, plan.screen_spacings(), ReceiverSpec(cfg.D_a), cfg.w0)


def simulate_realization(ctx: SimulationContext, realization: int) -> np.ndarray:
    """Received samples of one realization: one aperture power, or per-pixel powers."""
    cfg = ctx.config
    screens = [
        generate_screen(
            ctx.grid,
            psd,
            (cfg.seed, realization, p),
            cfg.subharmonic_levels,
            spacing=spacing,
            depth=z,
        )
        for p, (psd, spacing, z) in enumerate(zip(ctx.psds, ctx.screen_spacings, ctx.plan.screen_depths), start=1)
    ]
    source = gaussian_source(ctx.grid, ctx.w0, cfg.d_T)
    field_out = propagate_link(source, ctx.plan, screens, absorber=cfg.absorber)
    if cfg.sampling == "aperture":
        return np.array([receive(field_out, ctx.receiver, realization).received_power])
    mask = aperture_mask(field_out.n_points, field_out.spacing, ctx.receiver)
    return field_out.intensity[mask] * field_out.spacing**2


_WORKER_CTX: SimulationContext | None = None


def _init_worker(cfg: CampaignConfig) -> None:
    global _WORKER_CTX
    _WORKER_CTX = build_context(cfg)


def _worker_realization(r: int) -> np.ndarray:
    return simulate_realization(_WORKER_CTX, r)


def simulate(cfg: CampaignConfig, ctx: SimulationContext | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Run every realization; returns (realization index per sample, received power)."""
    ctx = ctx or build_context(cfg)
    idx = range(cfg.realizations)
    if cfg.workers > 1 and cfg.realizations > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers, initializer=_init_worker, initargs=(cfg,)) as pool:
            chunks = list(pool.map(_worker_realization, idx, chunksize=max(1, cfg.realizations // (4 * cfg.workers))))
    else:
        chunks = [simulate_realization(ctx, r) for r in idx]
    which = np.concatenate([np.full(c.size, r) for r, c in zip(idx, chunks)])
    return which, np.concatenate(chunks)


# -- artifacts ----------------------------------------------------------------------


def write_samples(path: str | Path, realization: np.ndarray, power: np.ndarray) -> SampleSet:
    samples = SampleSet.from_powers(power)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["realization", "received_power", "normalized_intensity"])
        for r, pw, x in zip(realization.tolist(), power.tolist(), samples.intensities.tolist()):
            w.writerow([r, repr(pw), repr(x)])
    return samples


def read_samples(path: str | Path) -> SampleSet:
    """Load a sample CSV; ``received_power`` is renormalized, else ``normalized_intensity`` is used."""
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"sample file {path} not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if "received_power" in cols:
            key = "received_power"
        elif "normalized_intensity" in cols:
            key = "normalized_intensity"
        else:
            raise ArtifactError(f"{path}: needs a received_power or normalized_intensity column, found {cols}")
        try:
            vals = [float(row[key]) for row in reader]
        except (TypeError, ValueError) as exc:
            raise ArtifactError(f"{path}: non-numeric {key} value ({exc})") from None
    if not vals:
        raise ArtifactError(f"{path}: no samples")
    try:
        return SampleSet.from_powers(vals)
    except ValueError as exc:
        raise ArtifactError(f"{path}: {exc}") from None


def write_histogram(path: str | Path, hist: Histogram) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "density"])
        for lo, hi, f in zip(hist.edges[:-1].tolist(), hist.edges[1:].tolist(), hist.densities.tolist()):
            w.writerow([repr(lo), repr(hi), repr(f)])


def read_histogram(path: str | Path) -> Histogram:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ArtifactError(f"{path}: empty histogram")
    edges = [float(rows[0]["bin_left"])] + [float(r["bin_right"]) for r in rows]
    return Histogram(np.array(edges), np.array([float(r["density"]) for r in rows]))


def _sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_report(path: str | Path) -> FitReport:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"fit report {path} not found")
    try:
        return FitReport.read_json(path)
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"{path}: not a valid fit report ({exc})") from None


def wgg_from_report(report: FitReport) -> WGGParams:
    fit = report.fits.get("WGG")
    if fit is None or fit.params is None:
        raise ArtifactError("fit report has no WGG record; run the fit stage with the WGG model")
    if not fit.converged:
        raise ArtifactError(f"fit report's WGG record did not converge ({fit.message})")
    return fit.params


# -- stages -------------------------------------------------------------------------


def stage_plan(cfg: CampaignConfig, out_dir: str | Path) -> PropagationPlan:
    try:
        grid = GridSpec.for_beam(cfg.N, cfg.delta1, cfg.wavelength, cfg.w0, cfg.delta2)
        plan = plan_screens(grid, cfg.d_T, cfg.d_L, cfg.N_p)
    except Exception as exc:
        raise _tag("plan", exc) from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / PLAN_FILE).write_text(plan.report())
    return plan


def stage_simulate(cfg: CampaignConfig, out_dir: str | Path) -> SampleSet:
    try:
        which, power = simulate(cfg)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return write_samples(out / SAMPLES_FILE, which, power)
    except Exception as exc:
        raise _tag("simulate", exc) from exc


def stage_fit(samples_path: str | Path, out_dir: str | Path, models=ALL_FAMILIES, *, seed: int = 0) -> FitReport:
    """Fit every requested model; GoF columns stay empty until :func:`stage_gof`."""
    try:
        samples = read_samples(samples_path)
        prov = {"samples_sha256": _sha256(samples_path), "fit_seed": int(seed), "code_version": __version__}
        report = fit_all(samples, models, seed=seed, provenance=prov, score=False)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.to_json(out / REPORT_FILE)
        return report
    except Exception as exc:
        raise _tag("fit", exc) from exc


def stage_gof(samples_path: str | Path, report_path: str | Path, out_dir: str | Path, *, n_bins: int = 0) -> tuple[Histogram, FitReport]:
    try:
        samples = read_samples(samples_path)
        report = read_report(report_path)
        if report.n_samples != samples.count:
            raise ArtifactError(f"fit report covers {report.n_samples} samples but {samples_path} holds {samples.count}")
        hist = make_histogram(samples, n_bins or None)
        for fit in report.fits.values():
            score_fit(fit, samples, hist)
        report.n_bins = hist.n_bins
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_histogram(out / HISTOGRAM_FILE, hist)
        report.to_json(out / REPORT_FILE)
        return hist, report
    except Exception as exc:
        raise _tag("gof", exc) from exc


def stage_ber(report_path: str | Path, out_dir: str | Path, snr_db=(0.0, 50.0, 1.0), *, workers: int = 1) -> BERCurve:
    try:
        params = wgg_from_report(read_report(report_path))
        curve = ber_curve(params, tuple(snr_db), workers=workers)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        curve.to_csv(out / BER_FILE)
        return curve
    except Exception as exc:
        raise _tag("ber", exc) from exc


# -- full campaign ---------------------------------------------------------------------


@dataclass
class CampaignResult:
    samples: SampleSet
    histogram: Histogram | None
    report: FitReport
    curves: dict[str, BERCurve]
    provenance: dict
    output_dir: Path
    files: list[Path] = field(default_factory=list)


def provenance_block(cfg: CampaignConfig, skipped: list[str]) -> dict:
    return {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "code_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "skipped_stages": skipped,
        "config": cfg.to_text(semantic_only=True),
    }


def run_campaign(cfg: CampaignConfig, out_dir: str | Path | None = None) -> CampaignResult:
    """plan -> simulate -> fit -> gof -> ber, removing this run's outputs on failure.

    With too few samples for fitting, the report comes back with every model
    flagged and the BER stage is skipped (noted in the provenance block).
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    existed = out.exists()
    out.mkdir(parents=True, exist_ok=True)
    before = set(out.iterdir())
    skipped: list[str] = []
    try:
        stage_plan(cfg, out)
        samples = stage_simulate(cfg, out)
        stage_fit(out / SAMPLES_FILE, out, cfg.models, seed=cfg.seed)
        hist, report = stage_gof(out / SAMPLES_FILE, out / REPORT_FILE, out, n_bins=cfg.n_bins)
        curves: dict[str, BERCurve] = {}
        wgg = report.fits.get("WGG")
        if wgg is not None and wgg.params is not None and wgg.converged:
            curves["WGG"] = stage_ber(out / REPORT_FILE, out, cfg.snr_db, workers=cfg.workers)
        else:
            skipped.append("ber: no converged WGG fit")
        prov = provenance_block(cfg, skipped)
        (out / PROVENANCE_FILE).write_text(json.dumps(prov, indent=2) + "\n")
    except BaseException as exc:
        for p in set(out.iterdir()) - before:
            if p.is_file():
                p.unlink()
        if not existed:
            try:
                out.rmdir()
            except OSError:
                pass
        if isinstance(exc, Exception):
            raise _tag("campaign", exc) from exc
        raise
    files = sorted(set(out.iterdir()) - before) or sorted(out.iterdir())
    return CampaignResult(samples, hist, report, curves, prov, out, files)


def config_dict(cfg: CampaignConfig) -> dict:
    d = asdict(cfg)
    d["models"] = list(cfg.models)
    d["snr_db"] = list(cfg.snr_db)
    return d


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1))
