"""Maximum-likelihood fitting of every fading family and the per-model report."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, special

from .distributions import (
    ALL_FAMILIES,
    GG,
    Gamma,
    LogNormal,
    Weibull,
    family_class,
    param_dict,
    params_from_values,
)
from .em import FitWarning, em_fit_egg, em_fit_wgg, fit_gg_ml, fit_weibull_ml
from .gof import Histogram, SampleSet, make_histogram, mse, r_squared

MIN_FIT_SAMPLES = 100


@dataclass
class ModelFit:
    """Outcome of fitting one family; ``params`` is ``None`` when the fit failed."""

    family: str
    params: object | None
    loglik: float = math.nan
    n_iter: int = 0
    converged: bool = False
    flagged: bool = False
    message: str = ""
    r2: float = math.nan
    mse: float = math.nan
    trace: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": None if self.params is None else param_dict(self.params),
            "loglik": _json_float(self.loglik),
            "r2": _json_float(self.r2),
            "mse": _json_float(self.mse),
            "n_iter": self.n_iter,
            "converged": self.converged,
            "flagged": self.flagged,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelFit":
        params = None
        if d.get("params") is not None:
            params = params_from_values(d["family"], list(d["params"].values()))
        return cls(
            family=d["family"],
            params=params,
            loglik=_from_json_float(d.get("loglik")),
            n_iter=int(d.get("n_iter", 0)),
            converged=bool(d.get("converged", False)),
            flagged=bool(d.get("flagged", False)),
            message=d.get("message", ""),
            r2=_from_json_float(d.get("r2")),
            mse=_from_json_float(d.get("mse")),
        )


def _json_float(v: float):
    return None if v is None or not math.isfinite(v) else float(v)


def _from_json_float(v) -> float:
    return math.nan if v is None else float(v)


def _failed(family: str, message: str) -> ModelFit:
    return ModelFit(family, None, flagged=True, message=message)


def _loglik(params, x: np.ndarray) -> float:
    with np.errstate(all="ignore"):
        v = float(np.sum(params.logpdf(x)))
    return v if not math.isnan(v) else -math.inf


def _nelder_mead(family: str, x: np.ndarray, start) -> ModelFit:
    """Derivative-free ML refinement in log-parameter space."""
    cls = family_class(family)
    n = x.size

    def nll(u):
        try:
            p = cls(*np.exp(u))
        except ValueError:
            return math.inf
        ll = _loglik(p, x)
        return -ll / n if math.isfinite(ll) else math.inf

    u0 = np.log(np.asarray(start, dtype=float))
    res = optimize.minimize(nll, u0, method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-13, "maxiter": 6000, "maxfev": 12000})
    if not math.isfinite(res.fun):
        return _failed(family, "likelihood is not finite near the moment estimate")
    params = cls(*np.exp(res.x))
    return ModelFit(family, params, _loglik(params, x), int(res.nit), bool(res.success), not res.success, str(res.message))


def _gamma_ml(x: np.ndarray) -> tuple[float, float]:
    s = math.log(float(np.mean(x))) - float(np.mean(np.log(x)))
    if not s > 0:
        raise RuntimeError("Gamma ML needs non-constant data")
    k0 = (3 - s + math.sqrt((s - 3) ** 2 + 24 * s)) / (12 * s)

    def f(lk):
        k = math.exp(lk)
        return math.log(k) - special.digamma(k) - s

    lo, hi = math.log(k0) - 1, math.log(k0) + 1
    while f(lo) < 0:
        lo -= 1
    while f(hi) > 0:
        hi += 1
    k = math.exp(optimize.brentq(f, lo, hi, xtol=1e-14))
    return k, float(np.mean(x)) / k


def _si(x: np.ndarray) -> float:
    return float(np.var(x) / np.mean(x) ** 2)


def _fit_family(family: str, x: np.ndarray, seed: int) -> ModelFit:
    if family == "LogNormal":
        lx = np.log(x)
        p = LogNormal(float(np.mean(lx)) / 2, float(np.var(lx)) / 4)
        return ModelFit(family, p, _loglik(p, x), 0, True, message="closed-form ML")
    if family == "Gamma":
        p = Gamma(*_gamma_ml(x))
        return ModelFit(family, p, _loglik(p, x), 0, True, message="ML by digamma root")
    if family == "Weibull":
        p = Weibull(*fit_weibull_ml(x))
        return ModelFit(family, p, _loglik(p, x), 0, True, message="ML by profile root")
    if family == "GG":
        p = GG(*fit_gg_ml(x))
        return ModelFit(family, p, _loglik(p, x), 0, True, message="ML by profile root")
    if family == "K":
        si = _si(x)
        a0 = 2 / (si - 1) if si > 1.02 else 100.0
        fit = _nelder_mead(family, x, (a0,))
        return fit
    if family == "EW":
        b, e = fit_weibull_ml(x)
        return _nelder_mead(family, x, (1.0, b, e))
    if family == "GammaGamma":
        # equal shapes: SI = 2/a + 1/a^2
        si = max(_si(x), 1e-6)
        a0 = (1 + math.sqrt(1 + si)) / si
        k, _ = _gamma_ml(x)
        # the second start sits near the Gamma(k) limit (other shape -> infinity)
        fits = [_nelder_mead(family, x, s) for s in ((1.5 * a0, a0 / 1.5), (k, 1e3 * k))]
        return max(fits, key=lambda f: f.loglik if f.params is not None else -math.inf)
    if family == "EGG":
        res = em_fit_egg(x, seed=seed)
        return ModelFit(family, res.params, res.loglik, res.n_iter, res.converged, not res.converged, res.message, trace=res.trace)
    if family == "WGG":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", FitWarning)
            res = em_fit_wgg(x, seed=seed)
        notes = [str(w.message) for w in caught if issubclass(w.category, FitWarning)]
        msg = "; ".join([res.message] + notes)
        return ModelFit(family, res.params, res.loglik, res.n_iter, res.converged, not res.converged or bool(notes), msg, trace=res.trace)
    raise ValueError(f"unknown family {family!r}; choose from {', '.join(ALL_FAMILIES)}")


def fit_baseline(samples: SampleSet | np.ndarray, family: str, *, seed: int = 0) -> ModelFit:
    """Maximum-likelihood fit of one family; failures come back flagged, not raised.

    Zero intensities are dropped (every family except the Weibull and GG
    with small shapes puts zero density there) and counted in the message.
    """
    family_class(family)  # validates the tag
    x = np.asarray(getattr(samples, "intensities", samples), dtype=float)
    if x.size < MIN_FIT_SAMPLES:
        return _failed(family, f"insufficient data: {x.size} samples, need {MIN_FIT_SAMPLES}")
    pos = x[x > 0]
    dropped = x.size - pos.size
    if pos.size < MIN_FIT_SAMPLES:
        return _failed(family, "insufficient positive samples")
    if float(np.ptp(pos)) <= 1e-12 * float(np.max(pos)):
        return _failed(family, "optimizer failure: zero-variance data have no ML fit")
    try:
        with np.errstate(all="ignore"):
            fit = _fit_family(family, pos, seed)
    except (RuntimeError, ValueError, FloatingPointError, ZeroDivisionError, OverflowError) as exc:
        return _failed(family, f"optimizer failure: {exc}")
    if fit.params is not None and not math.isfinite(fit.loglik):
        fit.flagged = True
        fit.message += "; non-finite log-likelihood"
    if dropped:
        fit.message += f"; {dropped} zero samples dropped"
    return fit


fit_model = fit_baseline


@dataclass
class FitReport:
    """Per-model parameters, log-likelihood, R^2, MSE, iterations and flags."""

    n_samples: int
    n_bins: int
    fits: dict[str, ModelFit]
    provenance: dict = field(default_factory=dict)

    def best(self, by: str = "r2") -> str | None:
        ok = {k: f for k, f in self.fits.items() if f.params is not None and math.isfinite(getattr(f, by))}
        if not ok:
            return None
        key = (lambda k: ok[k].r2) if by == "r2" else (lambda k: -getattr(ok[k], by))
        return max(ok, key=key)

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_bins": self.n_bins,
            "provenance": self.provenance,
            "models": [f.to_dict() for f in self.fits.values()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitReport":
        fits = {m["family"]: ModelFit.from_dict(m) for m in d["models"]}
        return cls(int(d["n_samples"]), int(d["n_bins"]), fits, dict(d.get("provenance", {})))

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def read_json(cls, path: str | Path) -> "FitReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def table(self) -> str:
        rows = [f"{'model':<11}{'loglik':>16}{'R2':>10}{'MSE':>12}{'iter':>7}  flags"]
        for name, f in self.fits.items():
            flag = "FAILED" if f.params is None else ("flagged" if f.flagged else "")
            rows.append(f"{name:<11}{f.loglik:>16.4f}{f.r2:>10.4f}{f.mse:>12.3e}{f.n_iter:>7d}  {flag}")
        return "\n".join(rows) + "\n"


def score_fit(fit: ModelFit, samples: SampleSet | np.ndarray, hist: Histogram) -> ModelFit:
    """Fill in R^2 against ``hist`` and MSE against the samples' empirical CDF."""
    if fit.params is None:
        return fit
    with np.errstate(all="ignore"):
        try:
            fit.r2 = r_squared(hist, fit.params.pdf)
        except ValueError as exc:
            fit.message += f"; R2 undefined: {exc}"
        try:
            fit.mse = mse(samples, fit.params.cdf)
        except ValueError as exc:
            fit.message += f"; MSE undefined: {exc}"
    return fit


def fit_all(
    samples: SampleSet | np.ndarray,
    models=ALL_FAMILIES,
    *,
    n_bins: int | None = None,
    seed: int = 0,
    provenance: dict | None = None,
    score: bool = True,
) -> FitReport:
    """Fit every requested family on one sample set, with R^2 and MSE unless ``score`` is off."""
    if not isinstance(samples, SampleSet):
        samples = SampleSet.from_powers(samples)
    fits: dict[str, ModelFit] = {}
    hist = None
    if score and samples.count >= 2 and samples.intensities.max() > 0:
        hist = make_histogram(samples, n_bins)
    for name in models:
        fit = fit_baseline(samples, name, seed=seed)
        if hist is not None:
            score_fit(fit, samples, hist)
        fits[name] = fit
    return FitReport(samples.count, 0 if hist is None else hist.n_bins, fits, dict(provenance or {}))
