"""Average bit-error rate of an OOK IM/DD link under WGG fading.

SNR convention: ``snr`` is the linear turbulence-free SNR; decibel values
convert as ``snr = 10**(dB/20)`` because the SNR multiplies the intensity
inside the erfc argument (an amplitude-like ratio).

Both mixture components enter through E[erfc(a4 X)] with a4 = snr/(2*sqrt(2)),
so the average BER is varpi/2 * E_Weibull + (1-varpi)/2 * E_GG. Writing the
component density as proportional to x^(a1-1) exp(-(x/s0)^a3), with
s = a4*s0 (passed around as log s so extreme fitted scales do not underflow), the expectation has three series forms:

* a3 > 2: expand erfc in powers of x;
  E = 1 - s/(sqrt(pi) G(a1/a3)) sum_t (-1)^t G((2t+a1+1)/a3) / ((t+1/2) t!) s^(2t)
* a3 < 2: expand the exponential;
  E = a3 s^-a1/(sqrt(pi) G(a1/a3)) sum_t G((a3 t+a1+1)/2) / ((a3 t+a1) t!) (-s^-a3)^t
* a3 = 2: E = 1 - 2 s G(b)/(sqrt(pi) G(a1/2)) 2F1(1/2, b; 3/2; -s^2), b = (a1+1)/2,
  which reduces to 1 - s/sqrt(1+s^2) when a1 = 2.

Series whose terms grow too large relative to the sum lose precision to
cancellation. A point falls back to quadrature (flagged) when the largest
term exceeds 1e6 times the sum, or when the rounding bound
TERM_ROUNDING * sum|terms| is not below 1e-8 of the value.
"""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, special

from .fading.distributions import WGGParams

SHAPE_TWO_TOL = 1e-9
SERIES_RTOL = 1e-12
SERIES_MAX_TERMS = 500
GROWTH_LIMIT = 1e6
# each term carries a relative error of roughly this size (exp of a gammaln sum)
TERM_ROUNDING = 1e-13
SERIES_REL_ACCURACY = 1e-8
QUAD_EPSABS = 1e-12
_SQRT_PI = math.sqrt(math.pi)
_LOG_GROWTH = math.log(GROWTH_LIMIT)


class SeriesFallback(ArithmeticError):
    """The series for one component cannot be summed to working precision."""


class QuadratureWarning(UserWarning):
    pass


def db_to_linear(snr_db):
    return 10.0 ** (np.asarray(snr_db, dtype=float) / 20.0)


def linear_to_db(snr):
    return 20.0 * np.log10(snr)


@dataclass(frozen=True)
class BERQuery:
    snr: float
    params: WGGParams

    def __post_init__(self):
        if not (math.isfinite(self.snr) and self.snr > 0):
            raise ValueError(f"SNR must be a positive linear value, got {self.snr}")
        if not isinstance(self.params, WGGParams):
            raise TypeError("params must be WGGParams")

    @classmethod
    def from_db(cls, snr_db: float, params: WGGParams) -> "BERQuery":
        return cls(float(db_to_linear(snr_db)), params)


@dataclass(frozen=True)
class BERPoint:
    value: float
    method: str
    flagged: bool = False
    error_estimate: float = 0.0
    message: str = ""


def conditional_ber(snr: float, I):
    """(1/2) erfc(snr*I / (2*sqrt(2)))."""
    if not snr > 0:
        raise ValueError("snr must be positive")
    I = np.asarray(I, dtype=float)
    if np.any(I < 0):
        raise ValueError("intensity must be >= 0")
    v = 0.5 * special.erfc(snr * I / (2 * math.sqrt(2)))
    return float(v) if v.ndim == 0 else v


# -- series -------------------------------------------------------------------


def _fsum_terms(log_mag, sign_of_t) -> tuple[float, float]:
    """Sum sign(t)*exp(log_mag(t)) with the stopping and growth rules.

    Returns the sum and the sum of magnitudes (for the rounding-error bound).
    """
    terms = []
    largest = -math.inf
    prev = math.inf
    for t in range(SERIES_MAX_TERMS):
        lm = log_mag(t)
        if lm > 700:
            raise SeriesFallback(f"term {t} overflows (log magnitude {lm:.1f})")
        largest = max(largest, lm)
        mag = math.exp(lm)
        terms.append(sign_of_t(t) * mag)
        partial = math.fsum(terms)
        if mag <= prev and mag < SERIES_RTOL * abs(partial):
            break
        prev = mag
    else:
        raise SeriesFallback(f"no convergence within {SERIES_MAX_TERMS} terms")
    if partial == 0 or largest - math.log(abs(partial)) > _LOG_GROWTH:
        raise SeriesFallback("largest term exceeds 1e6 times the sum")
    return partial, math.fsum(abs(v) for v in terms)


def _checked(value: float, abs_bound: float) -> float:
    """Reject a series value whose rounding bound is not small relative to it."""
    if not math.isfinite(value) or TERM_ROUNDING * abs_bound > SERIES_REL_ACCURACY * abs(value):
        raise SeriesFallback("cancellation leaves too few significant digits")
    return value


def erfc_expectation_series(a1: float, a3: float, log_s: float) -> float:
    """E[erfc(a4 X)] for X with density prop. to x^(a1-1) exp(-(x/s0)^a3), log_s = log(a4*s0).

    Raises :class:`SeriesFallback` when the series cannot be evaluated reliably.
    """
    if not (a1 > 0 and a3 > 0 and math.isfinite(log_s)):
        raise ValueError("a1, a3 must be positive and log_s finite")
    lg0 = special.gammaln(a1 / a3)
    ls = log_s
    if abs(a3 - 2) < SHAPE_TWO_TOL:
        if abs(ls) > 300:
            raise SeriesFallback("scale outside the double range of the 2F1 form")
        s = math.exp(ls)
        b = (a1 + 1) / 2
        z = s * s
        if abs(a1 - 2) < SHAPE_TWO_TOL:
            # 2F1(1/2, b; 3/2; -z) with b = 3/2 is (1+z)^(-1/2); also G(b)/G(1) = sqrt(pi)/2
            r = math.sqrt(1.0 + z)
            return 1.0 / (r * (r + s))  # 1 - s/r without cancellation
        f = float(special.hyp2f1(0.5, b, 1.5, -z))
        if not math.isfinite(f):
            raise SeriesFallback("2F1 evaluation failed")
        coef = 2 * s * math.exp(special.gammaln(b) - special.gammaln(a1 / 2)) / _SQRT_PI
        return 1.0 - coef * f
    if a3 > 2:
        total, mags = _fsum_terms(
            lambda t: special.gammaln((2 * t + a1 + 1) / a3) - math.log(t + 0.5) - special.gammaln(t + 1) + 2 * t * ls,
            lambda t: -1.0 if t % 2 else 1.0,
        )
        coef = math.exp(ls - lg0) / _SQRT_PI
        return _checked(1.0 - coef * total, 1.0 + coef * mags)
    lu = -a3 * ls
    total, mags = _fsum_terms(
        lambda t: special.gammaln((a3 * t + a1 + 1) / 2) - math.log(a3 * t + a1) - special.gammaln(t + 1) + t * lu,
        lambda t: -1.0 if t % 2 else 1.0,
    )
    coef = math.exp(math.log(a3) - a1 * ls - lg0) / _SQRT_PI
    return _checked(coef * total, coef * mags)


def _a4(snr: float) -> float:
    return snr / (2 * math.sqrt(2))


def average_ber_series(query: BERQuery, *, full_output: bool = False):
    """Closed-form series average BER; falls back to quadrature (flagged) when unreliable."""
    p, a4 = query.params, _a4(query.snr)
    try:
        e1 = erfc_expectation_series(p.beta, p.beta, math.log(a4) + math.log(p.eta))
        e2 = erfc_expectation_series(p.d, p.p, math.log(a4) + math.log(p.a))
    except SeriesFallback as exc:
        q = average_ber_quadrature(query, full_output=True)
        point = BERPoint(q.value, "quadrature", True, q.error_estimate, f"series fallback: {exc}")
        return point if full_output else point.value
    value = 0.5 * p.varpi * e1 + 0.5 * (1 - p.varpi) * e2
    point = BERPoint(value, "series")
    return point if full_output else value


# -- quadrature ----------------------------------------------------------------

_QUANTILES = (1e-12, 1e-8, 1e-4, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 1 - 1e-4, 1 - 1e-8, 1 - 1e-12)
_ERFC_SCALES = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


def _log_gamma_mode_const(k: float) -> float:
    """k log k - k - log Gamma(k), using Stirling's series where direct evaluation cancels."""
    if k < 1e5:
        return k * math.log(k) - k - float(special.gammaln(k))
    return 0.5 * math.log(k / (2 * math.pi)) - 1 / (12 * k) + 1 / (360 * k**3) - 1 / (1260 * k**5)


def erfc_expectation_quad(a1: float, a3: float, log_s: float) -> tuple[float, float]:
    """E[erfc(a4 X)] by adaptive quadrature; returns (value, error estimate).

    X has density prop. to x^(a1-1) exp(-(x/s0)^a3) and ``log_s = log(a4*s0)``.
    With k = a1/a3, V = (X/s0)^a3 is Gamma(k, 1); the integral runs over
    y = log(V/k), where the density exp(-k (e^y - 1 - y) + k log k - k - log G(k))
    stays finite and well scaled for any shape, including the near-degenerate
    ones a maximum-likelihood fit can produce. The range is split at
    quantiles of V and where a4*X = O(1).
    """
    if not (a1 > 0 and a3 > 0 and math.isfinite(log_s)):
        raise ValueError("a1, a3 must be positive and log_s finite")
    k = a1 / a3
    lk = math.log(k)
    dk = _log_gamma_mode_const(k)

    def f(y):
        with np.errstate(over="ignore", under="ignore"):
            arg = math.exp(min(log_s + (lk + y) / a3, 700.0))
            dens = math.exp(-k * (math.expm1(y) - y) + dk) if y < 700 else 0.0
        return special.erfc(arg) * dens

    with np.errstate(divide="ignore"):
        yq = np.log(special.gammaincinv(k, np.array(_QUANTILES))) - lk
    ys = a3 * (np.log(np.array(_ERFC_SCALES)) - log_s) - lk
    pts = np.unique(np.concatenate(([0.0], yq, ys)))
    pts = pts[np.isfinite(pts)]
    lo_q, hi_q = yq[np.isfinite(yq)].min(initial=-50.0), yq[np.isfinite(yq)].max(initial=5.0)
    # erfc scale points far outside the distribution's support only slow quad down
    pts = pts[(pts >= lo_q - 50) & (pts <= hi_q + 50)]
    pieces, errs = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        v, e = integrate.quad(f, -np.inf, pts[0], epsabs=0.0, epsrel=1e-12, limit=200)
        pieces.append(v)
        errs.append(e)
        for lo, hi in zip(pts[:-1], pts[1:]):
            v, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)
            pieces.append(v)
            errs.append(e)
        v, e = integrate.quad(f, pts[-1], np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    pieces.append(v)
    errs.append(e)
    return math.fsum(pieces), math.fsum(errs)


def average_ber_quadrature(query: BERQuery, *, full_output: bool = False):
    """Adaptive quadrature of (1/2) erfc(a4 I) f_WGG(I) over (0, inf), component by component.

    A :class:`QuadratureWarning` reports the achieved error estimate if it
    exceeds the 1e-12 absolute target.
    """
    p, a4 = query.params, _a4(query.snr)
    e1, r1 = erfc_expectation_quad(p.beta, p.beta, math.log(a4) + math.log(p.eta))
    e2, r2 = erfc_expectation_quad(p.d, p.p, math.log(a4) + math.log(p.a))
    value = 0.5 * p.varpi * e1 + 0.5 * (1 - p.varpi) * e2
    err = 0.5 * p.varpi * r1 + 0.5 * (1 - p.varpi) * r2
    msg = ""
    if err > QUAD_EPSABS:
        msg = f"quadrature error estimate {err:.2e} exceeds {QUAD_EPSABS:.0e}"
        warnings.warn(msg, QuadratureWarning, stacklevel=2)
    point = BERPoint(value, "quadrature", err > QUAD_EPSABS, err, msg)
    return point if full_output else value


def average_ber(query: BERQuery, method: str = "series") -> BERPoint:
    if method == "series":
        return average_ber_series(query, full_output=True)
    if method == "quadrature":
        return average_ber_quadrature(query, full_output=True)
    raise ValueError(f"unknown BER method {method!r}")


# -- curves --------------------------------------------------------------------


@dataclass
class BERCurve:
    snr_db: np.ndarray
    average_ber: np.ndarray
    methods: list[str]
    flagged: list[bool] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.snr_db)

    def rows(self):
        return zip(self.snr_db.tolist(), self.average_ber.tolist(), self.methods)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["snr_db", "average_ber", "method"])
            for s, b, m in self.rows():
                w.writerow([repr(float(s)), repr(float(b)), m])

    @classmethod
    def read_csv(cls, path: str | Path) -> "BERCurve":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(
            np.array([float(r["snr_db"]) for r in rows]),
            np.array([float(r["average_ber"]) for r in rows]),
            [r["method"] for r in rows],
        )


def snr_grid(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive dB grid start, start+step, ..., stop."""
    if not start < stop:
        raise ValueError("SNR range needs start < stop")
    if not step > 0:
        raise ValueError("SNR step must be positive")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def ber_curve(params: WGGParams, snr_db_range: tuple[float, float, float], *, method: str = "series", workers: int = 1) -> BERCurve:
    """Average BER over an inclusive dB grid; points run concurrently and come back in order."""
    grid = snr_grid(*snr_db_range)
    queries = [BERQuery.from_db(float(s), params) for s in grid]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pts = list(pool.map(lambda q: average_ber(q, method), queries))
    else:
        pts = [average_ber(q, method) for q in queries]
    return BERCurve(grid, np.array([p.value for p in pts]), [p.method for p in pts], [p.flagged for p in pts])
