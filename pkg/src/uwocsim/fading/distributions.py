"""Unit-support fading densities: the WGG mixture and the baseline families.

All intensities are normalized received intensities (unit mean). Forms:

* Weibull(beta, eta):   beta/eta (I/eta)^(beta-1) exp(-(I/eta)^beta)
* GG(a, d, p):          p I^(d-1) / (a^d Gamma(d/p)) exp(-(I/a)^p)
* WGG:                  varpi*Weibull + (1-varpi)*GG
* LogNormal(mu, s2):    log-amplitude convention I = exp(2X), X ~ N(mu, s2)
* Gamma(k, theta):      I^(k-1) exp(-I/theta) / (Gamma(k) theta^k)
* K(alpha):             2 alpha^((alpha+1)/2)/Gamma(alpha) I^((alpha-1)/2) K_(alpha-1)(2 sqrt(alpha I))
* EW(alpha, beta, eta): alpha * Weibull(beta, eta) * (1 - exp(-(I/eta)^beta))^(alpha-1)
* GammaGamma(alpha, beta): 2(ab)^((a+b)/2)/(G(a)G(b)) I^((a+b)/2-1) K_(a-b)(2 sqrt(ab I))
* EGG(omega, lam, a, d, p): omega*Exp(mean lam) + (1-omega)*GG
"""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields
from typing import ClassVar

import numpy as np
from scipy import integrate, special


def _arr(I):
    return np.asarray(I, dtype=float)


def _out(v, I):
    return float(v) if np.ndim(I) == 0 else v


def _positive(name: str, *vals: float) -> None:
    for v in vals:
        if not (np.isfinite(v) and v > 0):
            raise ValueError(f"{name}: parameters must be finite and > 0, got {vals}")


def log_besselk(nu: float, z):
    """log K_nu(z) for z > 0, with a large-order fallback where kve over/underflows.

    The fallback is the Debye expansion
    K_nu(nu t) ~ sqrt(pi/(2 nu)) exp(-nu eta) / (1+t^2)^(1/4) (1 - u1/nu + u2/nu^2),
    eta = sqrt(1+t^2) + log(t/(1+sqrt(1+t^2))); it is only reached for
    orders large enough that the O(nu^-3) remainder is negligible.
    """
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=float))
    nu = abs(float(nu))
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        out = np.log(special.kve(nu, z)) - z
        bad = ~np.isfinite(out) & (z > 0)
        if np.any(bad) and nu > 0:
            t = z[bad] / nu
            r = np.sqrt(1 + t * t)
            eta = r + np.log(t / (1 + r))
            q = 1 / r
            u1 = (3 * q - 5 * q**3) / 24
            u2 = (81 * q**2 - 462 * q**4 + 385 * q**6) / 1152
            series = 1 - u1 / nu + u2 / nu**2
            out[bad] = 0.5 * math.log(math.pi / (2 * nu)) - nu * eta - 0.5 * np.log(r) + np.log(series)
    return out[0] if scalar else out


# -- component densities (vectorized, log-space where it matters) ----------------


def weibull_logpdf(x, beta: float, eta: float):
    x = _arr(x)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = x / eta
        out = np.log(beta / eta) + (beta - 1) * np.log(z) - z**beta
    if beta == 1:
        out = np.where(x == 0, -np.log(eta), out)
    return out


def weibull_pdf(x, beta: float, eta: float):
    x = _arr(x)
    z = x / eta
    with np.errstate(divide="ignore", invalid="ignore"):
        return (beta / eta) * z ** (beta - 1) * np.exp(-(z**beta))


def weibull_cdf(x, beta: float, eta: float):
    return -np.expm1(-((_arr(x) / eta) ** beta))


def gg_logpdf(x, a: float, d: float, p: float):
    x = _arr(x)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        lx = np.log(x)
        out = np.log(p) + (d - 1) * lx - d * np.log(a) - special.gammaln(d / p) - np.exp(p * (lx - np.log(a)))
    if d == 1:
        out = np.where(x == 0, np.log(p) - np.log(a) - special.gammaln(1 / p), out)
    return out


def gg_pdf(x, a: float, d: float, p: float):
    with np.errstate(over="ignore"):
        return np.exp(gg_logpdf(x, a, d, p))


def gg_cdf(x, a: float, d: float, p: float):
    return special.gammainc(d / p, (_arr(x) / a) ** p)


def exponential_logpdf(x, lam: float):
    return -np.log(lam) - _arr(x) / lam


# -- WGG ------------------------------------------------------------------------


@dataclass(frozen=True)
class WGGParams:
    varpi: float
    beta: float
    eta: float
    a: float
    d: float
    p: float

    family: ClassVar[str] = "WGG"
    names: ClassVar[tuple[str, ...]] = ("varpi", "beta", "eta", "a", "d", "p")

    def __post_init__(self):
        if not (0 < self.varpi < 1):
            raise ValueError(f"WGG weight varpi must lie in (0, 1), got {self.varpi}")
        _positive("WGG", self.beta, self.eta, self.a, self.d, self.p)

    def values(self) -> tuple[float, ...]:
        return astuple(self)

    def logpdf(self, I):
        I = _arr(I)
        return np.logaddexp(
            math.log(self.varpi) + weibull_logpdf(I, self.beta, self.eta),
            math.log1p(-self.varpi) + gg_logpdf(I, self.a, self.d, self.p),
        )

    def pdf(self, I):
        return _out(wgg_pdf(self, I), I)

    def cdf(self, I):
        v = self.varpi * weibull_cdf(I, self.beta, self.eta) + (1 - self.varpi) * gg_cdf(I, self.a, self.d, self.p)
        return _out(v, I)

    def mean(self) -> float:
        mw = self.eta * math.gamma(1 + 1 / self.beta)
        mg = self.a * math.exp(special.gammaln((self.d + 1) / self.p) - special.gammaln(self.d / self.p))
        return self.varpi * mw + (1 - self.varpi) * mg

    def scaled(self, c: float) -> "WGGParams":
        return WGGParams(self.varpi, self.beta, self.eta * c, self.a * c, self.d, self.p)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        which = rng.random(n) < self.varpi
        w = self.eta * rng.weibull(self.beta, n)
        g = self.a * rng.gamma(self.d / self.p, 1.0, n) ** (1 / self.p)
        return np.where(which, w, g)


def wgg_pdf(params: WGGParams, I):
    """Mixture density varpi*Weibull + (1-varpi)*GG."""
    if not isinstance(params, WGGParams):
        raise TypeError("wgg_pdf expects WGGParams")
    I = _arr(I)
    if np.any(I < 0):
        raise ValueError("intensity must be >= 0")
    out = params.varpi * weibull_pdf(I, params.beta, params.eta) + (1 - params.varpi) * gg_pdf(
        I, params.a, params.d, params.p
    )
    return _out(out, I)


# -- baselines ------------------------------------------------------------------


class _Family:
    family: ClassVar[str]
    names: ClassVar[tuple[str, ...]]

    def values(self) -> tuple[float, ...]:
        return astuple(self)

    def pdf(self, I):
        I = _arr(I)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            v = np.exp(self.logpdf(I))
        return _out(v, I)

    def cdf(self, I):
        return _out(cdf_by_quadrature(self.pdf, _arr(I)), I)


def cdf_by_quadrature(pdf, x: np.ndarray) -> np.ndarray:
    """CDF at arbitrary points by cumulative adaptive quadrature over sorted nodes."""
    flat = np.asarray(x, dtype=float).ravel()
    order = np.argsort(flat)
    nodes = flat[order]
    out = np.empty_like(nodes)
    acc, prev = 0.0, 0.0
    for i, xi in enumerate(nodes):
        if xi > prev:
            acc += integrate.quad(lambda t: float(pdf(t)), prev, xi, limit=200, epsabs=1e-13, epsrel=1e-10)[0]
            prev = xi
        out[i] = min(acc, 1.0)
    res = np.empty_like(out)
    res[order] = out
    return res.reshape(np.shape(x))


@dataclass(frozen=True)
class LogNormal(_Family):
    mu: float
    sigma2: float
    family: ClassVar[str] = "LogNormal"
    names: ClassVar[tuple[str, ...]] = ("mu_X", "sigma_X2")

    def __post_init__(self):
        _positive(self.family, self.sigma2)
        if not np.isfinite(self.mu):
            raise ValueError("LogNormal mu must be finite")

    def logpdf(self, I):
        I = _arr(I)
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = np.log(I)
            return -lx - 0.5 * np.log(8 * np.pi * self.sigma2) - (lx - 2 * self.mu) ** 2 / (8 * self.sigma2)

    def pdf(self, I):
        if np.any(_arr(I) <= 0):
            raise ValueError("LogNormal density is undefined at I = 0")
        return super().pdf(I)

    def cdf(self, I):
        I = _arr(I)
        with np.errstate(divide="ignore"):
            v = special.ndtr((np.log(I) - 2 * self.mu) / (2 * math.sqrt(self.sigma2)))
        return _out(v, I)


@dataclass(frozen=True)
class Gamma(_Family):
    k: float
    theta: float
    family: ClassVar[str] = "Gamma"
    names: ClassVar[tuple[str, ...]] = ("k", "theta")

    def __post_init__(self):
        _positive(self.family, self.k, self.theta)

    def logpdf(self, I):
        I = _arr(I)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.k - 1) * np.log(I) - I / self.theta - special.gammaln(self.k) - self.k * np.log(self.theta)

    def cdf(self, I):
        return _out(special.gammainc(self.k, _arr(I) / self.theta), I)


@dataclass(frozen=True)
class KDist(_Family):
    alpha: float
    family: ClassVar[str] = "K"
    names: ClassVar[tuple[str, ...]] = ("alpha",)

    def __post_init__(self):
        _positive(self.family, self.alpha)

    def logpdf(self, I):
        I = _arr(I)
        a = self.alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            z = 2 * np.sqrt(a * I)
            return (
                math.log(2)
                + (a + 1) / 2 * math.log(a)
                - special.gammaln(a)
                + (a - 1) / 2 * np.log(I)
                + log_besselk(a - 1, z)
            )

    def cdf(self, I):
        I = _arr(I)
        a = self.alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            z = 2 * np.sqrt(a * I)
            tail = np.exp(math.log(2) - special.gammaln(a) + a / 2 * np.log(a * I) + log_besselk(a, z))
        v = np.where(I > 0, 1 - tail, 0.0)
        return _out(np.clip(v, 0.0, 1.0), I)


@dataclass(frozen=True)
class Weibull(_Family):
    beta: float
    eta: float
    family: ClassVar[str] = "Weibull"
    names: ClassVar[tuple[str, ...]] = ("beta", "eta")

    def __post_init__(self):
        _positive(self.family, self.beta, self.eta)

    def logpdf(self, I):
        return weibull_logpdf(I, self.beta, self.eta)

    def pdf(self, I):
        return _out(weibull_pdf(I, self.beta, self.eta), I)

    def cdf(self, I):
        return _out(weibull_cdf(I, self.beta, self.eta), I)


@dataclass(frozen=True)
class ExpWeibull(_Family):
    alpha: float
    beta: float
    eta: float
    family: ClassVar[str] = "EW"
    names: ClassVar[tuple[str, ...]] = ("alpha", "beta", "eta")

    def __post_init__(self):
        _positive(self.family, self.alpha, self.beta, self.eta)

    def logpdf(self, I):
        I = _arr(I)
        with np.errstate(divide="ignore", invalid="ignore"):
            zb = (I / self.eta) ** self.beta
            return math.log(self.alpha) + weibull_logpdf(I, self.beta, self.eta) + (self.alpha - 1) * np.log(-np.expm1(-zb))

    def pdf(self, I):
        I = _arr(I)
        with np.errstate(divide="ignore", invalid="ignore"):
            zb = (I / self.eta) ** self.beta
            v = self.alpha * weibull_pdf(I, self.beta, self.eta) * (-np.expm1(-zb)) ** (self.alpha - 1)
        if self.alpha == 1:
            v = weibull_pdf(I, self.beta, self.eta)
        return _out(v, I)

    def cdf(self, I):
        return _out((-np.expm1(-((_arr(I) / self.eta) ** self.beta))) ** self.alpha, I)


@dataclass(frozen=True)
class GammaGamma(_Family):
    alpha: float
    beta: float
    family: ClassVar[str] = "GammaGamma"
    names: ClassVar[tuple[str, ...]] = ("alpha", "beta")

    def __post_init__(self):
        _positive(self.family, self.alpha, self.beta)

    def logpdf(self, I):
        I = _arr(I)
        a, b = self.alpha, self.beta
        with np.errstate(divide="ignore", invalid="ignore"):
            z = 2 * np.sqrt(a * b * I)
            return (
                math.log(2)
                + (a + b) / 2 * math.log(a * b)
                - special.gammaln(a)
                - special.gammaln(b)
                + ((a + b) / 2 - 1) * np.log(I)
                + log_besselk(a - b, z)
            )

    def cdf(self, I):
        """Product of unit-mean gammas: F(I) = E_Y[P(alpha, alpha I / Y)], Y ~ Gamma(beta, 1/beta)."""
        I = _arr(I)
        a, b = self.alpha, self.beta
        flat = np.ravel(I)
        lo, hi = special.gammaincinv(b, 1e-16) / b, special.gammainccinv(b, 1e-16) / b

        def integrand(y):
            return special.gammainc(a, a * np.maximum(flat, 0) / y) * np.exp(
                b * math.log(b) + (b - 1) * math.log(y) - b * y - special.gammaln(b)
            )

        v, _ = integrate.quad_vec(integrand, lo, hi, epsabs=1e-13, epsrel=1e-10, limit=400)
        return _out(np.clip(v, 0.0, 1.0).reshape(np.shape(I)), I)


@dataclass(frozen=True)
class GG(_Family):
    a: float
    d: float
    p: float
    family: ClassVar[str] = "GG"
    names: ClassVar[tuple[str, ...]] = ("a", "d", "p")

    def __post_init__(self):
        _positive(self.family, self.a, self.d, self.p)

    def logpdf(self, I):
        return gg_logpdf(I, self.a, self.d, self.p)

    def pdf(self, I):
        return _out(gg_pdf(I, self.a, self.d, self.p), I)

    def cdf(self, I):
        return _out(gg_cdf(I, self.a, self.d, self.p), I)


@dataclass(frozen=True)
class EGG(_Family):
    omega: float
    lam: float
    a: float
    d: float
    p: float
    family: ClassVar[str] = "EGG"
    names: ClassVar[tuple[str, ...]] = ("omega", "lambda", "a", "d", "p")

    def __post_init__(self):
        if not (0 < self.omega < 1):
            raise ValueError(f"EGG weight omega must lie in (0, 1), got {self.omega}")
        _positive(self.family, self.lam, self.a, self.d, self.p)

    def logpdf(self, I):
        I = _arr(I)
        return np.logaddexp(
            math.log(self.omega) + exponential_logpdf(I, self.lam),
            math.log1p(-self.omega) + gg_logpdf(I, self.a, self.d, self.p),
        )

    def pdf(self, I):
        I = _arr(I)
        v = self.omega / self.lam * np.exp(-I / self.lam) + (1 - self.omega) * gg_pdf(I, self.a, self.d, self.p)
        return _out(v, I)

    def cdf(self, I):
        I = _arr(I)
        v = self.omega * -np.expm1(-I / self.lam) + (1 - self.omega) * gg_cdf(I, self.a, self.d, self.p)
        return _out(v, I)


BASELINE_FAMILIES: dict[str, type] = {
    cls.family: cls for cls in (LogNormal, Gamma, KDist, Weibull, ExpWeibull, GammaGamma, GG, EGG)
}
ALL_FAMILIES = tuple(BASELINE_FAMILIES) + ("WGG",)


def family_class(name: str) -> type:
    if name == "WGG":
        return WGGParams
    try:
        return BASELINE_FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose from {', '.join(ALL_FAMILIES)}") from None


def params_from_values(family: str, values) -> object:
    cls = family_class(family)
    return cls(*[float(v) for v in values])


def param_dict(params) -> dict[str, float]:
    return {n: float(getattr(params, f.name)) for n, f in zip(params.names, fields(params))}


def model_pdf(params, I):
    """Density of any baseline variant (or WGG) at ``I``."""
    if isinstance(params, WGGParams):
        return wgg_pdf(params, I)
    if not isinstance(params, _Family):
        raise TypeError(f"not a fading-model parameter set: {params!r}")
    if np.any(_arr(I) < 0):
        raise ValueError("intensity must be >= 0")
    return params.pdf(I)


def model_cdf(params, I):
    return params.cdf(I)


def model_logpdf(params, I):
    return params.logpdf(I)
