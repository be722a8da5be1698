"""EM estimation of two-component fading mixtures (WGG, and EGG for baselines).

The M-step has no closed form for the shape parameters. For the Weibull
component the shape solves the weighted stationarity equation after the
scale is eliminated; for the GG component the ``(theta = a^p, q = d/p)``
reparameterization leaves a 1-D root problem in ``p``. Each sub-solve is
accepted only if it does not lower its part of the expected complete-data
log-likelihood, which keeps the observed log-likelihood non-decreasing.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .distributions import EGG, GG, WGGParams, exponential_logpdf, gg_logpdf, weibull_logpdf

SHAPE_BRACKET = (1e-2, 1e2)
SHAPE_LIMITS = (1e-3, 1e4)
DEGENERATE_GAMMA = 1e-12
# a component carrying fewer expected samples than this is shrinking onto a few
# points (a spike with unbounded likelihood) and is dropped
MIN_COMPONENT_COUNT = 5.0
BURN_IN = 30
N_FINALISTS = 2


class FitWarning(UserWarning):
    pass


@dataclass
class EMResult:
    params: object
    loglik: float
    trace: list[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    message: str = ""


class _Data:
    """Samples with cached logarithms."""

    def __init__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(~(x > 0)) or not np.all(np.isfinite(x)):
            raise ValueError("EM fitting needs finite, strictly positive intensities")
        self.x = x
        self.lx = np.log(x)
        self.n = x.size


# -- weighted single-component maximizers ---------------------------------------


def _tilted(lx: np.ndarray, logw: np.ndarray, s: float):
    """log sum w x^s, and the first two moments of ln x under weights w x^s."""
    e = logw + s * lx
    m = e.max()
    t = np.exp(e - m)
    tot = t.sum()
    m1 = (t * lx).sum() / tot
    m2 = (t * lx * lx).sum() / tot
    return m + math.log(tot), m1, max(m2 - m1 * m1, 0.0)


def _safeguarded_root(fn, x0: float, decreasing: bool | None = None):
    """Root of a scalar function of a shape parameter, searched on a log scale.

    A sign change is bracketed by geometric expansion from ``x0`` (both ways
    unless the function is known to be decreasing), within ``SHAPE_LIMITS``,
    then refined by Brent's method. Returns ``None`` if no bracket is found.
    """
    x0 = min(max(x0, SHAPE_LIMITS[0]), SHAPE_LIMITS[1])
    f0 = fn(x0)
    if f0 == 0:
        return x0
    if not math.isfinite(f0):
        return None
    go_up = go_down = True
    if decreasing is not None:
        go_up = (f0 > 0) == decreasing
        go_down = not go_up
    lo = hi = x0
    flo = fhi = f0
    step = 1.25
    while go_up or go_down:
        if go_up:
            new = hi * step
            if new > SHAPE_LIMITS[1]:
                go_up = False
            else:
                fnew = fn(new)
                if not math.isfinite(fnew):
                    go_up = False
                elif (fnew > 0) != (fhi > 0):
                    return optimize.brentq(fn, hi, new, xtol=1e-14, rtol=1e-12, maxiter=200)
                else:
                    hi, fhi = new, fnew
        if go_down:
            new = lo / step
            if new < SHAPE_LIMITS[0]:
                go_down = False
            else:
                fnew = fn(new)
                if not math.isfinite(fnew):
                    go_down = False
                elif (fnew > 0) != (flo > 0):
                    return optimize.brentq(fn, new, lo, xtol=1e-14, rtol=1e-12, maxiter=200)
                else:
                    lo, flo = new, fnew
        step = min(step * 1.5, 4.0)
    return None


def weibull_mstep(data: _Data, logw: np.ndarray, beta0: float, scale_update: str = "ml") -> tuple[float, float]:
    """Weighted Weibull ML: returns (beta, eta).

    ``scale_update="printed"`` uses eta = sum(w)/sum(w x^beta) literally (the
    inverse-power form), kept for comparison; ``"ml"`` uses
    eta = (sum(w x^beta)/sum(w))^(1/beta).
    """
    W = math.exp(_logsumexp(logw))
    wn = np.exp(logw - _logsumexp(logw))
    mean_lx = float((wn * data.lx).sum())

    def g(beta):
        _, m1, _ = _tilted(data.lx, logw, beta)
        return 1.0 / beta + mean_lx - m1

    # g is strictly decreasing in beta
    beta = _safeguarded_root(g, beta0, decreasing=True)
    if beta is None:
        beta = SHAPE_LIMITS[1] if g(SHAPE_LIMITS[1]) > 0 else SHAPE_LIMITS[0]
    lsum, _, _ = _tilted(data.lx, logw, beta)
    if scale_update == "printed":
        eta = W / math.exp(lsum)
    elif scale_update == "ml":
        eta = math.exp((lsum - math.log(W)) / beta)
    else:
        raise ValueError(f"unknown scale_update {scale_update!r}")
    return float(beta), float(eta)


def _gg_from_p(data: _Data, logw: np.ndarray, W: float, sum_wlx: float, p: float):
    lsum, m1, _ = _tilted(data.lx, logw, p)
    denom = W * m1 - sum_wlx
    if denom <= 0:
        return None
    q = (W / p) / denom
    log_theta = lsum - math.log(q * W)
    return q, log_theta


def gg_mstep(data: _Data, logw: np.ndarray, p0: float) -> tuple[float, float, float] | None:
    """Weighted GG ML in (a, d, p); ``None`` when no stationary point is found."""
    lW = _logsumexp(logw)
    W = math.exp(lW)
    wn = np.exp(logw - lW)
    sum_wlx = W * float((wn * data.lx).sum())

    def h(p):
        r = _gg_from_p(data, logw, W, sum_wlx, p)
        if r is None:
            return math.nan
        q, log_theta = r
        return (p * sum_wlx - W * log_theta - W * special.digamma(q)) / W

    def profile(p):
        r = _gg_from_p(data, logw, W, sum_wlx, p)
        if r is None:
            return -math.inf
        q, log_theta = r
        a = math.exp(log_theta / p)
        return _wsum(wn, gg_logpdf(data.x, a, p * q, p))

    candidates = []
    root = _safeguarded_root(h, p0)
    if root is not None and math.isfinite(h(root)):
        candidates.append(root)
    if not candidates:
        res = optimize.minimize_scalar(
            lambda lp: -profile(math.exp(lp)),
            bounds=(math.log(SHAPE_BRACKET[0]), math.log(SHAPE_BRACKET[1])),
            method="bounded",
            options={"xatol": 1e-10},
        )
        candidates.append(math.exp(res.x))
    p = max(candidates, key=profile)
    r = _gg_from_p(data, logw, W, sum_wlx, p)
    if r is None:
        return None
    q, log_theta = r
    a, d = math.exp(log_theta / p), p * q
    if not (0 < a < math.inf and 0 < d < math.inf):
        return None
    return float(a), float(d), float(p)


def _wsum(w: np.ndarray, logf: np.ndarray) -> float:
    """sum w*log f with 0*(-inf) taken as 0."""
    return float(np.sum(np.where(w > 0, w * np.where(w > 0, logf, 0.0), 0.0)))


def _logsumexp(v: np.ndarray) -> float:
    m = float(v.max())
    return m + math.log(float(np.exp(v - m).sum()))


# -- generic two-component EM ---------------------------------------------------


class _Mixture:
    """First component Weibull (WGG) or exponential (EGG); second GG."""

    def __init__(self, kind: str, scale_update: str = "ml"):
        if kind not in ("weibull", "exponential"):
            raise ValueError(kind)
        self.kind = kind
        self.scale_update = scale_update

    def first_logpdf(self, data, theta):
        if self.kind == "weibull":
            return weibull_logpdf(data.x, *theta)
        return exponential_logpdf(data.x, theta[0])

    def first_mstep(self, data, logw, theta):
        if self.kind == "weibull":
            return weibull_mstep(data, logw, theta[0], self.scale_update)
        wn = np.exp(logw - _logsumexp(logw))
        return (float((wn * data.x).sum()),)

    def build(self, w, theta1, theta2):
        if self.kind == "weibull":
            return WGGParams(w, theta1[0], theta1[1], *theta2)
        return EGG(w, theta1[0], *theta2)

    def split(self, params):
        if self.kind == "weibull":
            return params.varpi, (params.beta, params.eta), (params.a, params.d, params.p)
        return params.omega, (params.lam,), (params.a, params.d, params.p)


def _loglik_parts(mix: _Mixture, data: _Data, w, theta1, theta2):
    l1 = math.log(w) + mix.first_logpdf(data, theta1)
    l2 = math.log1p(-w) + gg_logpdf(data.x, *theta2)
    lt = np.logaddexp(l1, l2)
    return l1, l2, lt


class _Degenerate(Exception):
    def __init__(self, to_second: bool):
        self.to_second = to_second


class _State:
    """Mixture parameters together with their log-likelihood pieces."""

    def __init__(self, mix: _Mixture, data: _Data, w, th1, th2):
        self.w = float(w)
        self.th1, self.th2 = tuple(float(v) for v in th1), tuple(float(v) for v in th2)
        self.l1, self.l2, self.lt = _loglik_parts(mix, data, self.w, self.th1, self.th2)
        self.ll = float(self.lt.sum())

    def vector(self) -> np.ndarray:
        return np.log(np.array((self.w / (1 - self.w),) + self.th1 + self.th2))


def _em_step(mix: _Mixture, data: _Data, st: _State) -> _State:
    """One generalized EM update; sub-updates that lower their Q term are rejected."""
    log_gamma = st.l1 - st.lt
    log_1mg = st.l2 - st.lt
    gamma = np.exp(log_gamma)
    if gamma.max() < DEGENERATE_GAMMA or gamma.min() > 1 - DEGENERATE_GAMMA:
        raise _Degenerate(bool(gamma.max() < DEGENERATE_GAMMA))
    n1 = float(gamma.sum())
    if min(n1, data.n - n1) < MIN_COMPONENT_COUNT:
        raise _Degenerate(n1 < MIN_COMPONENT_COUNT)
    new1 = mix.first_mstep(data, log_gamma, st.th1)
    if not _wsum(gamma, mix.first_logpdf(data, new1)) >= _wsum(gamma, mix.first_logpdf(data, st.th1)):
        new1 = st.th1
    new2 = gg_mstep(data, log_1mg, st.th2[2])
    g2 = 1 - gamma
    if new2 is None or not _wsum(g2, gg_logpdf(data.x, *new2)) >= _wsum(g2, gg_logpdf(data.x, *st.th2)):
        new2 = st.th2
    new_w = float(np.clip(gamma.mean(), 1e-12, 1 - 1e-12))
    return _State(mix, data, new_w, new1, new2)


def _from_vector(mix: _Mixture, data: _Data, v: np.ndarray, n1: int) -> _State | None:
    if not np.all(np.isfinite(v)) or np.any(np.abs(v[1:]) > math.log(SHAPE_LIMITS[1])):
        return None
    e = np.exp(v)
    w = float(np.clip(e[0] / (1 + e[0]), 1e-12, 1 - 1e-12))
    try:
        st = _State(mix, data, w, e[1 : 1 + n1], e[1 + n1 :])
    except (ValueError, FloatingPointError):
        return None
    return st if math.isfinite(st.ll) else None


def _squarem_cycle(mix: _Mixture, data: _Data, st0: _State) -> list[_State]:
    """Two EM steps, a squared extrapolation and a stabilizing EM step.

    Returns the accepted states in order; their log-likelihoods never
    decrease because the extrapolated point is kept only if it beats the
    second plain EM step.
    """
    st1 = _em_step(mix, data, st0)
    st2 = _em_step(mix, data, st1)
    v0, v1, v2 = st0.vector(), st1.vector(), st2.vector()
    r = v1 - v0
    d = v2 - 2 * v1 + v0
    nd = float(np.linalg.norm(d))
    if nd == 0 or not np.all(np.isfinite(d)):
        return [st1, st2]
    alpha = min(-1.0, -float(np.linalg.norm(r)) / nd)
    n1 = len(st0.th1)
    while alpha < -1.0:
        cand = _from_vector(mix, data, v0 - 2 * alpha * r + alpha**2 * d, n1)
        if cand is not None:
            try:
                st3 = _em_step(mix, data, cand)
            except (_Degenerate, ValueError, FloatingPointError):
                st3 = None
            if st3 is not None and st3.ll >= st2.ll:
                return [st1, st2, st3]
        alpha = (alpha - 1) / 2
    return [st1, st2]


def _run_em(mix: _Mixture, data: _Data, init, max_iter: int, tol: float, *, accelerate: bool = True) -> EMResult:
    """EM from ``init`` until the relative improvement drops below ``tol``.

    ``trace`` holds the observed log-likelihood after every accepted update.
    """
    st = _State(mix, data, *mix.split(init))
    trace = [st.ll]
    converged = False
    message = "max_iter reached"
    it = 0
    while it < max_iter:
        try:
            steps = _squarem_cycle(mix, data, st) if accelerate and max_iter - it >= 2 else [_em_step(mix, data, st)]
        except _Degenerate as exc:
            warnings.warn("degenerate responsibilities; collapsing to a single component", FitWarning, stacklevel=3)
            return _collapse(mix, data, st.w, st.th1, st.th2, exc.to_second, trace, it)
        old = st.ll
        for nxt in steps:
            trace.append(nxt.ll)
        it += len(steps)
        st = steps[-1]
        if st.ll - old <= tol * (1.0 + abs(old)):
            converged = True
            message = "relative log-likelihood improvement below tolerance"
            break
    return EMResult(mix.build(st.w, st.th1, st.th2), st.ll, trace, it, converged, message)


def _collapse(mix, data, w, th1, th2, to_second: bool, trace, it) -> EMResult:
    logw = np.zeros(data.n)
    if to_second:
        th2 = gg_mstep(data, logw, th2[2]) or th2
        w = 1e-12
    else:
        th1 = mix.first_mstep(data, logw, th1)
        w = 1 - 1e-12
    _, _, lt = _loglik_parts(mix, data, w, th1, th2)
    ll = float(lt.sum())
    trace = trace + [ll] if ll >= trace[-1] else trace
    return EMResult(mix.build(w, tuple(th1), tuple(th2)), max(ll, trace[-1]), trace, it, True, "collapsed to single component")


# -- initialization -------------------------------------------------------------


def weibull_moments(x: np.ndarray) -> tuple[float, float]:
    """Method-of-moments Weibull (beta, eta) from the coefficient of variation."""
    m, s = float(np.mean(x)), float(np.std(x))
    cv = s / m if m > 0 else 1.0

    def f(lb):
        b = math.exp(lb)
        g1 = special.gammaln(1 + 1 / b)
        g2 = special.gammaln(1 + 2 / b)
        return math.sqrt(max(math.exp(g2 - 2 * g1) - 1, 0.0)) - cv

    try:
        beta = math.exp(optimize.brentq(f, math.log(0.05), math.log(1e3)))
    except ValueError:
        beta = 1.0 if cv > 0.5 else 1e3
    return beta, m / math.gamma(1 + 1 / beta)


def fit_weibull_ml(x) -> tuple[float, float]:
    data = _Data(x)
    beta0, _ = weibull_moments(data.x)
    return weibull_mstep(data, np.zeros(data.n), beta0)


def fit_gg_ml(x, p0: float | None = None) -> tuple[float, float, float]:
    """Unweighted GG maximum likelihood; returns (a, d, p)."""
    data = _Data(x)
    if p0 is None:
        p0 = weibull_moments(data.x)[0]
    res = gg_mstep(data, np.zeros(data.n), p0)
    if res is None:
        raise RuntimeError("GG maximum likelihood has no stationary point for these data")
    return res


def default_initializations(x: np.ndarray, kind: str, n_random: int, rng: np.random.Generator) -> list:
    """Split-based starts in both orientations.

    The sorted sample is split at the median and at ``n_random`` random
    fractions. Each split gives two starts: first component on the lower
    part and GG on the upper, and the reverse. The two components of a
    fitted mixture often overlap heavily, so either ordering can hold the
    global maximum.
    """
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    mix = _Mixture(kind)
    starts = []

    def first_fit(sub):
        if kind == "weibull":
            return weibull_moments(sub)
        return (float(np.mean(sub)),)

    def gg_fit(sub):
        # GG with d = p is a Weibull, so the Weibull moment fit is a valid GG start
        beta, eta = weibull_moments(sub)
        return (eta, beta, beta)

    for frac in [0.5] + list(rng.uniform(0.25, 0.75, n_random)):
        k = min(max(int(round(frac * n)), 10), n - 10)
        lower, upper = x[:k], x[k:]
        w = k / n
        starts.append(mix.build(w, first_fit(lower), gg_fit(upper)))
        starts.append(mix.build(1 - w, first_fit(upper), gg_fit(lower)))
    return starts


def pure_fit_candidates(x: np.ndarray, kind: str) -> list:
    """Mixtures that reduce to the single-family ML fits (weight at 1-1e-12 or 1e-12)."""
    mix = _Mixture(kind)
    out = []
    try:
        g_all = fit_gg_ml(x)
    except RuntimeError:
        g_all = None
    if kind == "weibull":
        w_all = fit_weibull_ml(x)
        if g_all is not None:
            out.append(mix.build(1 - 1e-12, w_all, g_all))
        else:
            out.append(mix.build(1 - 1e-12, w_all, (w_all[1], w_all[0], w_all[0])))
    else:
        w_all = (float(np.mean(x)),)
    if g_all is not None:
        out.append(mix.build(1e-12, w_all, g_all))
    return out


def _em_fit(kind: str, x, init, max_iter: int, tol: float, n_restarts: int, seed: int, scale_update: str):
    data = _Data(x)
    mix = _Mixture(kind, scale_update)
    if init is not None:
        return _run_em(mix, data, init, max_iter, tol)
    rng = np.random.default_rng(seed)
    starts = default_initializations(data.x, kind, n_restarts, rng)
    burn = min(BURN_IN, max_iter)
    short = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FitWarning)
        for s in starts:
            try:
                short.append(_run_em(mix, data, s, burn, -math.inf))
            except (ValueError, FloatingPointError):
                continue
    if not short:
        raise RuntimeError("every EM start failed")
    short.sort(key=lambda r: r.loglik, reverse=True)
    best = None
    for r in short[:N_FINALISTS]:
        if r.converged or r.n_iter >= max_iter:
            full = r
        else:
            full = _run_em(mix, data, r.params, max_iter - r.n_iter, tol)
            full.trace = r.trace + full.trace[1:]
            full.n_iter += r.n_iter
        if best is None or full.loglik > best.loglik:
            best = full
    for cand in pure_fit_candidates(data.x, kind):
        ll = float(cand.logpdf(data.x).sum())
        if ll > best.loglik:
            best = EMResult(cand, ll, [ll], 0, True, "single-family fit dominates the mixture")
    return best


def em_fit_wgg(
    samples,
    init: WGGParams | None = None,
    max_iter: int = 2000,
    tol: float = 1e-10,
    *,
    n_restarts: int = 2,
    seed: int = 0,
    scale_update: str = "ml",
) -> EMResult:
    """Fit the Weibull + GG mixture by EM.

    ``samples`` is a :class:`SampleSet` or an array of positive intensities.
    Without ``init``, the starts of :func:`default_initializations` run for a
    short burn-in and the best ``N_FINALISTS`` continue to convergence; the
    pure single-family ML fits are then compared so the result never falls
    below either nested family. Iteration stops once a cycle improves the log-likelihood
    by less than ``tol * (1 + |loglik|)``.
    """
    x = getattr(samples, "intensities", samples)
    if np.size(x) < 100:
        raise ValueError("EM fitting needs at least 100 samples")
    res = _em_fit("weibull", x, init, max_iter, tol, n_restarts, seed, scale_update)
    if not res.converged:
        warnings.warn(f"WGG EM did not converge in {max_iter} iterations", FitWarning, stacklevel=2)
    return res


def em_fit_egg(samples, init: EGG | None = None, max_iter: int = 2000, tol: float = 1e-10, *, n_restarts: int = 2, seed: int = 0) -> EMResult:
    x = getattr(samples, "intensities", samples)
    return _em_fit("exponential", x, init, max_iter, tol, n_restarts, seed, "ml")


def responsibilities(params: WGGParams, x) -> np.ndarray:
    """Posterior probability that each sample came from the Weibull component."""
    x = np.asarray(x, dtype=float)
    l1 = math.log(params.varpi) + weibull_logpdf(x, params.beta, params.eta)
    l2 = math.log1p(-params.varpi) + gg_logpdf(x, params.a, params.d, params.p)
    return np.exp(l1 - np.logaddexp(l1, l2))


def weight_update(gamma) -> float:
    return float(np.mean(gamma))


def loglik(params, x) -> float:
    return float(np.sum(params.logpdf(np.asarray(x, dtype=float))))
