import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import component_spectrum_mp
from uwocsim.environment import TurbulenceLayerParams
from uwocsim.spectrum import PhasePSD, SpectrumParams, component_spectrum, phase_psd, refractive_index_spectrum


def make_layer(**kw):
    base = dict(
        A=1.2e-4, B=1.9e-4, chi_T=1e-7, chi_S=3e-9, chi_TS=2e-8, omega=3.0, H=-10.0, dr=5.0,
        eta=1e-3, epsilon=1e-5, alpha_c=2e-4, beta_c=7.5e-4, c_T=0.1, c_S=1e-3, c_TS=0.05,
    )
    base.update(kw)
    return TurbulenceLayerParams(**base)


def params(beta0=0.72, **kw):
    return SpectrumParams(make_layer(**kw), beta0)


def test_regression_value():
    # beta0 = 0.72, chi = 1e-7, eps = 1e-5, eta = 1e-3, c = 0.1, kappa = 100
    frozen = 1.4193489042303866e-14
    assert float(component_spectrum_mp(100, 0.72, 1e-7, 1e-5, 1e-3, 0.1)) == pytest.approx(frozen, rel=1e-14)
    assert component_spectrum("T", 100.0, params()) == pytest.approx(frozen, rel=1e-12)


@given(
    st.sampled_from(["T", "S", "TS"]),
    st.floats(min_value=1e-1, max_value=1e4),
    st.floats(min_value=1e-4, max_value=1e-2),
    st.floats(min_value=1e-5, max_value=1.0),
)
def test_matches_high_precision_formula(q, kappa, eta, c):
    p = params(eta=eta, **{f"c_{q}": c})
    chi = p.layer.chi(q)
    ref = float(component_spectrum_mp(kappa, 0.72, chi, 1e-5, eta, c))
    assert component_spectrum(q, kappa, p) == pytest.approx(ref, rel=1e-11, abs=1e-300)


def test_zero_chi_gives_zero():
    p = params(chi_T=0.0)
    k = np.logspace(-1, 4, 50)
    assert np.all(component_spectrum("T", k, p) == 0.0)


def _inertial(p, kappa):
    return 0.72 * p.layer.chi_T * p.layer.epsilon ** (-1 / 3) / (4 * math.pi) * kappa ** (-11 / 3)


def test_inertial_limit():
    p = params()
    c = p.layer.c_T
    # at k*eta = 1e-4 the bracket is still 1 + 21.61 x^0.61 c^0.02 - 18.18 x^0.55 c^0.04 ~ 0.970
    kappa = 1e-4 / p.layer.eta
    bracket = 1 + 21.61 * 1e-4**0.61 * c**0.02 - 18.18 * 1e-4**0.55 * c**0.04
    ratio = component_spectrum("T", kappa, p) / _inertial(p, kappa)
    assert ratio == pytest.approx(bracket * math.exp(-174.90 * 1e-8 * c**0.96), rel=1e-12)
    # the x^0.55 term decays slowly; the ratio is within 1e-3 of 1 only from k*eta ~ 1e-8
    kappa = 1e-8 / p.layer.eta
    assert component_spectrum("T", kappa, p) / _inertial(p, kappa) == pytest.approx(1.0, abs=1e-3)


def test_decays_at_high_frequency():
    p = params()
    kappa = 1e3 / p.layer.eta
    assert abs(component_spectrum("T", kappa, p)) < 1e-12 * _inertial(p, kappa)


def test_negative_bracket_is_not_clamped_here():
    # with c = 1e10 the bracket is negative near k*eta = 5e-3; the exponential
    # factor has underflowed there, so the raw product is a non-positive zero
    p = params(c_T=1e10)
    x = 5e-3
    assert 1 + 21.61 * x**0.61 * 1e10**0.02 - 18.18 * x**0.55 * 1e10**0.04 < 0
    v = component_spectrum("T", x / p.layer.eta, p)
    assert math.isfinite(v) and v <= 0.0


@pytest.mark.parametrize("bad", [0.0, -1.0, np.array([1.0, 0.0])])
def test_rejects_nonpositive_kappa(bad):
    with pytest.raises(ValueError):
        component_spectrum("T", bad, params())
    with pytest.raises(ValueError):
        refractive_index_spectrum(bad, params())


def test_unknown_component():
    with pytest.raises((KeyError, ValueError)):
        component_spectrum("X", 1.0, params())


def test_refractive_index_zero_coefficients():
    p = params(A=0.0, B=0.0)
    assert refractive_index_spectrum(50.0, p) == 0.0


def test_refractive_index_isolates_temperature_term():
    p = params(B=0.0)
    k = np.logspace(0, 3, 30)
    np.testing.assert_array_equal(refractive_index_spectrum(k, p), p.layer.A**2 * component_spectrum("T", k, p))


def test_refractive_index_three_term_sum():
    p = params()
    k = np.logspace(0, 3, 30)
    A, B = p.layer.A, p.layer.B
    want = A**2 * component_spectrum("T", k, p) + B**2 * component_spectrum("S", k, p) + 2 * A * B * component_spectrum("TS", k, p)
    np.testing.assert_allclose(refractive_index_spectrum(k, p), want, rtol=1e-14)


@given(st.floats(min_value=0.01, max_value=100.0))
def test_homogeneity(c):
    p = params()
    k = np.array([3.0, 30.0, 300.0])
    scaled_chi = SpectrumParams(replace(p.layer, chi_T=c * p.layer.chi_T), p.beta0)
    np.testing.assert_allclose(component_spectrum("T", k, scaled_chi), c * component_spectrum("T", k, p), rtol=1e-12)
    scaled_ab = SpectrumParams(replace(p.layer, A=c * p.layer.A, B=c * p.layer.B), p.beta0)
    np.testing.assert_allclose(refractive_index_spectrum(k, scaled_ab), c**2 * refractive_index_spectrum(k, p), rtol=1e-12)


def test_phase_psd_linearity():
    p = params()
    k = np.logspace(0, 3, 20)
    base = phase_psd(k, 1.2e7, 5.0, p)
    np.testing.assert_allclose(phase_psd(k, 1.2e7, 10.0, p), 2 * base, rtol=1e-15)
    np.testing.assert_allclose(phase_psd(k, 2.4e7, 5.0, p), 4 * base, rtol=1e-15)


@given(
    st.floats(min_value=0.5, max_value=1e3),
    st.floats(min_value=1e6, max_value=2e7),
    st.floats(min_value=0.1, max_value=200.0),
)
def test_phase_psd_factorizes(kappa, k, dd):
    p = params()
    want = 2 * math.pi * k**2 * dd * refractive_index_spectrum(kappa, p)
    assert phase_psd(kappa, k, dd, p) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("k, dd", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
def test_phase_psd_rejects_nonpositive(k, dd):
    with pytest.raises(ValueError):
        phase_psd(1.0, k, dd, params())


def test_phase_psd_callable():
    p = params()
    f = PhasePSD(p, 532e-9, 7.0)
    assert f(42.0) == pytest.approx(phase_psd(42.0, 2 * math.pi / 532e-9, 7.0, p), rel=1e-15)


def test_beta0_positive():
    with pytest.raises(ValueError):
        SpectrumParams(make_layer(), 0.0)
