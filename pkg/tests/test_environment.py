import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import seawater_eta_oracle
from uwocsim.environment import (
    DegenerateGradientError,
    OceanProfile,
    ProfileError,
    SeawaterState,
    eddy_diffusivity_ratio,
    gradients_at,
    layer_params,
    load_coefficients,
    load_profile,
    parse_coefficients,
    state_at,
    thermo_coefficients,
    write_profile,
)

HEADER = "depth_m,temperature_C,salinity_ppt\n"


def write(tmp_path, body, name="p.csv"):
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    return path


def linear_profile(dT=-0.05, dS=0.01, z=(0.0, 50.0, 100.0, 200.0)):
    z = np.asarray(z)
    return OceanProfile(z, 10 + dT * z, 34 + dS * z, "linear")


# -- ingestion ---------------------------------------------------------------


def test_three_row_profile(tmp_path):
    p = load_profile(write(tmp_path, HEADER + "0,20,34\n10,18,34.2\n20,15,34.5\n"))
    assert len(p) == 3
    assert p.span == (0.0, 20.0)
    assert p.source_id == "p"
    np.testing.assert_array_equal(p.temperature, [20, 18, 15])


def test_comments_and_blank_lines(tmp_path):
    p = load_profile(write(tmp_path, "# float 5905123\n" + HEADER + "\n0,20,34\n# mid\n10,18,34.2\n"), source_id="argo")
    assert len(p) == 2 and p.source_id == "argo"


def test_non_monotone_depth_names_row_2(tmp_path):
    with pytest.raises(ProfileError) as err:
        load_profile(write(tmp_path, HEADER + "10,20,34\n5,18,34.2\n"))
    assert err.value.line == 3
    assert "row 2" in str(err.value)


def test_salinity_out_of_range(tmp_path):
    with pytest.raises(ProfileError, match="salinity 60"):
        load_profile(write(tmp_path, HEADER + "0,20,34\n10,18,60\n"))


def test_temperature_out_of_range(tmp_path):
    with pytest.raises(ProfileError, match="temperature"):
        load_profile(write(tmp_path, HEADER + "0,45,34\n10,18,34\n"))


@pytest.mark.parametrize(
    "body, fragment",
    [
        ("depth,T,S\n0,1,2\n", "expected header"),
        (HEADER + "0,20\n", "expected 3 fields"),
        (HEADER + "0,x,34\n1,2,3\n", "unparseable"),
        (HEADER + "0,20,34\n", "at least 2"),
        ("", "empty"),
        (HEADER + "0,nan,34\n1,2,3\n", "non-finite"),
    ],
)
def test_parse_errors(tmp_path, body, fragment):
    with pytest.raises(ProfileError, match=fragment):
        load_profile(write(tmp_path, body))


def test_write_then_load_round_trip(tmp_path):
    p = linear_profile()
    write_profile(p, tmp_path / "out.csv")
    q = load_profile(tmp_path / "out.csv")
    np.testing.assert_array_equal(p.depth, q.depth)
    np.testing.assert_array_equal(p.temperature, q.temperature)
    np.testing.assert_array_equal(p.salinity, q.salinity)


def test_builtin_profile_is_valid(builtin_profile_path):
    p = load_profile(builtin_profile_path)
    assert p.span == (0.0, 1200.0)
    assert np.all(np.diff(p.temperature) < 0)
    assert np.all(np.diff(p.salinity) > 0)


# -- interpolation and gradients ------------------------------------------------


def test_state_at_node_is_exact():
    p = OceanProfile([10.0, 20.0], [10.0, 8.0], [34.0, 35.0])
    s = state_at(p, 20.0)
    assert (s.temperature, s.salinity) == (8.0, 35.0)


def test_state_at_midpoint():
    p = OceanProfile([10.0, 20.0], [10.0, 8.0], [34.0, 35.0])
    assert state_at(p, 15.0).temperature == pytest.approx(9.0, abs=1e-15)


def test_state_outside_span():
    p = OceanProfile([10.0, 20.0], [10.0, 8.0], [34.0, 35.0])
    with pytest.raises(ValueError, match="outside profile span"):
        state_at(p, 25.0)
    with pytest.raises(ValueError):
        gradients_at(p, 5.0)


@given(st.integers(min_value=0, max_value=3))
def test_interpolation_exact_at_every_node(i):
    p = linear_profile(z=(0.0, 13.0, 40.0, 41.5))
    s = state_at(p, float(p.depth[i]))
    assert s.temperature == p.temperature[i] and s.salinity == p.salinity[i]


@pytest.mark.parametrize("z", [5.0, 50.0, 77.7, 150.0])
def test_linear_profile_gradient(z):
    dT, dS = gradients_at(linear_profile(), z)
    assert dT == pytest.approx(-0.05, rel=1e-12)
    assert dS == pytest.approx(0.01, rel=1e-12)


def test_constant_salinity_has_zero_gradient():
    p = OceanProfile([0.0, 10.0, 20.0], [10.0, 9.0, 8.5], [35.0, 35.0, 35.0])
    assert gradients_at(p, 7.0)[1] == 0.0


def test_gradient_at_knot_is_central_difference():
    # equal spacing: the average of the two adjacent slopes (-0.1 and -0.3)
    p = OceanProfile([0.0, 10.0, 20.0], [10.0, 9.0, 6.0], [34.0, 34.5, 35.5])
    dT, dS = gradients_at(p, 10.0)
    assert dT == pytest.approx(-0.2, abs=1e-15)
    assert dS == pytest.approx(0.075, abs=1e-15)
    # unequal spacing: (T[2] - T[0]) / (z[2] - z[0])
    q = OceanProfile([0.0, 10.0, 40.0], [10.0, 9.0, 6.0], [34.0, 34.5, 35.5])
    assert gradients_at(q, 10.0)[0] == pytest.approx(-4.0 / 40.0, abs=1e-15)
    # one-sided at the ends
    assert gradients_at(q, 0.0)[0] == pytest.approx(-0.1, abs=1e-15)
    assert gradients_at(q, 40.0)[0] == pytest.approx(-0.1, abs=1e-15)


# -- thermodynamics ----------------------------------------------------------------


def test_coefficient_file_round_trip():
    c = load_coefficients()
    assert c["beta0"] == 0.72
    assert parse_coefficients("a = 1.5 # note\n\n# x\nb=2") == {"a": 1.5, "b": 2.0}
    with pytest.raises(ValueError, match="line 1"):
        parse_coefficients("nonsense")


def test_thermo_deterministic():
    s = SeawaterState(12.0, 34.7, 80.0)
    assert thermo_coefficients(s) == thermo_coefficients(SeawaterState(12.0, 34.7, 80.0))


def test_eta_scales_with_epsilon():
    s = SeawaterState(15.0, 35.0, 0.0)
    a, b = thermo_coefficients(s, 1e-5), thermo_coefficients(s, 8e-5)
    assert b.eta / a.eta == pytest.approx(8 ** -0.25, rel=1e-14)
    assert a.nu == b.nu


def test_eta_regression_value():
    # frozen from the independent viscosity/density oracle
    eta_ref = 0.0006407311264057347
    assert seawater_eta_oracle(15.0, 35.0, 1e-5) == pytest.approx(eta_ref, rel=1e-12)
    got = thermo_coefficients(SeawaterState(15.0, 35.0, 0.0), 1e-5).eta
    assert got == pytest.approx(eta_ref, rel=1e-12)


@given(
    st.floats(min_value=-2, max_value=35),
    st.floats(min_value=30, max_value=42),
    st.floats(min_value=0, max_value=2000),
)
def test_thermo_coefficients_positive(t, s, z):
    # oceanic salinities; fresh water below 4 degC has a negative expansion coefficient
    c = thermo_coefficients(SeawaterState(t, s, z))
    for v in (c.alpha_c, c.beta_c, c.eta, c.A, c.B, c.c_T, c.c_S, c.c_TS):
        assert v > 0 and math.isfinite(v)


def test_cold_fresh_water_contracts_on_warming():
    assert thermo_coefficients(SeawaterState(1.0, 0.0, 0.0)).alpha_c < 0


def test_prandtl_numbers_order_of_magnitude():
    c = thermo_coefficients(SeawaterState(20.0, 35.0, 0.0))
    assert 5 < c.prandtl_T < 9
    assert 500 < c.prandtl_S < 1000
    assert c.c_S < c.c_TS < c.c_T


# -- eddy diffusivity ratio --------------------------------------------------------------


def test_dr_branches():
    assert eddy_diffusivity_ratio(1.0) == 1.0
    assert eddy_diffusivity_ratio(-1.0) == 1.0
    assert eddy_diffusivity_ratio(0.75) == pytest.approx(1.85 * 0.75 - 0.85)
    assert eddy_diffusivity_ratio(0.2) == pytest.approx(0.03)
    w = 4.0
    assert eddy_diffusivity_ratio(w) == pytest.approx(w / (w - math.sqrt(w * (w - 1))))


@pytest.mark.parametrize("knot", [0.5, 1.0])
def test_dr_continuous_at_knots(knot):
    left = eddy_diffusivity_ratio(math.nextafter(knot, 0))
    right = eddy_diffusivity_ratio(knot)
    assert abs(left - right) < 1e-12


@given(st.floats(min_value=1e-6, max_value=1e3))
def test_dr_positive_and_increasing(w):
    assert eddy_diffusivity_ratio(w) > 0
    assert eddy_diffusivity_ratio(w * 1.01) >= eddy_diffusivity_ratio(w)


# -- layer parameters --------------------------------------------------------------------


def test_chi_T_arithmetic():
    p = linear_profile(dT=0.05, dS=0.01)
    layer = layer_params(p, 50.0, 1e-5, 1e-5)
    assert layer.chi_T == pytest.approx(2.5e-8, rel=1e-12)


def test_H_ratio():
    p = OceanProfile([0.0, 100.0], [5.0, 15.0], [34.0, 39.0])
    assert layer_params(p, 50.0).H == pytest.approx(2.0, rel=1e-12)


def test_omega_one_gives_dr_one():
    # H = 2 and alpha_c / beta_c = 0.5 -> omega = 1, dr = 1
    from uwocsim.environment import ThermoCoefficients, _assemble_layer

    thermo = ThermoCoefficients(1e-4, 2e-4, 1e-3, 1e-4, 2e-4, 0.01, 1e-4, 1e-3, 1e-6, 7.0, 700.0)
    layer = _assemble_layer(0.1, 0.05, thermo, 1e-5, 1e-5, 10.0, load_coefficients())
    assert layer.H == 2.0
    assert layer.omega == 1.0
    assert layer.dr == 1.0


def test_layer_formulas_consistent():
    p = OceanProfile([0.0, 100.0, 200.0], [20.0, 12.0, 8.0], [34.0, 34.4, 34.6])
    layer = layer_params(p, 60.0, 1e-6, 3e-5)
    dT, dS = gradients_at(p, 60.0)
    a, b, w, dr = layer.alpha_c, layer.beta_c, layer.omega, layer.dr
    assert layer.chi_T == pytest.approx(3e-5 * dT**2, rel=1e-14)
    assert layer.chi_S == pytest.approx(a**2 * layer.chi_T * dr / (w**2 * b**2), rel=1e-14)
    assert layer.chi_TS == pytest.approx(a * layer.chi_T * (1 + dr) / (2 * w * b), rel=1e-14)
    # the stored omega is reproduced bit for bit from the stored fields
    assert (a / b) * abs(layer.H) == w


@given(
    st.floats(min_value=1e-7, max_value=1e-3),
    st.floats(min_value=1e-4, max_value=0.2),
    st.floats(min_value=0.1, max_value=10),
)
def test_chi_T_scaling(K_T, gradient, c):
    p = OceanProfile([0.0, 10.0], [25.0, 25.0 - 10 * gradient], [34.0, 34.5])
    base = layer_params(p, 5.0, 1e-5, K_T).chi_T
    assert layer_params(p, 5.0, 1e-5, c * K_T).chi_T == pytest.approx(c * base, rel=1e-12)
    q = OceanProfile([0.0, 10.0], [25.0, 25.0 - 10 * gradient / 2], [34.0, 34.5])
    assert layer_params(q, 5.0, 1e-5, K_T).chi_T == pytest.approx(base / 4, rel=1e-9)


def test_zero_salinity_gradient_is_an_error():
    p = OceanProfile([0.0, 10.0], [20.0, 19.0], [35.0, 35.0])
    with pytest.raises(DegenerateGradientError):
        layer_params(p, 5.0)


def test_zero_temperature_gradient_is_turbulence_free():
    p = OceanProfile([0.0, 10.0], [20.0, 20.0], [35.0, 35.5])
    layer = layer_params(p, 5.0)
    assert layer.turbulence_free
    assert layer.chi_T == layer.chi_S == layer.chi_TS == 0.0


def test_layer_rejects_nonpositive_inputs():
    with pytest.raises(ValueError):
        layer_params(linear_profile(), 10.0, epsilon=0.0)
    with pytest.raises(ValueError):
        layer_params(linear_profile(), 10.0, K_T=-1.0)
