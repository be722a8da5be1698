import math

import numpy as np
import pytest

from oracles import discrete_screen_variance
from test_spectrum import make_layer
from uwocsim.planner import GridSpec
from uwocsim.screens import (
    PhaseScreen,
    dump_screen,
    generate_screen,
    load_grid,
    make_rng,
    screen_ensemble_stats,
)
from uwocsim.spectrum import PhasePSD, SpectrumParams

N, DELTA, M = 256, 1e-3, 500
GRID = GridSpec(N, DELTA, DELTA, 532e-9, 0.1)
LAYER = make_layer()

# discrete PSD integral with 3 subharmonic levels, from oracles.discrete_screen_variance
ORACLE_VARIANCE = 9.139769400493705
ORACLE_VARIANCE_NO_SUB = 1.898189474119451

# D(r) at lags 1, 2, 4, 8, 16 pixels of the seeded ensemble below, stored from the first run
FROZEN_SF = {
    1: 0.004114144995022285,
    2: 0.01571670240503784,
    4: 0.05835531249613632,
    8: 0.20981176942786128,
    16: 0.6934022852906132,
}


def psd_for(dd):
    return PhasePSD(SpectrumParams(LAYER, 0.72), 532e-9, dd)


@pytest.fixture(scope="module")
def ensemble():
    psd = psd_for(10.0)
    return [generate_screen(GRID, psd, (11, i, 0), 3) for i in range(M)]


@pytest.fixture(scope="module")
def stats(ensemble):
    return screen_ensemble_stats(ensemble)


def test_oracle_values_are_current():
    psd = psd_for(10.0)
    assert discrete_screen_variance(psd, N, DELTA, 0) == pytest.approx(ORACLE_VARIANCE_NO_SUB, rel=1e-12)


def test_variance_matches_discrete_integral(stats):
    assert stats.variance == pytest.approx(ORACLE_VARIANCE, rel=0.05)


def test_ensemble_mean_near_zero(stats):
    sigma = math.sqrt(stats.variance)
    bound = 3 * sigma / math.sqrt(M)
    pixels = [(128, 128), (64, 64), (64, 192), (192, 64), (192, 192), (8, 8), (8, 247), (247, 8), (247, 247)]
    for i, j in pixels:
        assert abs(stats.mean_map[i, j]) <= bound
    assert abs(stats.mean) < 1e-12


def test_piston_removed(ensemble):
    assert max(abs(s.phase.mean()) for s in ensemble[:50]) < 1e-12


def test_structure_function_regression(stats):
    assert set(stats.structure_function) == set(FROZEN_SF)
    for r, v in FROZEN_SF.items():
        assert stats.structure_function[r] == pytest.approx(v, rel=1e-9)
    sf = [stats.structure_function[r] for r in sorted(FROZEN_SF)]
    assert all(a < b for a, b in zip(sf, sf[1:]))


def test_subharmonics_off_matches_fft_only_oracle():
    g = GridSpec(128, DELTA, DELTA, 532e-9, 0.05)
    psd = psd_for(10.0)
    target = discrete_screen_variance(psd, 128, DELTA, 0)
    s = screen_ensemble_stats([generate_screen(g, psd, (5, i, 0), 0) for i in range(M)])
    assert s.variance == pytest.approx(target, rel=0.05)


def test_variance_linear_in_layer_thickness():
    g = GridSpec(128, DELTA, DELTA, 532e-9, 0.05)
    v1 = screen_ensemble_stats([generate_screen(g, psd_for(5.0), (21, i, 0)) for i in range(M)]).variance
    v2 = screen_ensemble_stats([generate_screen(g, psd_for(10.0), (22, i, 0)) for i in range(M)]).variance
    assert v2 / v1 == pytest.approx(2.0, rel=0.05)


def test_deterministic():
    psd = psd_for(10.0)
    a = generate_screen(GRID, psd, (3, 4, 5))
    b = generate_screen(GRID, psd, (3, 4, 5))
    np.testing.assert_array_equal(a.phase, b.phase)
    assert a.seed_tag == (3, 4, 5)
    c = generate_screen(GRID, psd, (3, 4, 6))
    assert not np.array_equal(a.phase, c.phase)


def test_rng_is_keyed_not_sequential():
    x = make_rng((1, 2, 3)).standard_normal(4)
    make_rng((9, 9, 9)).standard_normal(100)
    np.testing.assert_array_equal(make_rng((1, 2, 3)).standard_normal(4), x)


def test_zero_psd_gives_zero_screen():
    s = generate_screen(GRID, lambda k: np.zeros_like(k), 1)
    assert np.all(s.phase == 0.0)


def test_negative_psd_is_clamped():
    s = generate_screen(GRID, lambda k: -np.ones_like(k), 1)
    assert np.all(s.phase == 0.0)


def test_nonfinite_psd_rejected():
    with pytest.raises(ValueError):
        generate_screen(GRID, lambda k: np.full_like(k, np.nan), 1)
    with pytest.raises(ValueError):
        generate_screen(GRID, psd_for(1.0), 1, -1)


def test_identical_screens_have_zero_variance():
    s = generate_screen(GRID, psd_for(1.0), 2)
    st = screen_ensemble_stats([s, s, s])
    # zero up to rounding in the ensemble mean
    assert st.variance <= 1e-28 * float(np.mean(s.phase**2))
    assert all(v > 0.0 for v in st.structure_function.values())


def test_opposite_screens_mean_zero():
    s = generate_screen(GRID, psd_for(1.0), 2)
    st = screen_ensemble_stats([s, PhaseScreen(-s.phase, s.spacing)])
    assert np.all(st.mean_map == 0.0)
    assert st.mean == 0.0


def test_stats_preconditions():
    s = generate_screen(GRID, psd_for(1.0), 2)
    with pytest.raises(ValueError):
        screen_ensemble_stats([s])
    with pytest.raises(ValueError):
        screen_ensemble_stats([s, PhaseScreen(s.phase, 2e-3)])


def test_phase_screen_validation():
    with pytest.raises(ValueError):
        PhaseScreen(np.zeros((4, 5)), 1e-3)
    with pytest.raises(ValueError):
        PhaseScreen(np.full((4, 4), np.inf), 1e-3)


def test_dump_round_trip(tmp_path):
    s = generate_screen(GRID, psd_for(1.0), 8)
    path = tmp_path / "screen.bin"
    dump_screen(path, s)
    raw = path.read_bytes()
    assert raw[:4] == b"UWPS" and len(raw) == 16 + 8 * N * N
    data, spacing = load_grid(path)
    np.testing.assert_array_equal(data, s.phase)
    assert spacing == DELTA
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        load_grid(path)
    path.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        load_grid(path)
