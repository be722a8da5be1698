import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from uwocsim.campaign import (
    BER_FILE,
    EXIT_NUMERICAL,
    EXIT_VALIDATION,
    HISTOGRAM_FILE,
    PLAN_FILE,
    PROVENANCE_FILE,
    REPORT_FILE,
    SAMPLES_FILE,
    ArtifactError,
    CampaignConfig,
    ConfigError,
    StageError,
    parse_snr_range,
    read_report,
    read_samples,
    run_campaign,
    stage_ber,
    stage_fit,
    stage_gof,
    stage_plan,
    stage_simulate,
)
from uwocsim.fading.distributions import ALL_FAMILIES

SMALL = """\
# desk-scale link
N = 64
delta1 = 1e-3
delta2 = 1e-3
w0 = 0.01
D_a = 0.02
d_T = 50
d_L = 10
N_p = 2
realizations = 120
seed = 3
models = Weibull,GG,WGG
snr_db = 0:30:5
"""

ARTIFACTS = (PLAN_FILE, SAMPLES_FILE, REPORT_FILE, HISTOGRAM_FILE, BER_FILE)


def small_config(**kw):
    return replace(CampaignConfig.from_text(SMALL), **kw)


def assert_nesting(report):
    fits = report.fits
    wgg = fits["WGG"].loglik
    assert wgg >= fits["Weibull"].loglik - 1e-6
    assert wgg >= fits["GG"].loglik - 1e-6


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return run_campaign(small_config(), out)


def test_config_parsing():
    cfg = CampaignConfig.from_text(SMALL)
    assert cfg.N == 64 and cfg.d_T == 50.0 and cfg.models == ("Weibull", "GG", "WGG")
    assert cfg.snr_db == (0.0, 30.0, 5.0)
    assert cfg.absorber is True and cfg.sampling == "aperture"
    again = CampaignConfig.from_text(cfg.to_text())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()
    assert replace(cfg, workers=4, output_dir="x").config_hash() == cfg.config_hash()
    assert replace(cfg, seed=4).config_hash() != cfg.config_hash()


def test_defaults_are_table_values():
    cfg = CampaignConfig()
    assert (cfg.N, cfg.delta1, cfg.wavelength, cfg.d_T, cfg.d_L, cfg.N_p, cfg.realizations) == (1024, 0.25e-3, 532e-9, 20.0, 70.0, 10, 2000)


@pytest.mark.parametrize(
    "text, match",
    [
        ("N = 64\nN = 128\n", "duplicate"),
        ("colour = red\n", "unknown config key"),
        ("N 64\n", "expected key = value"),
        ("N = sixty\n", "bad value for N"),
        ("w0 = -1\n", "w0 must be a positive"),
        ("realizations = 0\n", "realizations"),
        ("models = Weibull,Rician\n", "unknown models"),
        ("snr_db = 10:0:1\n", "start < stop"),
        ("sampling = random\n", "sampling"),
        ("absorber = maybe\n", "absorber"),
    ],
)
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        CampaignConfig.from_text(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        CampaignConfig.from_file(tmp_path / "nope.cfg")


def test_relative_profile_resolves_against_config_dir(tmp_path, builtin_profile_path):
    (tmp_path / "p.csv").write_bytes(builtin_profile_path.read_bytes())
    (tmp_path / "c.cfg").write_text("profile = p.csv\n")
    assert CampaignConfig.from_file(tmp_path / "c.cfg").profile == str(tmp_path / "p.csv")


def test_parse_snr_range():
    assert parse_snr_range("0:50:1") == (0.0, 50.0, 1.0)
    for bad in ("0:50", "a:b:c", "0:50:0"):
        with pytest.raises(ConfigError):
            parse_snr_range(bad)


def test_run_emits_all_artifacts(full_run):
    names = {p.name for p in full_run.files}
    assert names == set(ARTIFACTS) | {PROVENANCE_FILE}
    assert full_run.samples.count == 120
    assert full_run.samples.mean() == pytest.approx(1.0, abs=1e-9)
    prov = json.loads((full_run.output_dir / PROVENANCE_FILE).read_text())
    assert prov["seed"] == 3 and prov["config_hash"] == small_config().config_hash()
    assert prov["skipped_stages"] == []
    assert "code_version" in prov and "created_utc" in prov
    assert_nesting(full_run.report)
    curve = full_run.curves["WGG"]
    assert list(curve.snr_db) == [0, 5, 10, 15, 20, 25, 30]
    assert np.all(np.diff(curve.average_ber) <= 0)


def test_sample_csv_format(full_run):
    with open(full_run.output_dir / SAMPLES_FILE, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["realization", "received_power", "normalized_intensity"]
    assert [int(r[0]) for r in rows[1:]] == list(range(120))
    s = read_samples(full_run.output_dir / SAMPLES_FILE)
    np.testing.assert_array_equal(s.intensities, full_run.samples.intensities)
    hist_head = (full_run.output_dir / HISTOGRAM_FILE).read_text().splitlines()[0]
    assert hist_head == "bin_left,bin_right,density"


def test_stage_composition_is_bit_identical(full_run, tmp_path):
    cfg = small_config()
    stage_plan(cfg, tmp_path)
    stage_simulate(cfg, tmp_path)
    stage_fit(tmp_path / SAMPLES_FILE, tmp_path, cfg.models, seed=cfg.seed)
    stage_gof(tmp_path / SAMPLES_FILE, tmp_path / REPORT_FILE, tmp_path)
    stage_ber(tmp_path / REPORT_FILE, tmp_path, cfg.snr_db)
    for name in ARTIFACTS:
        assert (tmp_path / name).read_bytes() == (full_run.output_dir / name).read_bytes(), name


def test_rerun_is_deterministic(full_run, tmp_path):
    again = run_campaign(small_config(), tmp_path)
    for name in ARTIFACTS:
        assert (tmp_path / name).read_bytes() == (full_run.output_dir / name).read_bytes(), name
    assert_nesting(again.report)


def test_workers_do_not_change_samples(full_run, tmp_path):
    stage_simulate(small_config(workers=2, realizations=120), tmp_path)
    assert (tmp_path / SAMPLES_FILE).read_bytes() == (full_run.output_dir / SAMPLES_FILE).read_bytes()


def test_pixel_sampling_mode(tmp_path):
    s = stage_simulate(small_config(sampling="pixel", realizations=3), tmp_path)
    # pixel centres within 1 cm of the axis on a 1 mm grid: i^2 + j^2 <= 100
    per = sum(1 for i in range(-10, 11) for j in range(-10, 11) if i * i + j * j <= 100)
    assert per == 317
    assert s.count == 3 * per
    assert s.mean() == pytest.approx(1.0, abs=1e-9)


def test_single_realization_skips_fitting(tmp_path):
    res = run_campaign(small_config(realizations=1), tmp_path)
    assert res.samples.count == 1
    for f in res.report.fits.values():
        assert f.params is None and f.flagged and "insufficient data" in f.message
    assert res.provenance["skipped_stages"] == ["ber: no converged WGG fit"]
    assert not (tmp_path / BER_FILE).exists()


def test_failed_run_removes_partial_outputs(tmp_path):
    out = tmp_path / "fresh"
    # a link deeper than the profile fails at simulate, after plan.txt was written
    with pytest.raises(StageError) as info:
        run_campaign(small_config(d_T=5000.0), out)
    assert info.value.exit_code == EXIT_VALIDATION
    assert "[simulate]" in str(info.value)
    assert not out.exists()
    keep = tmp_path / "existing"
    keep.mkdir()
    (keep / "notes.txt").write_text("mine")
    with pytest.raises(StageError):
        run_campaign(small_config(d_T=5000.0), keep)
    assert [p.name for p in keep.iterdir()] == ["notes.txt"]


def test_plan_stage_error_is_tagged(tmp_path):
    with pytest.raises(StageError, match=r"\[plan\].*violates") as info:
        stage_plan(small_config(N_p=1, d_L=2000.0, delta1=1e-4, delta2=1e-4), tmp_path)
    assert info.value.exit_code == EXIT_VALIDATION


def test_plan_report_for_table_config(tmp_path):
    stage_plan(CampaignConfig(), tmp_path)
    text = (tmp_path / PLAN_FILE).read_text()
    assert "delta_d_max_m = 120.30" in text and "n_screens_min = 1" in text


def test_ber_requires_converged_wgg(full_run, tmp_path):
    doc = json.loads((full_run.output_dir / REPORT_FILE).read_text())
    doc["models"] = [m for m in doc["models"] if m["family"] != "WGG"]
    (tmp_path / REPORT_FILE).write_text(json.dumps(doc))
    with pytest.raises(StageError, match="WGG") as info:
        stage_ber(tmp_path / REPORT_FILE, tmp_path)
    assert info.value.exit_code == EXIT_VALIDATION
    doc = json.loads((full_run.output_dir / REPORT_FILE).read_text())
    for m in doc["models"]:
        if m["family"] == "WGG":
            m["converged"] = False
    (tmp_path / REPORT_FILE).write_text(json.dumps(doc))
    with pytest.raises(StageError, match="did not converge"):
        stage_ber(tmp_path / REPORT_FILE, tmp_path)


def test_fit_external_samples(tmp_path):
    x = np.random.default_rng(0).weibull(1.8, 400) * 7.0
    path = tmp_path / "external.csv"
    path.write_text("normalized_intensity\n" + "\n".join(repr(v) for v in x.tolist()) + "\n")
    report = stage_fit(path, tmp_path, ("Weibull", "GG", "WGG"))
    assert report.n_samples == 400
    assert report.fits["Weibull"].params.beta == pytest.approx(1.8, rel=0.15)
    assert_nesting(report)
    _, scored = stage_gof(path, tmp_path / REPORT_FILE, tmp_path, n_bins=40)
    assert scored.n_bins == 40
    assert read_report(tmp_path / REPORT_FILE).fits["GG"].r2 == pytest.approx(scored.fits["GG"].r2)


def test_artifact_errors(tmp_path, full_run):
    with pytest.raises(StageError, match="not found"):
        stage_fit(tmp_path / "missing.csv", tmp_path)
    bad = tmp_path / "bad.csv"
    bad.write_text("power\n1\n2\n")
    with pytest.raises(StageError, match="received_power or normalized_intensity"):
        stage_fit(bad, tmp_path)
    short = tmp_path / "short.csv"
    short.write_text("received_power\n1.0\n2.0\n")
    with pytest.raises(StageError, match="covers 120 samples"):
        stage_gof(short, full_run.output_dir / REPORT_FILE, tmp_path)
    (tmp_path / "junk.json").write_text("{}")
    with pytest.raises(StageError, match="not a valid fit report"):
        stage_ber(tmp_path / "junk.json", tmp_path)
    with pytest.raises(ArtifactError):
        read_samples(tmp_path / "missing.csv")


def test_error_codes_are_distinct():
    assert EXIT_VALIDATION == 2 and EXIT_NUMERICAL == 3


def test_all_models_by_default():
    assert CampaignConfig().models == ALL_FAMILIES
