import json

import numpy as np
import pytest

from nv_deer.errors import DivisionDegenerate, EnvMismatch, ValidationError
from nv_deer.io.config import default_config, parse_config
from nv_deer.io.manifest import load_manifest, verify_outputs
from nv_deer.io.runner import (
    build_env,
    concentration_report,
    run_analyze,
    run_fit_decay,
    run_fit_odmr,
    run_holeburn,
    run_mc_bath,
    run_simulate,
)
from nv_deer.io.serialization import read_json, read_traces


def test_simulate_deer3_writes_traces_and_manifest(tmp_path, deer3_config):
    cfg = parse_config(json.dumps(deer3_config))
    result = run_simulate(cfg, tmp_path)
    names = sorted(p.name for p in result.outputs)
    assert names == ["manifest.json", "traces.csv", "traces.meta.json"]
    manifest = load_manifest(tmp_path / "manifest.json")
    assert manifest.config_hash == cfg.config_hash
    assert manifest.seed == 7
    assert all(verify_outputs(manifest, tmp_path).values())
    trace, tomo = read_traces(tmp_path / "traces.csv")
    assert len(trace) == 41
    assert trace.meta["tau_s"] == pytest.approx(41e-6)


def test_fitted_rate_recovers_simulated_rate(tmp_path, deer3_config):
    cfg = parse_config(json.dumps(deer3_config))
    run_simulate(cfg, tmp_path / "sim")
    result = run_fit_decay(cfg, tmp_path / "sim" / "traces.csv", tmp_path / "fit")
    assert result.summary["rate"] == pytest.approx(6300.0, rel=0.05)
    assert (tmp_path / "fit" / "fit_decay.json").exists()
    assert "complex_decay" in result.reports


def test_deer4_rate_and_normalization(tmp_path, deer3_config):
    doc = dict(deer3_config, experiment="deer4",
               scan={"variable": "pump_offset_us", "start": 1, "stop": 81, "points": 41})
    cfg = parse_config(json.dumps(doc))
    run_simulate(cfg, tmp_path / "sim")
    result = run_fit_decay(cfg, tmp_path / "sim" / "traces.csv", tmp_path / "fit")
    assert result.summary["rate"] == pytest.approx(6300.0, rel=0.05)


def test_concentration_closure(tmp_path, deer3_config):
    doc = dict(deer3_config, kinetics={"concentration_ppb": 50, "flip_probability": 0.68})
    cfg = parse_config(json.dumps(doc))
    run_simulate(cfg, tmp_path / "sim")
    result = run_analyze(cfg, tmp_path / "analysis", data_path=tmp_path / "sim" / "traces.csv")
    assert result.summary["concentration_theory_ppb"] == pytest.approx(50.0, rel=0.01)
    stored = read_json(tmp_path / "analysis" / "concentration.json")
    assert stored["concentration_theory_ppb"] == pytest.approx(50.0, rel=0.01)


def test_concentration_report_uses_both_rate_constants():
    cfg = default_config()
    report = concentration_report(cfg, 6.3e3, 0.2e3)
    ratio = report["concentration_empirical_ppb"] / report["concentration_theory_ppb"]
    assert ratio == pytest.approx(report["k_theory_cm3_per_s"] / report["k_empirical_cm3_per_s"])
    assert report["concentration_theory_ppb_err"] == pytest.approx(report["concentration_theory_ppb"] * 0.2 / 6.3)
    assert report["excited_theory_ppb"] == pytest.approx(0.68 * report["concentration_theory_ppb"])
    with pytest.raises(DivisionDegenerate):
        concentration_report(cfg, 0.0, 0.0)


def test_analyze_needs_exactly_one_source(tmp_path):
    with pytest.raises(ValidationError):
        run_analyze(default_config(), tmp_path, rate=1e3, report_path=tmp_path / "fit.json")


def test_analyze_from_report(tmp_path, deer3_config):
    cfg = parse_config(json.dumps(deer3_config))
    run_simulate(cfg, tmp_path / "sim")
    run_fit_decay(cfg, tmp_path / "sim" / "traces.csv", tmp_path / "fit")
    result = run_analyze(default_config(), tmp_path / "analysis", report_path=tmp_path / "fit" / "fit_decay.json")
    assert result.summary["rate_per_s"] == pytest.approx(6300.0, rel=0.05)
    assert not (tmp_path / "analysis" / "fit_decay.json").exists()


def test_fit_decay_needs_metadata(tmp_path, deer3_config):
    cfg = parse_config(json.dumps(deer3_config))
    run_simulate(cfg, tmp_path / "sim")
    (tmp_path / "sim" / "traces.meta.json").unlink()
    with pytest.raises(EnvMismatch):
        run_fit_decay(cfg, tmp_path / "sim" / "traces.csv", tmp_path / "fit")
    assert not (tmp_path / "fit").exists()


def test_odmr_simulate_and_fit(tmp_path):
    doc = {"experiment": "odmr", "seed": 3, "field": {"magnitude_G": 23},
           "spectroscopy": {"odmr_rabi_MHz": 0.3, "odmr_us": 1.6667},
           "scan": {"variable": "frequency_MHz", "start": 2629.5, "stop": 2641.5, "points": 241}}
    cfg = parse_config(json.dumps(doc))
    run_simulate(cfg, tmp_path / "sim")
    result = run_fit_odmr(cfg, tmp_path / "sim" / "spectrum.csv", tmp_path / "fit")
    report = result.reports["odmr"]
    centers = sorted(report.params[f"f{i}"] for i in (1, 2, 3))
    assert centers[1] == pytest.approx(2.7e9 - 2.8e6 * 23, abs=0.1e6)
    assert centers[2] - centers[0] == pytest.approx(2 * 2.16e6, abs=0.2e6)


def test_holeburn_pipeline(tmp_path):
    doc = {"experiment": "holeburn", "seed": 3, "field": {"magnitude_G": 23},
           "scan": {"variable": "frequency_MHz", "start": 2629.5, "stop": 2641.5, "points": 241}}
    cfg = parse_config(json.dumps(doc))
    result = run_simulate(cfg, tmp_path / "sim")
    assert {p.name for p in result.outputs} >= {"holeburn.csv", "reference.csv"}
    burned = run_holeburn(cfg, tmp_path / "sim" / "holeburn.csv", tmp_path / "sim" / "reference.csv",
                          tmp_path / "fit")
    stored = read_json(tmp_path / "fit" / "holeburn_efficiency.json")
    assert 0.0 < burned.summary["efficiency"] < 0.5
    assert stored["flipped_fraction_orientation"] == pytest.approx(4 * stored["flipped_fraction_all"])


def test_plot_scripts_on_request(tmp_path, deer3_config):
    doc = dict(deer3_config, output={"plot_script": True})
    result = run_simulate(parse_config(json.dumps(doc)), tmp_path)
    assert "traces.gp" in {p.name for p in result.outputs}


def test_mc_bath_run(tmp_path):
    doc = {"experiment": "mc_bath", "seed": 4,
           "bath": {"decay_rate_per_s": 6300, "polarization": 0.5, "n_realizations": 400,
                    "chunk_size": 100, "estimator": "expected"},
           "scan": {"variable": "time_us", "start": 0, "stop": 300, "points": 11}}
    cfg = parse_config(json.dumps(doc))
    result = run_mc_bath(cfg, tmp_path)
    stored = read_json(tmp_path / "fit_mc.json")
    assert stored["derived"]["analytic_rate_per_s"] == pytest.approx(6300.0)
    assert result.summary["rate"] == pytest.approx(6300.0, rel=0.3)
    assert (tmp_path / "mc_trace.csv").exists()


def test_bath_env_realizations(deer3_config):
    doc = dict(deer3_config)
    del doc["kinetics"]
    doc["bath"] = {"decay_rate_per_s": 6300, "realizations_per_point": 5}
    cfg = parse_config(json.dumps(doc))
    env = build_env(cfg, t_max=cfg.tau)
    assert len(env.bath) == 5
    assert env.analytic_kernel is None
    assert [b.stream for b in env.bath] == [(i,) for i in range(5)]
    assert np.all([b.flip_probability == 0.68 for b in env.bath])
