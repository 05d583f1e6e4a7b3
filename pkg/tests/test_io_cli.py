import json
import os

import numpy as np
import pytest

from conftest import make_heatmap
from stsfit.cli import RunConfig, main, parse_grid_override
from stsfit.io import HeatmapFormatError, heatmap_from_dict, heatmap_to_dict, load_heatmap, save_heatmap
from stsfit.synth import StsHeatmap


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    paths = {}
    for name, snr in (("anticrossing", 19), ("far-detuned", 19)):
        p = d / f"{name}.json"
        assert main(["synth", "--preset", name, "--snr", str(snr), "--seed", "4", "--out", str(p)]) == 0
        paths[name] = p
    return d, paths


@pytest.fixture(scope="module")
def fitted(files):
    d, paths = files
    out = d / "fit-a"
    assert main(["fit", "--input", str(paths["anticrossing"]), "--out", str(out)]) == 0
    return out


def test_heatmap_round_trip_is_exact(tmp_path):
    hm = make_heatmap(snr=10, seed=3)
    path = tmp_path / "h.json"
    save_heatmap(path, hm)
    back = load_heatmap(path)
    np.testing.assert_array_equal(back.s21, hm.s21)
    np.testing.assert_array_equal(back.currents, hm.currents)
    np.testing.assert_array_equal(back.probe_freqs, hm.probe_freqs)
    assert back.meta["truth"] == hm.meta["truth"]


def test_format_validation():
    d = heatmap_to_dict(make_heatmap())
    with pytest.raises(HeatmapFormatError):
        heatmap_from_dict({**d, "format": "other/2"})
    broken = dict(d)
    del broken["s21_imag"]
    with pytest.raises(HeatmapFormatError):
        heatmap_from_dict(broken)
    with pytest.raises(HeatmapFormatError):
        heatmap_from_dict([1, 2])


def test_load_errors_exit_1(tmp_path, files):
    _, paths = files
    text = paths["anticrossing"].read_text()
    bad = tmp_path / "truncated.json"
    bad.write_text(text[: len(text) // 2])
    assert main(["fit", "--input", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert main(["fit", "--input", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"format": "nope"}))
    assert main(["fit", "--input", str(wrong), "--out", str(tmp_path / "o")]) == 1


def test_flat_map_exits_2(tmp_path):
    hm = make_heatmap()
    flat = StsHeatmap(hm.currents, hm.probe_freqs, np.ones_like(hm.s21), {})
    path = tmp_path / "flat.json"
    save_heatmap(path, flat)
    assert main(["fit", "--input", str(path), "--out", str(tmp_path / "o")]) == 2


def test_synth_options(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["synth", "--zero-noise", "--seed", "1", "--out", str(a)]) == 0
    assert main(["synth", "--zero-noise", "--seed", "2", "--out", str(b)]) == 0
    np.testing.assert_array_equal(load_heatmap(a).s21, load_heatmap(b).s21)
    c = tmp_path / "c.json"
    assert main(["synth", "--preset", "qubit-below", "--d", "0.2", "--n-currents", "41",
                 "--noise-sd", "0.01", "--out", str(c)]) == 0
    hm = load_heatmap(c)
    assert hm.s21.shape == (41, 101)
    assert hm.meta["truth"]["d"] == 0.2 and hm.meta["noise_sd"] == 0.01


def test_fit_outputs(fitted):
    names = set(os.listdir(fitted))
    assert {"report.json", "timing.json", "spectrum.csv", "fit.svg", "residuals.svg"} <= names
    rep = json.loads((fitted / "report.json").read_text())
    assert rep["schema"] == "stsfit-report/1"
    assert set(rep["fit"]["parameters"]) == {"f_c_hz", "g_hz", "period_a", "i_ss_a",
                                             "f_ge_max_hz", "d"}
    assert rep["alternates"] == []
    assert "input" not in rep["config"]
    err = rep["truth"]["error"]
    assert abs(err["g_hz"]) < 1e6 and abs(err["period_a"]) < 1e-6
    timing = json.loads((fitted / "timing.json").read_text())
    assert timing["total_s"] > 0
    assert (fitted / "fit.svg").read_text().startswith("<svg")
    head = (fitted / "spectrum.csv").read_text().splitlines()[0]
    assert "current" in head


def test_report_is_deterministic(files, fitted):
    d, paths = files
    out = d / "fit-b"
    assert main(["fit", "--input", str(paths["anticrossing"]), "--out", str(out)]) == 0
    assert (out / "report.json").read_bytes() == (fitted / "report.json").read_bytes()


def test_far_detuned_reports_alternate(files):
    d, paths = files
    out = d / "fit-far"
    assert main(["fit", "--input", str(paths["far-detuned"]), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert len(rep["alternates"]) == 1


def test_config_file_and_overrides(tmp_path, files):
    _, paths = files
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"hint": "below", "threshold_k": 4.0, "bogus": 1}))
    assert main(["fit", "--config", str(cfg), "--input", str(paths["anticrossing"])]) == 1
    cfg.write_text(json.dumps({"hint": "below", "threshold_k": 4.0}))
    out = tmp_path / "o"
    assert main(["fit", "--config", str(cfg), "--hint", "auto", "--input",
                 str(paths["anticrossing"]), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["hint"] == "auto" and rep["config"]["threshold_k"] == 4.0


def test_grid_override_parsing():
    assert parse_grid_override("g=1e6:5e7:7") == ("g", 1e6, 5e7, 7)
    with pytest.raises(ValueError):
        parse_grid_override("g=1:2")
    with pytest.raises(ValueError):
        RunConfig(grid_overrides=["period=1:2:3"])
    cfg = RunConfig(grid_overrides=["d=0:0.5:6"])
    assert cfg.grid().d == (0.0, 0.5, 6)
    with pytest.raises(ValueError):
        RunConfig(hint="left")


def test_sweep_smoke(tmp_path):
    src = tmp_path / "clean.json"
    assert main(["synth", "--zero-noise", "--out", str(src)]) == 0
    out = tmp_path / "sw"
    assert main(["sweep", "--input", str(src), "--out", str(out), "--snr", "19", "--reps", "2"]) == 0
    sw = json.loads((out / "sweep.json").read_text())
    assert sw["reps"] == 2 and sw["divergences"] == [0]
    assert any(n.startswith("sweep_") and n.endswith(".svg") for n in os.listdir(out))
