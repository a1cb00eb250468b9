import json

import numpy as np
import pytest

from onfscatter.cli import EXIT_ANALYSIS, EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from onfscatter.config import config_hash, load_config


def _cfg(tmp_path, **sections):
    base = {"synthesis": {"dz_um": 2.0}, "seed": 11}
    base.update(sections)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(base))
    return str(path)


def _run(tmp_path, *argv, cfg=None, out="out"):
    args = ["--out", str(tmp_path / out)]
    if cfg is not None:
        args = ["--config", cfg] + args
    return main(args + list(argv))


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    cfg = _cfg(d)
    assert _run(d, "synth", cfg=cfg) == EXIT_OK
    return d, cfg


def test_synth_writes_trace_with_sidecar(synth_dir):
    d, cfg = synth_dir
    out = d / "out"
    assert (out / "trace.csv").read_text().startswith("z_mm,p_long,p_trans,p_total\n")
    side = json.loads((out / "trace.json").read_text())
    assert side["config_sha256"] == config_hash(load_config(cfg))
    assert side["seed"] == 11
    assert side["waist_mm"][1] - side["waist_mm"][0] == pytest.approx(5.0)
    assert "<svg" in (out / "trace.svg").read_text()


def test_synth_is_byte_deterministic(synth_dir, tmp_path):
    d, cfg = synth_dir
    assert _run(tmp_path, "synth", cfg=cfg) == EXIT_OK
    assert (tmp_path / "out" / "trace.csv").read_bytes() == (d / "out" / "trace.csv").read_bytes()
    assert (tmp_path / "out" / "trace.json").read_bytes() == (d / "out" / "trace.json").read_bytes()


def test_seed_flag_changes_noise(synth_dir, tmp_path):
    d, cfg = synth_dir
    assert _run(tmp_path, "--seed", "12", "synth", cfg=cfg) == EXIT_OK
    assert (tmp_path / "out" / "trace.csv").read_bytes() != (d / "out" / "trace.csv").read_bytes()


@pytest.mark.parametrize("pair", [None, "HE21e:TM01"])
def test_analyze_recovers_waist(synth_dir, tmp_path, pair):
    d, cfg = synth_dir
    argv = ["analyze", str(d / "out" / "trace.csv")] + (["--pair", pair] if pair else [])
    assert _run(tmp_path, *argv, cfg=cfg) == EXIT_OK
    res = json.loads((tmp_path / "out" / "radius.json").read_text())
    assert res["aw_nm"] == pytest.approx(360.0, abs=0.5)
    assert res["config_sha256"] == config_hash(load_config(cfg))
    if pair is None:
        assert res["identification"]["fits"][0]["pair"] == "HE21e:TM01"
        assert res["identification"]["ratio"] > 1.5
    side = json.loads((tmp_path / "out" / "spectrogram.json").read_text())
    assert "config_sha256" in side and side["channel"] == "transverse"


def test_analyze_bad_csv_is_data_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("z_mm,p_long,p_trans,p_total\n0,1,2\n")
    assert _run(tmp_path, "analyze", str(bad)) == EXIT_DATA
    bad.write_text("time,x\n0,1\n")
    assert _run(tmp_path, "analyze", str(bad)) == EXIT_DATA


def test_analyze_missing_file_is_config_error(tmp_path):
    assert _run(tmp_path, "analyze", str(tmp_path / "nope.csv")) == EXIT_CONFIG


def test_analyze_flat_trace_is_analysis_failure(tmp_path):
    z = np.arange(4000) * 2e-3
    rows = "\n".join(f"{v:.6f},1,1,2" for v in z)
    path = tmp_path / "flat.csv"
    path.write_text("z_mm,p_long,p_trans,p_total\n" + rows + "\n")
    code = _run(tmp_path, "analyze", str(path), "--pair", "HE21e:TM01", "--waist-mm", "1", "6")
    assert code == EXIT_ANALYSIS


def test_usage_and_config_errors(tmp_path):
    assert main([]) == EXIT_CONFIG
    assert main(["--out", str(tmp_path), "frobnicate"]) == EXIT_CONFIG
    assert _run(tmp_path, "--seed", "-1", "profile") == EXIT_CONFIG
    assert _run(tmp_path, "--threads", "0", "profile") == EXIT_CONFIG
    assert _run(tmp_path, "profile", cfg=str(tmp_path / "missing.json")) == EXIT_CONFIG
    (tmp_path / "broken.json").write_text("{not json")
    assert _run(tmp_path, "profile", cfg=str(tmp_path / "broken.json")) == EXIT_CONFIG
    assert _run(tmp_path, "profile", cfg=_cfg(tmp_path, bogus={})) == EXIT_CONFIG
    assert _run(tmp_path, "profile", cfg=_cfg(tmp_path, profile={"aw_nm": 70000})) == EXIT_CONFIG
    assert _run(tmp_path, "dispersion", "--a-nm", "500", "400", "5") == EXIT_CONFIG
    assert _run(tmp_path, "dispersion", "--a-nm", "400", "500", "5", "--v", "1", "2", "3") == EXIT_CONFIG
    assert _run(tmp_path, "beat", "--pair", "HE21e") == EXIT_CONFIG


def test_dispersion_output(tmp_path):
    assert _run(tmp_path, "dispersion", "--a-nm", "300", "500", "5") == EXIT_OK
    lines = (tmp_path / "out" / "dispersion.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header[:3] == ["a_nm", "V", "HE11"]
    assert "TM01" in header and "TE01" in header
    first = dict(zip(header, lines[1].split(",")))
    # 300 nm lies between the TM01 and HE21 cutoffs
    assert first["HE21"] == "" and float(first["TM01"]) > 1.0 and float(first["HE11"]) > 1.0
    assert "config_sha256" in json.loads((tmp_path / "out" / "dispersion.json").read_text())


def test_cutoffs_preset(tmp_path, capsys):
    assert _run(tmp_path, "cutoffs", "--v-max", "4", "--preset", "sm1500") == EXIT_OK
    esc = json.loads((tmp_path / "out" / "core_escape.json").read_text())
    assert esc["core_escape_um"] == pytest.approx(15.82, abs=0.01)
    assert "core escape" in capsys.readouterr().out


def test_cutoffs_default_fiber(tmp_path):
    assert _run(tmp_path, "cutoffs", "--v-max", "3") == EXIT_OK
    rows = (tmp_path / "out" / "cutoffs.csv").read_text().splitlines()[1:]
    labels = [r.split(",")[0] for r in rows]
    assert labels[0] == "HE11"
    he21 = [r for r in rows if r.startswith("HE21,")][0].split(",")
    assert float(he21[2]) == pytest.approx(332.686, abs=1e-3)


def test_profile_and_beat(tmp_path):
    assert _run(tmp_path, "profile", "--pitch-um", "50") == EXIT_OK
    out = tmp_path / "out"
    assert (out / "profile.csv").read_text().startswith("z_mm,a_nm\n")
    assert json.loads((out / "profile.json").read_text())["aw_nm"] == pytest.approx(360.0, rel=1e-12)
    assert _run(tmp_path, "beat", "--pair", "HE21e:TM01", "--points", "501") == EXIT_OK
    rows = np.loadtxt(out / "beat.csv", delimiter=",", skiprows=1)
    assert rows.shape == (501, 3)
    assert rows[:, 2].max() == pytest.approx(32.537, abs=0.01)
    assert json.loads((out / "beat.json").read_text())["truncated"] is False


def test_beat_truncated_below_cutoff(tmp_path, capsys):
    cfg = _cfg(tmp_path, profile={"aw_nm": 320.0})
    assert _run(tmp_path, "beat", "--pair", "HE21e:TM01", "--points", "401", cfg=cfg) == EXIT_OK
    meta = json.loads((tmp_path / "out" / "beat.json").read_text())
    assert meta["truncated"] is True and len(meta["cutoff_z_mm"]) == 2
    assert "truncated" in capsys.readouterr().out


def test_fit_radius(tmp_path, capsys):
    code = _run(tmp_path, "fit-radius", "--center-per-mm", "32.537", "--pair", "HE21e:TM01", "--a-guess-nm", "360")
    assert code == EXIT_OK
    res = json.loads((tmp_path / "out" / "radius.json").read_text())
    assert res["aw_nm"] == pytest.approx(360.0, abs=0.01)
    assert res["sigma_index_nm"] == pytest.approx(0.55, abs=0.05)
    assert "a_w =" in capsys.readouterr().out


def test_fit_radius_outside_curve_is_analysis_failure(tmp_path):
    assert _run(tmp_path, "fit-radius", "--center-per-mm", "500", "--pair", "HE21e:TM01") == EXIT_ANALYSIS


def test_hwpscan(tmp_path):
    cfg = _cfg(tmp_path, profile={"aw_nm": 365.0, "Lw_mm": 2.0, "omega_mrad": 3.0, "neck_mm": 0.5},
               synthesis={"dz_um": 2.0, "noise": None})
    assert _run(tmp_path, "hwpscan", "--alpha-deg", "0", "90", "15", cfg=cfg) == EXIT_OK
    out = tmp_path / "out"
    head = (out / "hwpscan.csv").read_text().splitlines()[0].split(",")
    assert head == ["freq_per_mm", "a0", "a15", "a30", "a45", "a60", "a75", "a90"]
    meta = json.loads((out / "hwpscan.json").read_text())
    assert meta["alpha_deg"] == [0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0]
    bands = np.loadtxt(out / "bands.csv", delimiter=",", skiprows=1)
    assert bands[3, 1] < 1e-6 * bands[:, 1].max()
    assert bands[0, 2] < 1e-6 * bands[:, 2].max()
    assert _run(tmp_path, "hwpscan", "--alpha-deg", "0", "90", "0", cfg=cfg) == EXIT_CONFIG
