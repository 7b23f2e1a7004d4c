import json
import subprocess
import sys

import numpy as np
import pytest

from modehom import cli


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run(args, capsys=None):
    code = cli.main(args)
    err = capsys.readouterr().err if capsys else ""
    return code, err


def test_predict_u3(tmp_path):
    cfg = write(tmp_path, {"unitary": "u3"})
    assert cli.main(["predict", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
    rows = json.loads((tmp_path / "predict.json").read_text())["rows"]
    assert len(rows) == 9
    dips = [r for r in rows if r["kind"] == "dip"]
    bumps = [r for r in rows if r["kind"] == "bump"]
    assert len(dips) == 6 and len(bumps) == 3
    assert all(abs(r["visibility"] - 0.5) < 1e-12 for r in dips)
    assert all(abs(r["visibility"] - 1) < 1e-12 for r in bumps)
    assert (tmp_path / "predict.csv").read_text().startswith("p,q,r_cl,r_qu,visibility,kind")


def test_global_flags_before_subcommand(tmp_path):
    cfg = write(tmp_path, {"unitary": "rot3"})
    assert cli.main(["--config", cfg, "--out", str(tmp_path), "--quiet", "predict"]) == 0
    rows = json.loads((tmp_path / "predict.json").read_text())["rows"]
    assert len(rows) == 9


def test_json_floats_roundtrip_exactly(tmp_path):
    cfg = write(tmp_path, {"unitary": "u4:0.3"})
    cli.main(["predict", "--config", cfg, "--out", str(tmp_path), "--quiet"])
    rows = json.loads((tmp_path / "predict.json").read_text())["rows"]
    direct = cli.predict_table({"unitary": "u4:0.3"})
    for a, b in zip(rows, direct):
        assert a["r_cl"] == b["r_cl"] and a["r_qu"] == b["r_qu"]


def test_gamma_column(tmp_path):
    cfg = write(tmp_path, {"unitary": "u2", "gamma": 0.5, "projectors": [["l-1", "l+1"]]})
    cli.main(["predict", "--config", cfg, "--out", str(tmp_path), "--quiet"])
    (row,) = json.loads((tmp_path / "predict.json").read_text())["rows"]
    assert row["rate_at_gamma"] == pytest.approx(0.25, abs=1e-15)


def test_scan_no_noise_recovers_prediction(tmp_path):
    cfg = write(tmp_path, {"unitary": "u2", "projectors": [["l-1", "l+1"], ["D", "A"], ["l+1", "l+1"]]})
    assert cli.main(["scan", "--config", cfg, "--out", str(tmp_path), "--no-noise", "--quiet"]) == 0
    for s in json.loads((tmp_path / "scan_summary.json").read_text())["scans"]:
        assert abs(s["fitted"] - s["predicted"]) < 1e-6
    names = {p.name for p in tmp_path.iterdir()}
    assert {"scan_00_l-1_l+1.csv", "scan_00_l-1_l+1.json", "scan_00_l-1_l+1_corrected.csv", "scan_00_l-1_l+1_fit.json"} <= names


def test_scan_is_deterministic(tmp_path):
    cfg = write(tmp_path, {"unitary": "u3", "seed": 5, "projectors": [["3d:l-1", "3d:l0"]]})
    for d in ("a", "b"):
        cli.main(["scan", "--config", cfg, "--out", str(tmp_path / d), "--quiet"])
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    cli.main(["scan", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "6", "--quiet"])
    a = (tmp_path / "a" / "scan_00_3dl-1_3dl0.csv").read_bytes()
    assert a != (tmp_path / "c" / "scan_00_3dl-1_3dl0.csv").read_bytes()


def test_fit_subcommand_matches_scan(tmp_path):
    cfg = write(tmp_path, {"unitary": "rot3", "seed": 2})
    cli.main(["scan", "--config", cfg, "--out", str(tmp_path), "--quiet"])
    cli.main(["fit", "--config", cfg, "--out", str(tmp_path), "--quiet"])
    scans = {s["scan"]: s["fitted"] for s in json.loads((tmp_path / "scan_summary.json").read_text())["scans"]}
    for f in json.loads((tmp_path / "fit_summary.json").read_text())["fits"]:
        # the refit does not know the sign in advance; the magnitude agrees
        assert abs(f["fitted"]) == pytest.approx(abs(scans[f["scan"]]), abs=1e-6)


def test_free_fit_option(tmp_path):
    cfg = write(tmp_path, {"unitary": "u2", "projectors": [["l-1", "l+1"]], "scan": {"fit": "free"}})
    assert cli.main(["scan", "--config", cfg, "--out", str(tmp_path), "--no-noise", "--quiet"]) == 0
    (s,) = json.loads((tmp_path / "scan_summary.json").read_text())["scans"]
    assert s["fitted"] == pytest.approx(1, abs=1e-6)


def test_witness_ideal_and_threshold(tmp_path):
    cfg = write(tmp_path, {"unitary": "u2"})
    cli.main(["witness", "--config", cfg, "--out", str(tmp_path), "--quiet"])
    w = json.loads((tmp_path / "witness.json").read_text())
    assert w["w"] == 3 and w["entangled"]
    cfg = write(tmp_path, {"unitary": "u2", "witness": {"visibilities": [0.33, 0.33, 0.33]}}, "sub.json")
    cli.main(["witness", "--config", cfg, "--out", str(tmp_path / "sub"), "--quiet"])
    w = json.loads((tmp_path / "sub" / "witness.json").read_text())
    assert w["w"] == pytest.approx(0.99) and not w["entangled"]


def test_witness_from_counts(tmp_path):
    counts = [[100, 0, 0, 100]] * 3
    cfg = write(tmp_path, {"unitary": "u2", "witness": {"counts": counts}})
    cli.main(["witness", "--config", cfg, "--out", str(tmp_path), "--quiet"])
    assert json.loads((tmp_path / "witness.json").read_text())["w"] == pytest.approx(3)


@pytest.mark.parametrize(
    "cfg",
    [
        {"unitary": "u7"},
        {"unitary": [[1, 1], [0, 1]]},
        {"unitary": "u2", "gamma": 2},
        {"unitary": "u2", "bogus": 1},
        {"unitary": "u2", "inputs": ["l-1", "l-1"]},
    ],
)
def test_config_errors_exit_2(tmp_path, capsys, cfg):
    code, err = run(["predict", "--config", write(tmp_path, cfg), "--out", str(tmp_path)], capsys)
    assert code == 2
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["exit_code"] == 2 and payload["message"]


def test_missing_config_file_exit_2(tmp_path, capsys):
    code, _ = run(["predict", "--config", str(tmp_path / "nope.json")], capsys)
    assert code == 2


def test_fit_without_scans_exit_2(tmp_path, capsys):
    code, _ = run(["fit", "--config", write(tmp_path, {}), "--out", str(tmp_path / "empty")], capsys)
    assert code == 2


def test_unitary_from_file(tmp_path):
    U = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    (tmp_path / "u.json").write_text(json.dumps(U.tolist()))
    cfg = write(tmp_path, {"unitary": "u.json"})
    assert cli.main(["predict", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0


def test_design_and_transfer_small_grid(tmp_path):
    cfg = write(
        tmp_path,
        {
            "unitary": "u2",
            "grid": {"nx": 64, "ny": 64, "dx": 80e-6, "dy": 80e-6},
            "wfm": {"sweep_count": 5},
        },
    )
    assert cli.main(["design", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
    rep = json.loads((tmp_path / "wfm_report.json").read_text())
    assert rep["sweeps"] == 5
    assert sorted(p.name for p in (tmp_path / "design").iterdir())[0] == "design.json"
    args = ["transfer", "--config", cfg, "--out", str(tmp_path), "--design", str(tmp_path / "design")]
    assert cli.main(args + ["--wavelengths", "8.05e-7", "8.1e-7", "--quiet"]) == 0
    metrics = json.loads((tmp_path / "transfer.json").read_text())["metrics"]
    assert len(metrics) == 2 and all(0 <= m["mean_efficiency"] <= 1 for m in metrics)


def test_schema_file_in_sync():
    from pathlib import Path

    path = Path(__file__).parents[1] / "schema" / "config.schema.json"
    assert json.loads(path.read_text()) == cli.CONFIG_SCHEMA


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "modehom.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "predict" in out.stdout
