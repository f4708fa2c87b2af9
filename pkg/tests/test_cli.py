import csv
import json

import pytest

from fleetsim.cli import main


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_writes_outputs_and_is_reproducible(tmp_path):
    args = ["simulate", "--policy", "fj+", "--K", "20", "--L", "16", "--reps", "2", "--customers", "1500"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert {"summary.json", "welch.csv", "rep00_jobs.csv", "rep00_pending.csv"} <= set(names)
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    s = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert s["stable"] and s["K"] == 20 and s["seeds"] == [0, 1]
    assert _read(tmp_path / "a" / "welch.csv")[0].keys() == {"n", "T_smoothed"}


def test_invalid_delta_exit_code(tmp_path, capsys):
    assert main(["simulate", "--delta", "0.2", "--out", str(tmp_path)]) == 1
    assert "delta <=" in capsys.readouterr().err


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"K": 1, "L": 1}))
    out = tmp_path / "o"
    rc = main(["simulate", "--config", str(cfg), "--L", "4", "--reps", "2", "--customers", "1000",
               "--out", str(out)])
    s = json.loads((out / "summary.json").read_text())
    assert s["L"] == 4 and s["K"] == 1
    assert rc == 2 and not s["stable"]
    cfg.write_text(json.dumps({"bogus": 3}))
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 1


def test_frontier(tmp_path):
    assert main(["frontier", "--out", str(tmp_path / "p")]) == 0
    rows = _read(tmp_path / "p" / "frontier.csv")
    assert list(rows[0]) == ["L", "T_tread_min", "I_min_usd", "l_star", "K_term"]
    assert rows[0]["L"] == "1" and rows[0]["I_min_usd"] == "49329.14" and rows[0]["K_term"] == "15"
    assert main(["frontier", "--vehicle-rounding", "strict", "--out", str(tmp_path / "s")]) == 0
    assert _read(tmp_path / "s" / "frontier.csv")[0]["K_term"] == "16"
    cfg = tmp_path / "c.json"
    cfg.write_text("{}")
    assert main(["frontier", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1


def test_sweep_rows_and_overlay(tmp_path):
    out = tmp_path / "sw"
    rc = main(["sweep", "--policies", "fj+,nj-", "--K", "1..2", "--L", "1,4", "--reps", "2",
               "--customers", "600", "--escalate-to", "600", "--out", str(out)])
    assert rc == 0
    rows = _read(out / "sweep.csv")
    assert len(rows) == 2 * 2 * 2
    assert [(r["policy"], r["L"], r["K"]) for r in rows][:3] == [("fj+", "1", "1"), ("fj+", "1", "2"), ("fj+", "4", "1")]
    # unstable cells are marked, not timed
    assert all(r["stable"] == "False" and r["T_mean_min"] == "" for r in rows)
    reg = _read(out / "impossible_regions.csv")
    assert [r["L"] for r in reg] == ["1", "4"]
    assert float(reg[1]["T_min_min"]) == pytest.approx(1.530391, abs=1e-6)
    assert main(["frontier", "--sweep", str(out / "sweep.csv"), "--out", str(tmp_path / "f")]) == 0
    assert (tmp_path / "f" / "operating_points.csv").exists()


def test_placement_and_welch(tmp_path):
    assert main(["placement", "--L", "1,4", "--samples", "20000", "--out", str(tmp_path / "pl")]) == 0
    rows = _read(tmp_path / "pl" / "placement.csv")
    assert float(rows[0]["H_L_km"]) == pytest.approx(1.530391, abs=1e-6)
    assert (tmp_path / "pl" / "layout_L4.json").exists()
    sim = tmp_path / "sim"
    main(["simulate", "--K", "20", "--reps", "2", "--customers", "1500", "--out", str(sim)])
    assert main(["welch", "--traces", str(sim), "--out", str(tmp_path / "w")]) == 0
    w = json.loads((tmp_path / "w" / "welch_summary.json").read_text())
    s = json.loads((sim / "summary.json").read_text())
    assert w["n_wu"] == s["n_wu"]
    assert w["T_mean_min"] == pytest.approx(s["T_mean_min"], abs=1e-5)
