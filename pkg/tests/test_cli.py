import csv
import json
import subprocess
import sys

import pytest

from kernelcal.cli import main

TOY = {"m": 2, "T": 3, "info": [0.0, 1.0], "lambda_C": 0.3, "lambda_G": 1.0, "n_samples": 2}


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_toy_ok(tmp_path, capsys):
    cfg = _write(tmp_path / "toy.json", TOY)
    assert main(["toy", "--config", cfg, "--out", str(tmp_path / "o"), "--seeds", "0..1"]) == 0
    assert (tmp_path / "o" / "summary.json").exists()


def test_full_experiment_config_accepted(tmp_path):
    cfg = _write(tmp_path / "e.json", {"kind": "toy", "payload": TOY, "seeds": "0", "output_dir": str(tmp_path / "o")})
    assert main(["toy", "--config", cfg]) == 0
    wrong = _write(tmp_path / "w.json", {"kind": "bloom", "payload": {}})
    assert main(["toy", "--config", wrong]) == 2


def test_config_errors_exit_2(tmp_path, capsys):
    bad = _write(tmp_path / "bad.json", {"world": {"velocity": [0.1]}})
    assert main(["bloom", "--config", bad, "--out", str(tmp_path / "o")]) == 2
    assert "$.payload.world.velocity" in capsys.readouterr().err
    assert main(["toy", "--config", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "garbage.json").write_text("{not json")
    assert main(["toy", "--config", str(tmp_path / "garbage.json")]) == 2
    assert main(["toy", "--config", _write(tmp_path / "t.json", TOY), "--seeds", "5..1"]) == 2


def test_unwritable_out_exit_2(tmp_path):
    (tmp_path / "f").write_text("x")
    cfg = _write(tmp_path / "toy.json", TOY)
    assert main(["toy", "--config", cfg, "--out", str(tmp_path / "f" / "sub")]) == 2


def test_thermo_missing_trace_exit_2(tmp_path):
    assert main(["thermo", "--trace", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")]) == 2


def test_thermo_jsonl_trace(tmp_path):
    tr = tmp_path / "trace.jsonl"
    tr.write_text("".join(json.dumps({"info": v}) + "\n" for v in [0.0, 0.5, 0.4, 1.0]))
    assert main(["thermo", "--trace", str(tr), "--kbt", "2.0", "--out", str(tmp_path / "o")]) == 0
    with open(tmp_path / "o" / "ledger.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[-1]["cumulative"]) == pytest.approx(2.0 * (0.5 + 0.6))


def _metrics(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return str(path)


def _row(seed, policy, v, E_max=3.0):
    return {"seed": seed, "policy": policy, "rmse_surface": v, "rmse_subsurface": v, "E_max": E_max, "N_max": 8, "speed": 0.05}


def test_compare_exit_codes(tmp_path):
    a = _metrics(tmp_path / "a.csv", [_row(s, "adaptive", 0.5) for s in range(10)])
    f = _metrics(tmp_path / "f.csv", [_row(s, "fixed_a", 1.0) for s in range(10)])
    out = tmp_path / "cmp.json"
    assert main(["compare", "--adaptive", a, "--fixed", f, "--out", str(out)]) == 0
    assert json.loads(out.read_text())["metrics"]["rmse_surface"]["wins"] == 10
    f2 = _metrics(tmp_path / "f2.csv", [_row(s, "fixed_a", 1.0, E_max=2.0) for s in range(10)])
    assert main(["compare", "--adaptive", a, "--fixed", f2]) == 4
    f3 = _metrics(tmp_path / "f3.csv", [_row(s + 1, "fixed_a", 1.0) for s in range(10)])
    assert main(["compare", "--adaptive", a, "--fixed", f3]) == 4


def test_bloom_partial_failure_exit_3(tmp_path, monkeypatch):
    import kernelcal.bloomsim as bs

    real = bs.run_episode

    def flaky(cfg, seed):
        if seed == 1:
            raise RuntimeError("boom")
        return real(cfg, seed)

    monkeypatch.setattr(bs, "run_episode", flaky)
    cfg = _write(tmp_path / "b.json", {"budget": {"horizon_steps": 10}, "world": {"n_grid": 8}})
    code = main(["bloom", "--config", cfg, "--seeds", "0..2", "--out", str(tmp_path / "o")])
    assert code == 3
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert [r["status"] for r in man["runs"]] == ["ok", "failed", "ok"]


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "kernelcal.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for sub in ("toy", "thermo", "fixedpoints", "bloom"):
        assert sub in r.stdout
