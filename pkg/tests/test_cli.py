import csv
import json
import subprocess
import sys
from types import SimpleNamespace

import pytest

from silt.cli import UsageError, load_config, main
from silt.textfmt import parse

TRIGGER = """func @main() {
  %0 = memref.alloc : memref<4xi32>
  %1 = arith.constant {value = 6 : i32} : i32
  linalg.fill %1, %0 : (i32, memref<4xi32>) -> ()
  %2 = index.constant {value = 0 : index} : index
  %3 = memref.load %0, %2 : (memref<4xi32>, index) -> i32
  %4 = arith.constant {value = 0 : i32} : i32
  %5 = arith.muli %3, %4 : (i32, i32) -> i32
  exec.return
}
"""


@pytest.fixture
def trigger(tmp_path):
    f = tmp_path / "t.silt"
    f.write_text(TRIGGER)
    return str(f)


def _args(**kw):
    return SimpleNamespace(**kw)


def test_precedence_flags_env_config_defaults(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"seed": 5, "diffnum": 4, "cases": 9}))
    assert load_config(_args(), env={}).seed == 0
    assert load_config(_args(config=str(conf)), env={}).seed == 5
    assert load_config(_args(config=str(conf)), env={"SILT_SEED": "7"}).seed == 7
    cfg = load_config(_args(config=str(conf), seed=11), env={"SILT_SEED": "7"})
    assert (cfg.seed, cfg.diffnum, cfg.cases) == (11, 4, 9)


def test_bad_config_is_usage_error(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"seeds": 1}))
    with pytest.raises(UsageError):
        load_config(_args(config=str(conf)), env={})
    with pytest.raises(UsageError):
        load_config(_args(), env={"SILT_SEED": "x"})
    with pytest.raises(UsageError):
        load_config(_args(diffnum=1), env={})


def test_exit_codes(tmp_path, trigger, capsys):
    assert main(["run", trigger]) == 0
    assert main(["run", str(tmp_path / "missing.silt")]) == 1
    bad = tmp_path / "bad.silt"
    bad.write_text("func @main( {")
    assert main(["run", str(bad)]) == 1
    assert main(["fuzz", "--diffnum", "1", "--cases", "1"]) == 1
    assert main(["nosuchcommand"]) == 1
    assert main(["opt", trigger]) == 1
    err = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    assert len(err) == 4
    assert all(json.loads(line)["level"] == "error" for line in err)


def test_gen_fix_lower_run_chain(tmp_path, capsys):
    src, fixed, low = tmp_path / "g.silt", tmp_path / "f.silt", tmp_path / "l.silt"
    assert main(["gen", "--seed", "3", "-o", str(src)]) == 0
    assert main(["fix", str(src), "--checksum", "-o", str(fixed), "--trace", str(tmp_path / "t.json")]) == 0
    assert isinstance(json.loads((tmp_path / "t.json").read_text()), list)
    capsys.readouterr()
    assert main(["lower", str(fixed), "--print-plan", "-o", str(low)]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan and all(isinstance(x, str) for x in plan)
    assert {op.kind.split(".")[0] for op in parse(low.read_text()).main.body.entry.ops} == {"exec"}
    assert main(["run", str(fixed)]) == 0
    high = json.loads(capsys.readouterr().out)
    assert main(["run", str(low)]) == 0
    assert json.loads(capsys.readouterr().out)["checksum"] == high["checksum"]
    assert high["status"] == "Finished"


def test_env_seed_for_gen(monkeypatch, capsys):
    monkeypatch.setenv("SILT_SEED", "4")
    assert main(["gen"]) == 0
    a = capsys.readouterr().out
    assert main(["gen", "--seed", "4"]) == 0
    assert capsys.readouterr().out == a
    monkeypatch.setenv("SILT_SEED", "four")
    assert main(["gen"]) == 1


def test_gen_corpus(tmp_path):
    assert main(["gen", "--seed", "0", "--count", "3", "--out-dir", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["count"] == 3


def test_opt_with_fault(trigger, tmp_path, capsys):
    out, obs = tmp_path / "o.silt", tmp_path / "c.silt"
    assert main(["fix", trigger, "--checksum", "-o", str(obs)]) == 0
    assert main(["opt", str(obs), "--passes", "dce,fold-constants", "--faults", "fold-mul-zero", "-o", str(out)]) == 0
    assert main(["run", str(out)]) == 0
    bugged = json.loads(capsys.readouterr().out)["checksum"]
    assert main(["run", trigger]) == 0
    assert json.loads(capsys.readouterr().out)["checksum"] != bugged


def test_diff_reports_silent(trigger, tmp_path, capsys):
    rc = main(["diff", trigger, "--faults", "fold-mul-zero", "--optnum-each", "3", "--diffnum", "6",
               "--out", str(tmp_path)])
    bugs = tmp_path / "bugs.jsonl"
    assert rc == 0
    keys = {json.loads(line)["dedup_key"] for line in bugs.read_text().splitlines()}
    assert "silent:arith.muli|fold-constants" in keys


def test_fuzz_is_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        assert main(["fuzz", "--seed", "1", "--cases", "4", "--faults", "unroll-iv",
                     "--out", str(tmp_path / d)]) == 0
    for name in ("summary.json", "bugs.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_writes_csv_and_png(tmp_path, capsys):
    out = tmp_path / "sw"
    assert main(["sweep", "--seed", "0", "--cases", "2", "--optnum-each", "1,2",
                 "--diffnum", "2,3", "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert [(r["param"], r["value"]) for r in rows] == [
        ("optnum_each", "1"), ("optnum_each", "2"), ("diffnum", "2"), ("diffnum", "3")]
    assert (out / "sweep.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert len(list(out.glob("*=*/summary.json"))) == 4
    assert main(["sweep", "--cases", "1", "--out", str(out)]) == 1


def test_console_script_entry_point(trigger):
    r = subprocess.run([sys.executable, "-m", "silt.cli", "run", trigger, "--mode", "native"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["status"] == "Finished"
