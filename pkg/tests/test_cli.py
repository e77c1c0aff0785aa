import json
import shutil
import subprocess
import sys

import pytest

from p4fuzz import fixture_path, fixture_text
from p4fuzz.cli import main
from p4fuzz.instrument import load_instrumented


@pytest.fixture
def work(tmp_path):
    for p in fixture_path("running_example.p4").parent.iterdir():
        if p.is_file():
            shutil.copy(p, tmp_path / p.name)
    return tmp_path


def test_instrument_writes_outputs(work, capsys):
    src = work / "running_example.p4"
    assert main(["instrument", str(src), "--assert", "assert ttl_ok(ipv4.ttl != 0)"]) == 0
    out = work / "running_example.fp4.p4"
    layout = json.loads((work / "running_example.fp4.layout.json").read_text())
    assert layout["width"] == 8 and len(layout["bits"]) == 5
    iir = load_instrumented(out.read_text())
    assert [b.assertion for b in iir.layout.assertions] == ["ttl_ok"]
    assert "8-bit fp4 header" in capsys.readouterr().out


def test_instrument_explicit_paths(work):
    assert main(["instrument", str(work / "vlan.p4"), "-o", str(work / "o.p4"),
                 "--layout", str(work / "l.json")]) == 0
    assert (work / "o.p4").exists() and (work / "l.json").exists()


def test_instrument_syntax_error(work, capsys):
    bad = work / "bad.p4"
    bad.write_text("header_type h_t { fields { a : 8; }\n")
    assert main(["instrument", str(bad)]) == 1
    assert ":" in capsys.readouterr().err


def test_instrument_width_overflow(work, capsys):
    # the limit counts visited and assertion bits; firewall has 8 of them
    assert main(["instrument", str(work / "firewall.p4"), "--max-width", "8"]) == 0
    assert main(["instrument", str(work / "firewall.p4"), "--max-width", "7"]) == 1
    assert "8 visited/assertion bits exceed the 7-bit limit" in capsys.readouterr().err


def test_instrument_missing_file(work):
    assert main(["instrument", str(work / "nope.p4")]) == 2


def test_analyze_running_example(work, capsys):
    assert main(["analyze", str(work / "running_example.p4")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# 2 seed templates")
    assert "# dependency graph: 5 edges" in out and out.count("->") - out.count(" -> ipv4") >= 5


def test_analyze_empty_parser(work, capsys):
    p = work / "empty.p4"
    p.write_text("control ingress { }\n")
    assert main(["analyze", str(p)]) == 0
    assert capsys.readouterr().out.startswith("# 1 seed templates")


def test_fuzz_mirroring_bug_exit_3(work, capsys):
    assert main(["fuzz", str(work / "mirroring_bug.conf"), "-q"]) == 3
    report = json.loads((work / "mirroring_bug.report.json").read_text())
    assert len(report["violations"]) == 1 and report["violations"][0]["assertion"] == "mirrored"
    assert (work / "mirroring_bug.coverage.csv").read_text().startswith("wall_ms,")
    assert main(["report", str(work / "mirroring_bug.report.json")]) == 3
    assert "violations  1" in capsys.readouterr().out


def test_fuzz_running_example_clean(work, capsys):
    assert main(["fuzz", str(work / "running_example.conf"), "--deterministic"]) == 0
    out = capsys.readouterr().out
    assert "(100.0%)" in out
    report = json.loads((work / "running_example.report.json").read_text())
    assert report["coverage"] == 1.0 and report["config"]["time_budget"] is None


def test_fuzz_bad_probabilities(work, capsys):
    conf = work / "bad.conf"
    conf.write_text("program = running_example.p4\np_magic = 0.9\np_table = 0.5\np_random = 0.05\n")
    assert main(["fuzz", str(conf)]) == 1
    err = capsys.readouterr().err
    assert "p_magic" in err and "1.5" in err


def test_fuzz_missing_program(work, capsys):
    conf = work / "missing.conf"
    conf.write_text("program = nowhere.p4\n")
    assert main(["fuzz", str(conf)]) == 2
    assert "nowhere.p4" in capsys.readouterr().err


def test_fuzz_missing_config(work):
    assert main(["fuzz", str(work / "absent.conf")]) == 2


def test_fuzz_unwritable_report(work):
    assert main(["fuzz", str(work / "running_example.conf"), "--iterations", "10", "-q",
                 "--report", str(work / "no" / "dir" / "r.json")]) == 2


def test_deterministic_needs_iterations(work, capsys):
    conf = work / "t.conf"
    conf.write_text("program = running_example.p4\niterations = none\ntime_budget = 1\n")
    assert main(["fuzz", str(conf), "--deterministic"]) == 1
    assert "iteration budget" in capsys.readouterr().err


def test_seed_precedence(work, monkeypatch):
    conf = str(work / "running_example.conf")
    rep = work / "r.json"

    def seed(*extra):
        assert main(["fuzz", conf, "-q", "--iterations", "5", "--report", str(rep), *extra]) == 0
        return json.loads(rep.read_text())["config"]["seed"]

    assert seed() == 0
    monkeypatch.setenv("FP4_SEED", "5")
    assert seed() == 5
    assert seed("--seed", "7") == 7
    monkeypatch.setenv("FP4_SEED", "five")
    assert main(["fuzz", conf, "-q"]) == 1


def test_deterministic_runs_identical(work, capsys):
    conf = str(work / "firewall.conf")
    texts = []
    rep = work / "r.json"
    for _ in range(2):
        assert main(["fuzz", conf, "--deterministic", "-q", "--report", str(rep)]) == 0
        assert main(["report", str(rep), "--json", "--no-wall-clock"]) == 0
        texts.append(capsys.readouterr().out)
    assert texts[0] == texts[1]


def test_report_rejects_garbage(work):
    p = work / "x.json"
    p.write_text('{"hello": 1}')
    assert main(["report", str(p)]) == 1
    p.write_text("not json")
    assert main(["report", str(p)]) == 1
    assert main(["report", str(work / "gone.json")]) == 2


def test_python_dash_m(work):
    r = subprocess.run([sys.executable, "-m", "p4fuzz", "analyze", str(work / "vlan.p4")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "seed templates" in r.stdout


def test_fixture_text_matches_file():
    assert fixture_text("mirroring.p4") == fixture_path("mirroring.p4").read_text()
