import csv
import json

import pytest

from intertwine.cli import CHECKS, ConfigError, build_jobs, load_suite, main


def _write(path, obj):
    path.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return str(path)


def test_emit_polynomials_rows(tmp_path):
    out = tmp_path / "m.csv"
    code = main(["emit-polynomials", "--family", "meixner", "--nmax", "5", "--alpha", "1",
                 "--p", "0.5", "--xmax", "20", "--out", str(out)])
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["n", "x", "value"]
    assert len(rows) - 1 == 126
    assert rows[1] == ["0", "0", "1.0"]
    # monic Meixner of degree 1 at x=0 is -a p / (1 - p) = -1
    assert float(rows[22][2]) == pytest.approx(-1.0)


def test_unknown_check_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path / "bad.json", {"checks": [{"check": "no_such_check"}]})
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "unknown check" in capsys.readouterr().err


def test_malformed_json_reports_line(tmp_path, capsys):
    cfg = _write(tmp_path / "broken.json", '{\n  "checks": [\n    {"check": "orthogonality",}\n  ]\n}')
    assert main(["run", "--config", cfg]) == 2
    assert "line 3" in capsys.readouterr().err


def test_invalid_parameters_exit_2(tmp_path):
    cfg = _write(tmp_path / "p.json", {"checks": [{"check": "duality", "system": {"c": [[0, 1], [1, 0]]}}]})
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_missing_config_exit_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2


def test_suite_shape_is_validated(tmp_path):
    with pytest.raises(ConfigError):
        load_suite(_write(tmp_path / "x.json", [1, 2]))


def test_bundled_suites_resolve():
    for name in ["paper-core", "gsip-mc"]:
        cfg = load_suite(name)
        assert cfg["checks"]
        assert all(e["check"] in CHECKS for e in cfg["checks"])
        assert build_jobs(cfg)


def test_failing_check_exits_1(tmp_path):
    cfg = _write(tmp_path / "f.json", {"checks": [
        {"check": "duality", "system": {"m": 2, "c": [[0, 1], [1, 0]], "alpha": [1, 1], "sigma": 1},
         "theta": 0.5, "kinds": ["classical"], "times": [0.5], "xi": [1, 0], "eta": [1, 1],
         "tolerance": -1.0}]})
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_core_suite_passes_and_is_byte_stable(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", "paper-core", "--out", str(a)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out
    assert main(["run", "--config", "paper-core", "--out", str(b)]) == 0
    for name in ["report.json", "report.csv"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    header = (a / "report.csv").read_text().splitlines()[0]
    assert header == "check,lhs,rhs,diff,tol_or_se,pass"
    reports = json.loads((a / "report.json").read_text())
    assert all(r["passed"] for r in reports)


def test_thread_count_does_not_change_output(tmp_path, monkeypatch):
    cfg = _write(tmp_path / "s.json", {"seed": 3, "samples": 3000, "checks": [
        {"check": "pascal_sampler", "alpha": {"cells": [1.0, 2.0]}, "p": 0.4,
         "cells": [[0.0, 0.5], [0.5, 1.0]], "functions": [[[[0.0, 0.5], 0.5]]]},
        {"check": "gsip_reduction", "alpha": {"cells": [1.0, 2.0]},
         "c": {"kind": "piecewise", "edges": [0.0, 0.5, 1.0], "d": [[1.0, 0.5], [0.5, 2.0]]},
         "eta0": [0.1, 0.7], "t": 0.5}]})
    monkeypatch.setenv("INTERTWINE_THREADS", "1")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "one")]) in (0, 1)
    monkeypatch.setenv("INTERTWINE_THREADS", "4")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "four")]) in (0, 1)
    assert (tmp_path / "one" / "report.json").read_bytes() == (tmp_path / "four" / "report.json").read_bytes()


def test_seed_override(tmp_path):
    cfg = {"seed": 5, "checks": [{"check": "partition_identities", "instances": 5}]}
    jobs = build_jobs(cfg, seed=9)
    assert len(jobs) == 1


def test_sample_pascal_cmd(tmp_path):
    cfg = _write(tmp_path / "pp.json", {"alpha": {"cells": [1.0, 2.0, 0.5, 1.5]}, "p": 0.5})
    out = tmp_path / "counts.csv"
    assert main(["sample-pascal", "--config", cfg, "--samples", "10000", "--seed", "1", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["cell0", "cell1", "cell2", "cell3"]
    assert len(rows) == 10_001
    assert all(int(v) >= 0 for v in rows[1])
    again = tmp_path / "again.csv"
    main(["sample-pascal", "--config", cfg, "--samples", "10000", "--seed", "1", "--out", str(again)])
    assert out.read_bytes() == again.read_bytes()


def test_simulate_gsip_cmd(tmp_path):
    cfg = _write(tmp_path / "g.json", {"alpha": {"cells": [1.0, 2.0]}, "c": {"kind": "constant", "kappa": 1.0},
                                       "eta0": [0.1, 0.6], "t_end": 2.0})
    out = tmp_path / "traj.jsonl"
    assert main(["simulate-gsip", "--config", cfg, "--seed", "3", "--out", str(out)]) == 0
    lines = [json.loads(s) for s in out.read_text().splitlines()]
    assert lines[-1]["event"] == "end" and len(lines[-1]["state"]) == 2
    for ev in lines[:-1]:
        assert set(ev) == {"time", "event", "particle", "origin", "destination"}


def test_simulate_gsip_bad_input(tmp_path):
    cfg = _write(tmp_path / "g.json", {"alpha": {"cells": [1.0]}, "c": {"kind": "constant", "kappa": 1.0},
                                       "eta0": [0.1], "t_end": -1})
    assert main(["simulate-gsip", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_stationarity_default_cells_refine_alpha_grid(tmp_path):
    entry = {"check": "gsip_stationarity", "alpha": {"cells": [1.0, 2.0, 0.5, 1.5]}, "p": 0.5,
             "c": {"kind": "constant", "kappa": 1.0}, "times": [0.5]}
    cfg = _write(tmp_path / "st.json", {"seed": 2, "samples": 2000, "checks": [entry]})
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) in (0, 1)
    comps = json.loads((tmp_path / "report.json").read_text())[0]["details"]["components"]
    assert sum(k.startswith("chi2") for k in comps) == 4
    one = dict(entry, cells=[[0.0, 1.0]])
    assert main(["run", "--config", _write(tmp_path / "one.json", {"checks": [one]}),
                 "--out", str(tmp_path)]) == 2
