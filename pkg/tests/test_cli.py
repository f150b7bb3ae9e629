import json

import pytest

from dnl.cli import main
from dnl.config import build_domain, build_model, config_hash, load_config, merged
from dnl.errors import ConfigError


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


class TestConfig:
    def test_defaults(self):
        dom, E, phi = build_model({})
        assert dom.node_count == 18 and E.p == 2.0 and phi.to_config()["kind"] == "identity"

    def test_domains(self, tmp_path):
        assert build_domain({"grid1d": {"n": 3}}).node_count == 5
        assert build_domain({"grid2d": {"nx": 2, "ny": 3, "h": 0.5}}).node_count == 20
        inline = build_domain({"grid1d": {"n": 2, "h": 0.5}}).to_json()
        assert build_domain(inline).node_count == 4
        path = write_json(tmp_path / "d.json", inline)
        assert build_domain({"file": path}).node_count == 4
        with pytest.raises(ConfigError):
            build_domain({"sphere": {}})

    def test_load_errors(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "bad.json")
        with pytest.raises(ConfigError):
            load_config(write_json(tmp_path / "list.json", [1, 2]))

    def test_merge_and_hash(self):
        base = {"a": {"x": 1}, "b": 2}
        out = merged(base, {"a": {"y": 3}})
        assert out == {"a": {"y": 3}, "b": 2} and base["a"] == {"x": 1}
        assert config_hash({"b": 1, "a": 2}) == config_hash({"a": 2, "b": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})


class TestSolve:
    def test_linear_one_node(self, tmp_path, capsys):
        f = write_json(tmp_path / "f.json", {"f": [0.0, 3.0, 0.0]})
        assert main(["solve", "--grid1d", "1", "--h", "1", "--lambda", "1", "--f", f]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["u"][1] == pytest.approx(1.0, rel=1e-14)
        assert {"u", "w", "residual", "iterations"} <= set(out)

    def test_config_file_and_out(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"domain": {"grid1d": {"n": 16}}, "energy": {"kind": "p_dirichlet", "p": 3},
                                               "phi": {"kind": "power", "m": 2}})
        out = tmp_path / "sol.json"
        assert main(["solve", "--config", cfg, "--lambda", "0.01", "--nu", "0", "--out", str(out)]) == 0
        sol = json.loads(out.read_text())
        assert len(sol["u"]) == 18 and sol["residual"] <= 1e-10

    def test_dimension_mismatch(self, tmp_path, capsys):
        f = write_json(tmp_path / "f.json", [1.0, 2.0])
        assert main(["solve", "--grid1d", "4", "--lambda", "1", "--f", f]) == 2
        assert "expected 6 values" in capsys.readouterr().err

    def test_bad_lambda(self, capsys):
        assert main(["solve", "--grid1d", "2", "--lambda", "-1"]) == 2

    def test_nonconvergence_exit(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"energy": {"kind": "p_dirichlet", "p": 4}, "phi": {"kind": "power", "m": 3}})
        assert main(["solve", "--config", cfg, "--lambda", "100", "--tol", "1e-300"]) == 1

    def test_missing_file(self):
        assert main(["solve", "--config", "/nonexistent/c.json", "--lambda", "1"]) == 2


class TestAudit:
    def test_default_passes(self, tmp_path):
        out = tmp_path / "r.json"
        assert main(["audit", "--seed", "42", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["passed"] is True

    def test_planted_defect_fails(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "c.json", {"energy": {"kind": "concave_quadratic"}, "trials": 10, "h1_trials": 10})
        assert main(["audit", "--config", cfg]) == 1
        assert "FAIL" in capsys.readouterr().err


class TestEvolveSweepSuite:
    def test_evolve(self, tmp_path):
        out, table = tmp_path / "t.json", tmp_path / "t.csv"
        assert main(["evolve", "--grid1d", "8", "--t", "0.5", "--steps", "4", "--out", str(out), "--csv", str(table)]) == 0
        traj = json.loads(out.read_text())
        assert len(traj["trajectory"]) == 5
        assert table.read_text().splitlines()[0] == "step,time,L1,L2,Linf,mass"

    def test_evolve_bad_steps(self):
        assert main(["evolve", "--grid1d", "4", "--steps", "0"]) == 2

    def test_sweep(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"domain": {"grid1d": {"n": 8, "h": 1.0}}, "lambda_list": [1.0, 0.1]})
        assert main(["sweep", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 0
        lines = (tmp_path / "o" / "sweep.csv").read_text().splitlines()
        assert lines[0].startswith("profile,lambda,l1_error")
        assert len(lines) == 1 + 3 * 2

    def test_sweep_empty_lambdas(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"lambda_list": []})
        assert main(["sweep", "--config", cfg]) == 2

    def test_suite(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {
            "domain": {"grid1d": {"n": 8, "h": 1.0}}, "p_values": [2.0], "m_values": [1.0],
            "lambda_list": [1.0, 0.5], "audit": {"trials": 5, "h1_trials": 5, "sandwich_trials": 1},
            "evolution": {"p": 2.0, "m": 1.0, "profile": "bump", "t_final": 0.1, "n_steps": 2}})
        assert main(["suite", "--config", cfg, "--seed", "3", "--out-dir", str(tmp_path / "b")]) == 0
        manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
        assert manifest["seed"] == 3 and manifest["passed"]

    def test_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["nope"])
        assert info.value.code == 2
