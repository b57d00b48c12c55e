import json
import math

import numpy as np
import pytest

from anncalc.ann_core import RELU, load, realize
from anncalc.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def built(tmp_path):
    net, rep = tmp_path / "net.json", tmp_path / "rep.json"
    code = run("build", "--problem", "decay", "--d", 2, "--T", 1, "--eps", 0.1, "--out", net, "--report", rep)
    return code, net, rep


class TestBuild:
    def test_happy_path(self, built):
        code, net, rep = built
        assert code == 0
        body = json.loads(rep.read_text())
        assert body["measured_weighted_error"] <= 0.1
        assert body["resolved_config"]["seed"] == 0
        assert body["resolved_config"]["g"] == "relu-sum-g"
        assert body["network_path"] == str(net)
        ann = load(net.read_bytes())
        assert body["params"] == sum(W.size + b.size for W, b in ann.layers)
        assert json.loads(net.read_text())["config"]["eps"] == 0.1

    def test_network_realizes_flow(self, built):
        _, net, _ = built
        ann = load(net.read_bytes())
        X = np.random.default_rng(42).uniform(-3, 3, size=(50, 2))
        truth = np.maximum(math.exp(-1) * X, 0).sum(axis=1)
        w = 1 / (1 + np.linalg.norm(X, axis=1))
        assert np.max(w * np.abs(realize(ann, RELU, X)[:, 0] - truth)) <= 0.1

    def test_byte_identical(self, tmp_path, built):
        _, net, rep = built
        net2, rep2 = tmp_path / "net2.json", tmp_path / "rep2.json"
        assert run("build", "--problem", "decay", "--d", 2, "--T", 1, "--eps", 0.1, "--out", net2,
                   "--report", rep2) == 0
        assert load(net.read_bytes()).bit_identical(load(net2.read_bytes()))
        a, b = json.loads(net.read_text()), json.loads(net2.read_text())
        for doc in (a, b):
            doc["config"].pop("out"), doc["config"].pop("report")
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
        a, b = json.loads(rep.read_text()), json.loads(rep2.read_text())
        a.pop("network_path"), b.pop("network_path")
        a["resolved_config"].pop("out"), b["resolved_config"].pop("out")
        a["resolved_config"].pop("report"), b["resolved_config"].pop("report")
        assert a == b


class TestEval:
    def test_prints_value(self, built, capsys):
        _, net, _ = built
        capsys.readouterr()
        assert run("eval", "--net", net, "--point", "1,0") == 0
        value = float(capsys.readouterr().out.strip())
        assert abs(value - math.exp(-1)) <= 0.1 * 2

    def test_missing_file(self, tmp_path, capsys):
        assert run("eval", "--net", tmp_path / "nope.json", "--point", "1,0") == 1
        assert "FileNotFound" in capsys.readouterr().err

    def test_bad_point(self, built):
        _, net, _ = built
        assert run("eval", "--net", net, "--point", "1, x") == 1
        assert run("eval", "--net", net, "--point", "1,0,0") == 1


class TestInvalid:
    def test_unknown_command(self, capsys):
        assert run("train") == 1
        assert "unknown command" in capsys.readouterr().err

    def test_no_command(self):
        assert run() == 1

    def test_missing_flag(self, tmp_path, capsys):
        assert run("build", "--problem", "decay", "--d", 2, "--out", tmp_path / "n.json") == 1
        assert "--eps" in capsys.readouterr().err
        assert not (tmp_path / "n.json").exists()

    def test_unknown_problem(self, tmp_path):
        assert run("build", "--problem", "heat", "--d", 2, "--eps", 0.1, "--out", tmp_path / "n.json") == 1

    def test_bad_eps(self, tmp_path):
        assert run("build", "--problem", "decay", "--d", 2, "--eps", 0, "--out", tmp_path / "n.json") == 1


class TestSweep:
    def test_rotation_grid(self, tmp_path, capsys):
        csv = tmp_path / "out.csv"
        code = run("sweep", "--problem", "rotation", "--d", "1,2,4,8", "--eps", "0.2,0.1,0.05", "--csv", csv)
        lines = csv.read_text().splitlines()
        assert lines[0].startswith("# ")
        assert json.loads(lines[0][2:])["resolved_config"]["seed"] == 0
        assert lines[1] == "d,eps,n,params,param_bound,weighted_error,pass"
        rows = lines[2:]
        assert len(rows) == 12
        passes = {r.rsplit(",", 1)[1] for r in rows}
        assert code == (0 if passes == {"true"} else 2)
        assert code == 0

    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            run("sweep", "--problem", "decay", "--d", "1,2,3", "--eps", "0.2,0.1,0.05", "--seed", 7,
                "--csv", path)
        assert a.read_bytes().split(b"\n", 1)[1] == b.read_bytes().split(b"\n", 1)[1]
        ca, cb = (json.loads(p.read_text().splitlines()[0][2:]) for p in (a, b))
        ca["resolved_config"].pop("csv"), cb["resolved_config"].pop("csv")
        assert ca == cb and ca["resolved_config"]["seed"] == 7


class TestCertify:
    def test_fitted_budget_passes(self, tmp_path):
        rep = tmp_path / "cert.json"
        assert run("certify", "--problem", "decay", "--d", "1,2", "--eps", "0.2,0.1", "--report", rep) == 0
        body = json.loads(rep.read_text())
        assert body["pass"] is True and body["budget"]["K_source"] == "fitted"
        assert body["resolved_config"]["seed"] == 0

    def test_tiny_budget_fails_with_exit_two(self, tmp_path):
        rep = tmp_path / "cert.json"
        assert run("certify", "--problem", "decay", "--d", "1,2", "--eps", "0.2", "--K", "1e-6",
                   "--report", rep) == 2
        assert json.loads(rep.read_text())["pass"] is False

    def test_stdout_when_no_report(self, capsys):
        assert run("certify", "--problem", "rotation", "--d", "2", "--eps", "0.2") == 0
        assert json.loads(capsys.readouterr().out)["budget"]["K_source"] == "fitted"


class TestEulerCheck:
    @pytest.mark.parametrize("problem", ["decay", "rotation"])
    def test_passes(self, tmp_path, problem):
        csv = tmp_path / "e.csv"
        assert run("euler-check", "--problem", problem, "--csv", csv) == 0
        lines = csv.read_text().splitlines()
        assert lines[1] == "x_id,n,measured_error,bound,ratio"
        assert len(lines) == 2 + 32 * 5
