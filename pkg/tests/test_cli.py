import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from builders import random_affine_model
from opinion_lattice import io as mio
from opinion_lattice.cli import main
from opinion_lattice.design import ScenarioSpec, optimize
from opinion_lattice.dynamics import simulate
from opinion_lattice.fixtures import available, fixture_path, load_fixture

DATA = Path(__file__).resolve().parent.parent / "data" / "synthetic10"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestFixturesThroughCli:
    def test_solve_three_agent_affine(self, capsys):
        code, out, _ = run(capsys, "solve", "--model", fixture_path("three_agent_affine_g02"))
        assert code == 0
        res = json.loads(out)
        assert res["method"] == "closed_form"
        assert res["fixed_point"] == pytest.approx([0.2783, 0.8032, 0.2677, 0.8267, 0.7260, 0.2677], abs=1e-3)

    @pytest.mark.parametrize("name", available())
    def test_simulate_matches_library(self, capsys, name):
        model = load_fixture(name)
        args = ["simulate", "--model", fixture_path(name), "--allow-substochastic-violation"]
        code, out, err = run(capsys, *args)
        assert code == 0
        lib = simulate(model, enforce_substochastic=False)
        res = json.loads(out)
        assert res["status"] == lib.status and res["iterations"] == lib.iterations
        assert lib.status in err

    @pytest.mark.parametrize("name,expected", [
        ("three_agent_affine_g05", 0), ("three_agent_affine_g02", 0), ("two_agent_coupled", 0),
        ("two_agent_decoupled", 0), ("three_agent_bc_eps0p3", 1), ("three_agent_log_sine", 1),
    ])
    def test_validate_exit_codes(self, capsys, name, expected):
        code, out, _ = run(capsys, "validate", "--model", fixture_path(name))
        assert code == expected
        assert "kappa" in json.loads(out)

    def test_sub_stochastic_violation_exits_one(self, capsys):
        code, _, err = run(capsys, "simulate", "--model", fixture_path("three_agent_log_sine"))
        assert code == 1 and "exceeds 1" in err

    def test_solve_refuses_bounded_confidence(self, capsys):
        code, _, err = run(capsys, "solve", "--model", fixture_path("three_agent_bc_eps0p2"))
        assert code == 1 and "affine" in err

    def test_bounds_csv(self, capsys):
        code, out, _ = run(capsys, "bounds", "--model", fixture_path("three_agent_affine_g02"), "--format", "csv")
        rows = list(csv.reader(io.StringIO(out)))
        assert code == 0 and rows[0] == ["layer", "agent", "lower", "upper"]
        assert len(rows) == 7 and float(rows[2][3]) == pytest.approx(0.9667, abs=1e-4)


class TestErrors:
    def test_unit_susceptibility(self, capsys, tmp_path):
        d = mio.model_to_dict(load_fixture("three_agent_affine_g02"))
        d["alpha"][0][0] = 1.0
        p = tmp_path / "m.json"
        p.write_text(json.dumps(d))
        code, _, err = run(capsys, "validate", "--model", p)
        assert code == 1 and "resolvent precondition" in err

    def test_missing_file(self, capsys):
        code, _, err = run(capsys, "validate", "--model", "does/not/exist.json")
        assert code == 2 and "not found" in err

    def test_malformed_json(self, capsys, tmp_path):
        p = tmp_path / "m.json"
        p.write_text("[1, 2")
        assert run(capsys, "solve", "--model", p)[0] == 2

    def test_schema_error(self, capsys, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps({"n": 1, "m": 0, "q": 1}))
        code, _, err = run(capsys, "simulate", "--model", p)
        assert code == 2 and "source_rule" in err

    def test_nonpositive_tol_rejected(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["simulate", "--model", str(fixture_path("two_agent_coupled")), "--tol", "0"])
        assert info.value.code == 2


class TestOutputs:
    def test_trajectory_csv(self, capsys):
        code, out, _ = run(capsys, "simulate", "--model", fixture_path("two_agent_coupled"), "--format", "csv")
        rows = list(csv.reader(io.StringIO(out)))
        assert rows[0] == ["t", "layer", "agent", "value"]
        assert rows[1][:3] == ["0", "0", "0"]
        assert (len(rows) - 1) % 4 == 0

    def test_initial_state_option(self, capsys):
        x0 = json.dumps([[0.1, 0.9], [0.5, 0.5]])
        code, out, _ = run(capsys, "simulate", "--model", fixture_path("two_agent_coupled"), "--x0", x0)
        lib = simulate(load_fixture("two_agent_coupled"), x0=[0.1, 0.9, 0.5, 0.5])
        assert code == 0 and json.loads(out)["iterations"] == lib.iterations

    def test_calibrate_roundtrip_and_determinism(self, capsys, tmp_path):
        args = ["calibrate", "--waves", *sorted(DATA.glob("wave*.csv")), "--edges", DATA / "edges.csv",
                "--manifest", DATA / "manifest.json"]
        assert run(capsys, *args, "--out", tmp_path / "a.json")[0] == 0
        assert run(capsys, *args, "--out", tmp_path / "b.json")[0] == 0
        a = (tmp_path / "a.json").read_bytes()
        assert a == (tmp_path / "b.json").read_bytes()
        model = mio.load_model(tmp_path / "a.json")
        mio.save_model(model, tmp_path / "c.json")
        assert (tmp_path / "c.json").read_bytes() == a

    def test_optimize_seeded_outputs_identical(self, capsys, tmp_path):
        model_path = tmp_path / "m.json"
        mio.save_model(random_affine_model(np.random.default_rng(0), 3, 1, 2), model_path)
        sc = tmp_path / "s.json"
        sc.write_text(json.dumps({"access": "all", "bias": "all", "objective_layer": 1, "verify_grid": 3}))
        for name in ("a", "b"):
            args = ["optimize", "--model", model_path, "--scenario", sc, "--seed", 5, "--trace",
                    "--out", tmp_path / f"{name}.json"]
            assert run(capsys, *args)[0] == 0
        a = (tmp_path / "a.json").read_text()
        assert a == (tmp_path / "b.json").read_text()
        doc = json.loads(a)
        assert len(doc["trace"]) == doc["evaluations"]

    def test_scenario_table_matches_direct_calls(self, capsys, tmp_path):
        model = random_affine_model(np.random.default_rng(1), 5, 1, 2)
        model_path = tmp_path / "m.json"
        mio.save_model(model, model_path)
        docs = [{"name": "none", "access": "none"},
                {"name": "all", "access": "all"},
                {"name": "bias", "access": "all", "bias": "all"}]
        paths = []
        for d in docs:
            d.update(objective_layer=1, verify_grid=3, starts=2)
            p = tmp_path / f"{d['name']}.json"
            p.write_text(json.dumps(d))
            paths.append(p)
        code, out, _ = run(capsys, "scenario-table", "--model", model_path, "--scenario", *paths)
        rows = list(csv.reader(io.StringIO(out)))
        assert code == 0 and rows[0] == ["quantity", "none", "all", "bias"]
        for col, d in enumerate(docs, start=1):
            direct = optimize(model, ScenarioSpec.from_dict(d, 5))
            assert rows[3][col] == f"{direct.J_star:.4f}"
            assert rows[2][col] == f"{direct.delta_percent[1]:.4f}"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "opinion_lattice", "bounds", "--model",
                           str(fixture_path("three_agent_affine_g02"))], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["x_lower"][4] == pytest.approx(0.55)
