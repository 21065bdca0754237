import itertools

import numpy as np
import pytest

from builders import random_affine_model
from opinion_lattice.design import (
    ScenarioSpec,
    audit_box,
    delta_percent,
    objective,
    optimize,
    scenario_model,
    scenario_table,
    subset_search,
)
from opinion_lattice.dynamics import simulate
from opinion_lattice.model import AffineRule, ModelError, MultilayerModel


def base_model(seed=0, n=4, q=2):
    return random_affine_model(np.random.default_rng(seed), n, 1, q, alpha_max=0.8)


def spec(n, access="all", bias="none", **kw):
    kw.setdefault("objective_layer", 0)
    return ScenarioSpec.from_dict({"access": access, "bias": bias, **kw}, n)


def grid_values(model, scenario, points=5, access=None):
    q = model.q
    axes = [np.linspace(0, 1, points)] * q
    out = {}
    for y in itertools.product(*axes):
        sc = scenario
        if access is not None:
            sc = ScenarioSpec(access, scenario.bias * access, scenario.objective_layer)
        out[y] = objective(model, sc, np.array(y))
    return out


class TestScenarioSpec:
    def test_indicator_forms(self):
        sc = ScenarioSpec.from_dict({"access": {"agents": [0, 2]}, "bias": [1, 0, 0], "objective_layer": 0}, 3)
        assert sc.access.tolist() == [1, 0, 1] and sc.bias.tolist() == [1, 0, 0]

    def test_bias_requires_access(self):
        with pytest.raises(ModelError, match="bias without access"):
            ScenarioSpec([0, 1], [1, 1], 0)

    def test_box_must_lie_in_unit_cube(self):
        with pytest.raises(ModelError):
            ScenarioSpec([1], [0], 0, box=[[0.0, 1.2]])

    def test_objective_layer_checked_against_model(self):
        with pytest.raises(ModelError, match="objective_layer"):
            scenario_model(base_model(), spec(4, objective_layer=5), [0, 0])


class TestScenarioModel:
    def test_source_parameters(self):
        model = base_model(1)
        m = scenario_model(model, spec(4, bias="all"), [0.3, 0.6])
        a = model.alpha
        expected = np.where(a > 0, 0.9 * (1 - a) / np.where(a > 0, a, 1), 0)
        assert np.allclose(m.rule.omega[:, :, 0], expected)
        assert np.array_equal(m.rule.gamma, m.rule.omega)
        assert np.allclose(m.rule.c[:, :, 0, :], np.transpose(model.lam, (0, 2, 1)))

    def test_audit_passes_for_default_factor(self):
        assert audit_box(base_model(2), spec(4, bias="all")) < 1


class TestObjective:
    def test_no_access_is_flat(self):
        model = base_model(3)
        sc = spec(4, access="none")
        values = {objective(model, sc, y) for y in ([0, 0], [1, 1], [0.3, 0.9])}
        assert len(values) == 1

    def test_scalar_closed_form(self):
        # lone agent, no bias: x* = s + alpha*omega*(y - s)/(1 - alpha) = s + 0.9 (y - s)
        one = np.ones((1, 1, 1))
        model = MultilayerModel(1, 1, 1, one, [[0.4]], one, [0.2], [0.0], AffineRule(0 * one, 0 * one))
        sc = ScenarioSpec([1], [0], 0)
        values = [objective(model, sc, [y]) for y in (0.0, 0.5, 1.0)]
        assert values == pytest.approx([0.2 + 0.9 * (y - 0.2) for y in (0.0, 0.5, 1.0)], abs=1e-7)
        assert values[0] < values[1] < values[2]

    def test_deterministic(self):
        model = base_model(4)
        sc = spec(4, bias="all")
        assert objective(model, sc, [0.4, 0.7]) == objective(model, sc, [0.4, 0.7])

    def test_rejects_y_outside_box(self):
        with pytest.raises(ValueError, match="outside"):
            objective(base_model(), spec(4, box=[[0, 0.5], [0, 1]]), [0.7, 0.1])


class TestDeltaPercent:
    def test_no_change(self):
        s = np.array([0.2, 0.4, 0.6, 0.8])
        assert delta_percent(s, s, 2, 2).tolist() == [0.0, 0.0]

    def test_twenty_percent(self):
        s = np.array([0.2, 0.4])
        assert delta_percent(1.2 * s, s, 2, 1)[0] == pytest.approx(20.0)

    def test_zero_baseline_is_undefined(self):
        assert np.isnan(delta_percent([0.1, 0.1], [0.0, 0.0], 2, 1)[0])


class TestOptimize:
    def test_monotone_scenario_hits_lower_corner(self):
        model = base_model(5)
        sc = spec(4)
        res = optimize(model, sc)
        assert res.y_star.tolist() == [0.0, 0.0]
        grid = grid_values(model, sc)
        assert res.J_star <= min(grid.values()) + 1e-12

    def test_maximize_hits_upper_corner(self):
        res = optimize(base_model(5), spec(4, direction="maximize"))
        assert res.y_star.tolist() == [1.0, 1.0]

    @pytest.mark.parametrize("seed", [6, 7, 8])
    def test_not_worse_than_verification_grid(self, seed):
        model = base_model(seed, n=3)
        sc = spec(3, bias="all", objective_layer=1)
        res = optimize(model, sc)
        grid = grid_values(model, sc)
        assert res.J_star <= min(grid.values()) + 1e-12
        assert abs(res.J_star - objective(model, sc, res.y_star)) <= 1e-8

    def test_flat_scenario_uses_one_evaluation(self):
        res = optimize(base_model(9), spec(4, access="none"))
        assert res.evaluations == 1 and res.y_star is None and res.method == "flat"

    def test_every_candidate_inside_box(self):
        box = [[0.2, 0.5], [0.0, 0.3]]
        res = optimize(base_model(10), spec(4, bias="all", box=box))
        ys = np.array([y for y, _ in res.trace])
        lo, hi = np.array(box).T
        assert np.all(ys >= lo) and np.all(ys <= hi)

    def test_seeded_runs_repeat(self):
        model = base_model(11)
        a = optimize(model, spec(4, bias="all", seed=3))
        b = optimize(model, spec(4, bias="all", seed=3))
        assert np.array_equal(a.y_star, b.y_star) and a.trace == b.trace

    def test_thread_count_does_not_change_result(self, monkeypatch):
        model = base_model(12)
        a = optimize(model, spec(4, bias="all"))
        monkeypatch.setenv("OPINION_LATTICE_THREADS", "4")
        b = optimize(model, spec(4, bias="all"))
        assert np.array_equal(a.y_star, b.y_star) and a.J_star == b.J_star

    def test_access_removal_leaves_other_component_alone(self):
        # two disconnected 2-agent components: access changes in one cannot move the other
        model = base_model(13)
        block = np.kron(np.eye(2), np.full((2, 2), 0.5))
        model = model.replace(W=np.stack([block] * model.q))
        y = [0.1, 0.9]
        full = scenario_model(model, spec(4, bias="all"), y)
        part = scenario_model(model, spec(4, access=[0, 1, 1, 1], bias=[0, 1, 1, 1]), y)
        xf, xp = simulate(full, tol=1e-13).x, simulate(part, tol=1e-13).x
        for l in range(model.q):
            assert np.allclose(xf[l * 4 + 2:l * 4 + 4], xp[l * 4 + 2:l * 4 + 4], atol=1e-11)


class TestSubsetSearch:
    def test_exhaustive_matches_brute_force(self):
        model = base_model(14, n=5)
        sc = spec(5, bias="all")
        res = subset_search(model, sc, 2)
        assert res.method == "subset_exhaustive" and res.heuristic
        best = min(min(grid_values(model, sc, access=np.isin(np.arange(5), pair) * 1.0).values())
                   for pair in itertools.combinations(range(5), 2))
        assert res.J_star <= best + 1e-12
        assert len(res.subset) == 2

    def test_full_subset_reduces_to_optimize(self):
        model = base_model(15, n=3)
        sc = spec(3, bias="all")
        a, b = subset_search(model, sc, 3), optimize(model, sc)
        assert a.subset == (0, 1, 2)
        assert a.J_star == b.J_star

    def test_greedy_path_is_labeled_and_sane(self):
        model = base_model(16, n=5)
        cheap = {"starts": 2, "verify_grid": 0}
        exhaustive = subset_search(model, spec(5, bias="all", **cheap), 2)
        greedy = subset_search(model, spec(5, bias="all", subset_cap=1, **cheap), 2)
        assert greedy.method == "subset_greedy_swap" and greedy.heuristic
        assert greedy.J_star >= exhaustive.J_star - 1e-12

    def test_pool_restricted_to_access_set(self):
        res = subset_search(base_model(17, n=5), spec(5, access={"agents": [1, 3, 4]}), 2)
        assert set(res.subset) <= {1, 3, 4}


def test_scenario_table_layout():
    model = base_model(18)
    results = [optimize(model, spec(4, access="none", name="none")), optimize(model, spec(4, name="all"))]
    table = scenario_table(results)
    assert table[0] == ["quantity", "none", "all"]
    assert table[1][1] == "-" and table[1][2] == "(0.0000, 0.0000)"
    assert table[3][2] == f"{results[1].J_star:.4f}"
