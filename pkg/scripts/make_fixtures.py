"""Write the worked-example model files into src/opinion_lattice/fixtures/.

    python scripts/make_fixtures.py
"""
from pathlib import Path

import numpy as np

from opinion_lattice.catalog import catalog_rule
from opinion_lattice.io import save_model
from opinion_lattice.model import (AffineRule, BoundedConfidenceRule, MultilayerModel,
                                   layer_local_mismatch, stack)

OUT = Path(__file__).resolve().parents[1] / "src" / "opinion_lattice" / "fixtures"


def two_agent(c_layer1, c_layer2, description):
    n, m, q = 2, 1, 2
    W = np.full((q, n, n), 0.5)
    alpha = np.full((q, n), 0.8)
    lam = np.zeros((q, q, n))
    lam[0, 0] = lam[1, 1] = 1.0
    s = stack([[0.0, 0.0], [0.0, 0.5]])
    c = np.zeros((q, n, m, q))
    c[0, :, 0] = c_layer1
    c[1, :, 0] = c_layer2
    omega = np.full((q, n, m), 0.24)
    return MultilayerModel(n, m, q, W, alpha, lam, s, [1.0, 1.0],
                           AffineRule(omega, omega.copy(), c), description)


def three_agent(rule, description):
    n, m, q = 3, 1, 2
    W = np.array([[[0.2, 0.4, 0.4], [0, 1, 0], [0, 1, 0]],
                  [[0, 1, 0], [0, 1, 0], [0, 0, 1]]], dtype=float)
    alpha = np.array([[0.5, 0.8, 0.5], [0.5, 0.6, 0.5]])
    lam = np.empty((q, q, n))
    lam[0, 0] = lam[1, 1] = [0.7, 0.5, 0.5]
    lam[0, 1] = lam[1, 0] = [0.3, 0.5, 0.5]
    s = stack([[0.0, 1.0], [0.5, 0.5], [0.0, 0.0]])
    return MultilayerModel(n, m, q, W, alpha, lam, s, [1.0, 1.0], rule, description)


def three_agent_mismatch():
    c = layer_local_mismatch(3, 1, 2)
    c[0, 1, 0] = [0.8, 0.2]
    c[1, 1, 0] = [0.2, 0.8]
    return c


def agent2_only(value):
    a = np.zeros((2, 3, 1))
    a[:, 1, 0] = value
    return a


def affine_three_agent(gamma):
    rule = AffineRule(agent2_only(0.25), agent2_only(0.5 * gamma), three_agent_mismatch())
    return three_agent(rule, f"three agents, one source, affine rule with gamma = {gamma}")


def bounded_confidence_three_agent(eps2):
    rule = BoundedConfidenceRule(agent2_only(0.25), [eps2] * 3, three_agent_mismatch())
    return three_agent(rule, f"three agents, one source, bounded-confidence threshold {eps2}")


def log_sine_three_agent():
    lower = np.zeros((2, 3, 1))
    upper = np.zeros((2, 3, 1))
    lower[1, 1, 0] = 0.0396
    upper[0, 1, 0] = 0.3812
    upper[1, 1, 0] = 0.25
    entries = [
        {"layer": 0, "agent": 1, "source": 0, "function": "log", "params": {"scale": 0.55, "offset": 2.0}},
        {"layer": 1, "agent": 1, "source": 0, "function": "sine", "params": {"base": 0.25, "scale": 0.25}},
    ]
    rule = catalog_rule(entries, lower, upper, c=three_agent_mismatch())
    return three_agent(rule, "three agents, one source, log and sine source weights with constant bounds")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    models = {
        "two_agent_coupled": two_agent([0.95, 0.05], [0.05, 0.95],
                                       "two agents, one source, cross-coordinate mismatch weights"),
        "two_agent_decoupled": two_agent([1.0, 0.0], [0.0, 1.0],
                                         "two agents, one source, layer-local mismatch weights"),
        "three_agent_affine_g05": affine_three_agent(0.5),
        "three_agent_affine_g02": affine_three_agent(0.2),
        "three_agent_log_sine": log_sine_three_agent(),
    }
    for eps in (0.0, 0.2, 0.3, 0.5):
        models[f"three_agent_bc_eps{eps:g}".replace(".", "p")] = bounded_confidence_three_agent(eps)
    for name, model in models.items():
        save_model(model, OUT / f"{name}.json")
        print("wrote", OUT / f"{name}.json")


if __name__ == "__main__":
    main()
