"""Write the bundled synthetic 10-agent, 4-layer, 3-wave dataset to data/synthetic10.

Raw values are survey-style codes; manifest.json maps them onto [0, 1]. The
four scenario files cover: no source, full access without bias, full access
with bias, and the best 4-agent access subset (drawn from six candidates) with bias.
"""
import argparse
import csv
import json
from pathlib import Path

import numpy as np

LAYERS = ["smoking", "drinking", "exercise", "cannabis"]
LEVELS = {"smoking": 5, "drinking": 5, "exercise": 2, "cannabis": 4}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "synthetic10"))
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    out = Path(args.out)
    (out / "scenarios").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    n, waves = 10, 3
    agents = [f"a{i:02d}" for i in range(n)]

    # positively correlated latent propensities, so every layer feeds the last one
    mix = np.array([[1.0, 0.6, 0.3, 0.7],
                    [0.6, 1.0, 0.2, 0.5],
                    [0.3, 0.2, 1.0, 0.4],
                    [0.7, 0.5, 0.4, 1.0]])
    latent = rng.multivariate_normal(np.zeros(4), mix, size=n)
    for p in range(waves):
        drift = latent + 0.35 * p * rng.standard_normal((n, 1)) + 0.5 * rng.standard_normal((n, 4))
        drift[0] = latent[0]  # one agent never changes its answers
        rows = []
        for i in range(n):
            codes = []
            for l, name in enumerate(LAYERS):
                k = LEVELS[name]
                u = 1.0 / (1.0 + np.exp(-drift[i, l]))
                codes.append(int(np.clip(np.floor(u * k), 0, k - 1)) + 1)
            rows.append([agents[i]] + codes)
        with open(out / f"wave{p + 1}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["agent"] + LAYERS)
            w.writerows(rows)

    edges = set()
    for i in range(1, n):  # agent a00 receives no ties
        for j in rng.choice([a for a in range(n) if a != i], size=int(rng.integers(1, 4)), replace=False):
            edges.add((agents[int(j)], agents[i]))
    with open(out / "edges.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "target"])
        w.writerows(sorted(edges))

    manifest = {
        "agent_column": "agent",
        "layers": LAYERS,
        "normalize": {
            "smoking": {"type": "range", "min": 1, "max": 5},
            "drinking": {"type": "range", "min": 1, "max": 5},
            "exercise": {"type": "map", "values": {"1": 0.0, "2": 1.0}},
            "cannabis": {"type": "map", "values": {"1": 0.0, "2": 0.25, "3": 0.5, "4": 1.0}},
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    scenarios = {
        "1_no_source": {"access": "none", "bias": "none"},
        "2_full_access": {"access": "all", "bias": "none"},
        "3_full_access_bias": {"access": "all", "bias": "all"},
        "4_subset_bias": {"access": {"agents": [1, 2, 4, 5, 6, 9]}, "bias": {"agents": [1, 2, 4, 5, 6, 9]},
                          "subset_size": 4,
                          "starts": 2, "verify_grid": 0, "step_tol": 1e-3},
    }
    for name, d in scenarios.items():
        doc = {"name": name, "objective_layer": 3, "direction": "minimize", **d}
        (out / "scenarios" / f"{name}.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
