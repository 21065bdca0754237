"""JSON model files, result serialization and trajectory export.

Model files store matrices as row-major nested arrays; see ``docs/formats.md``.
Model files keep full float precision (round trips are bit-exact); result
files are rounded to 10 significant digits.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import IO, Union

import numpy as np

from .catalog import CatalogEntry, catalog_rule
from .model import (
    AffineRule,
    BoundedConfidenceRule,
    CustomBoundedRule,
    ModelError,
    MultilayerModel,
)

FORMAT = "opinion-lattice-model"
RESULT_DIGITS = 10

PathLike = Union[str, Path]


def _array(d: dict, key: str, shape=None, required=True):
    if key not in d:
        if required:
            raise ModelError(f"missing field {key!r}")
        return None
    try:
        a = np.asarray(d[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"field {key!r} is not a numeric array: {exc}") from None
    if shape is not None:
        if a.size != int(np.prod(shape)):
            raise ModelError(f"field {key!r} has {a.size} entries, expected shape {shape}")
        a = a.reshape(shape)
    return a


def rule_to_dict(rule) -> dict:
    if isinstance(rule, AffineRule):
        return {"type": "affine", "omega": rule.omega.tolist(), "gamma": rule.gamma.tolist(),
                "c": rule.c.tolist()}
    if isinstance(rule, BoundedConfidenceRule):
        return {"type": "bounded_confidence", "p": rule.p.tolist(), "eps": rule.eps.tolist(),
                "c": rule.c.tolist()}
    if isinstance(rule, CustomBoundedRule):
        if rule.entries is None:
            raise ModelError("custom rules with an arbitrary evaluator cannot be written to JSON; "
                             "build them from the catalog instead")
        out = {"type": "custom_bounded",
               "entries": [e.to_dict() for e in rule.entries],
               "phi_lower": rule.phi_lower.tolist(), "phi_upper": rule.phi_upper.tolist()}
        if rule.c is not None:
            out["c"] = rule.c.tolist()
        if rule.mu is not None:
            out["mu"] = rule.mu.tolist()
        return out
    raise ModelError(f"unsupported rule {type(rule).__name__}")


def rule_from_dict(d: dict, n: int, m: int, q: int):
    kind = d.get("type")
    src = (q, n, m)
    c = _array(d, "c", (q, n, m, q), required=False)
    if kind == "affine":
        return AffineRule(_array(d, "omega", src), _array(d, "gamma", src), c)
    if kind == "bounded_confidence":
        return BoundedConfidenceRule(_array(d, "p", src), _array(d, "eps", (n,)), c)
    if kind == "custom_bounded":
        try:
            entries = [CatalogEntry(int(e["layer"]), int(e["agent"]), int(e["source"]),
                                    str(e["function"]), dict(e.get("params", {})))
                       for e in d.get("entries", [])]
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed custom rule entry: {exc}") from None
        for e in entries:
            if not (0 <= e.layer < q and 0 <= e.agent < n and 0 <= e.source < m):
                raise ModelError(f"custom rule entry {e} out of range")
        return catalog_rule(entries, _array(d, "phi_lower", src), _array(d, "phi_upper", src),
                            c=c, mu=_array(d, "mu", src, required=False))
    raise ModelError(f"unknown source_rule type {kind!r}; expected affine, "
                     "bounded_confidence or custom_bounded")


def model_to_dict(model: MultilayerModel) -> dict:
    return {
        "format": FORMAT,
        "version": 1,
        "description": model.description,
        "n": model.n,
        "m": model.m,
        "q": model.q,
        "W": model.W.tolist(),
        "alpha": model.alpha.tolist(),
        "lambda": model.lam.tolist(),
        "s": model.S.tolist(),
        "y": model.Y.tolist(),
        "source_rule": rule_to_dict(model.rule),
    }


def model_from_dict(d: dict) -> MultilayerModel:
    if not isinstance(d, dict):
        raise ModelError("model document must be a JSON object")
    try:
        n, m, q = int(d["n"]), int(d["m"]), int(d["q"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"model needs integer fields n, m, q ({exc})") from None
    if "source_rule" not in d:
        raise ModelError("missing field 'source_rule'")
    return MultilayerModel(
        n=n, m=m, q=q,
        W=_array(d, "W", (q, n, n)),
        alpha=_array(d, "alpha", (q, n)),
        lam=_array(d, "lambda", (q, q, n)),
        s=_array(d, "s", (q, n)),
        y=_array(d, "y", (q, m)),
        rule=rule_from_dict(d["source_rule"], n, m, q),
        description=str(d.get("description", "")),
    )


def load_model(path: PathLike) -> MultilayerModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: invalid JSON ({exc})") from None
    return model_from_dict(doc)


def save_model(model: MultilayerModel, path: PathLike) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


# --------------------------------------------------------------------------- results


def round_sig(obj, digits: int = RESULT_DIGITS):
    """Recursively round floats (and arrays) to ``digits`` significant digits."""
    if isinstance(obj, np.ndarray):
        return round_sig(obj.tolist(), digits)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
        return float(f"{v:.{digits}g}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {k: round_sig(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_sig(v, digits) for v in obj]
    return obj


def dump_result(obj, fh: IO[str]) -> None:
    json.dump(round_sig(obj), fh, indent=2)
    fh.write("\n")


def write_trajectory_csv(states, n: int, q: int, fh: IO[str]) -> None:
    """One row per (t, layer, agent); layers and agents are 0-based."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["t", "layer", "agent", "value"])
    for t, x in enumerate(states):
        X = np.asarray(x).reshape(q, n)
        for l in range(q):
            for i in range(n):
                writer.writerow([t, l, i, f"{X[l, i]:.10g}"])
