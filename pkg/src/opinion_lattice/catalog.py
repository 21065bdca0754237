"""Named source-weight functions usable from model files.

Each catalog function maps a mismatch score ``beta`` in ``[0, 1]`` to a weight.
Model files select them by name; arbitrary code is never loaded from a file.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import CustomBoundedRule, ModelError, MultilayerModel, layer_local_mismatch, mismatch


def _constant(beta, value):
    return value


def _affine(beta, omega, gamma):
    return omega - gamma * beta


def _log(beta, scale, offset=2.0):
    return scale * math.log(offset - beta)


def _sine(beta, base, scale):
    return base - scale * math.sin(beta)


def _exp(beta, scale, rate):
    return scale * math.exp(-rate * beta)


CATALOG = {
    "constant": _constant,
    "affine": _affine,
    "log": _log,  # scale * ln(offset - beta), offset > 1
    "sine": _sine,  # base - scale * sin(beta)
    "exp": _exp,  # scale * exp(-rate * beta)
}


@dataclass(frozen=True)
class CatalogEntry:
    layer: int
    agent: int
    source: int
    function: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.function not in CATALOG:
            raise ModelError(f"unknown catalog function {self.function!r}; "
                             f"choose from {sorted(CATALOG)}")

    def to_dict(self) -> dict:
        return {"layer": self.layer, "agent": self.agent, "source": self.source,
                "function": self.function, "params": dict(self.params)}


class CatalogEvaluator:
    """Evaluator dispatching ``(layer, agent, source)`` to catalog functions.

    Entries not listed evaluate to 0 (and are then clamped to ``phi_lower``).
    """

    def __init__(self, entries):
        self.entries = tuple(entries)
        self._table = {(e.layer, e.agent, e.source): e for e in self.entries}

    def __call__(self, model: MultilayerModel, x: np.ndarray, l: int, i: int, k: int) -> float:
        entry = self._table.get((l, i, k))
        if entry is None:
            return 0.0
        beta = mismatch(model, x, l, i, k)
        return float(CATALOG[entry.function](beta, **entry.params))


def catalog_rule(entries, phi_lower, phi_upper, c=None, mu=None) -> CustomBoundedRule:
    """Custom rule from catalog entries; ``c`` defaults to layer-local mismatch."""
    if c is None:
        q, n, m = np.shape(phi_lower)
        c = layer_local_mismatch(n, m, q)
    entries = tuple(e if isinstance(e, CatalogEntry) else CatalogEntry(**e) for e in entries)
    for e in entries:
        if e.function == "log" and e.params.get("offset", 2.0) <= 1.0:
            raise ModelError("log entries need offset > 1 so the argument stays positive on [0, 1]")
    return CustomBoundedRule(CatalogEvaluator(entries), phi_lower, phi_upper, mu=mu, c=c, entries=entries)
