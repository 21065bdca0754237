"""Model parameters from longitudinal wave data.

Adjacency convention: ``adjacency[i, a] = 1`` when agent ``a`` influences agent
``i`` (an edge entering ``i``); row ``i`` of the social weights then spreads
over those influencers, and the in-degree of ``i`` is the row count.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .model import AffineRule, ModelError, MultilayerModel, stack


class DataQualityWarning(UserWarning):
    pass


@dataclass
class WaveData:
    """``waves`` is ``(P, n, q)`` with NaN marking missing entries."""

    waves: np.ndarray
    adjacency: np.ndarray
    agents: Optional[list] = None
    layers: Optional[list] = None

    def __post_init__(self):
        waves = np.asarray(self.waves, dtype=float)
        if waves.ndim != 3 or waves.shape[0] == 0 or waves.shape[1] == 0 or waves.shape[2] == 0:
            raise ModelError("waves must be a non-empty (P, n, q) array")
        present = waves[~np.isnan(waves)]
        if np.any(present < 0) or np.any(present > 1):
            raise ModelError("wave entries must lie in [0, 1]")
        P, n, q = waves.shape
        adj = np.asarray(self.adjacency, dtype=float)
        if adj.shape not in ((n, n), (q, n, n)):
            raise ModelError(f"adjacency must be ({n}, {n}) or ({q}, {n}, {n}), got {adj.shape}")
        if np.any(adj < 0):
            raise ModelError("adjacency must be nonnegative")
        self.waves = waves
        self.adjacency = adj
        self.agents = list(self.agents) if self.agents is not None else list(range(n))
        self.layers = list(self.layers) if self.layers is not None else [f"layer{l}" for l in range(q)]

    @property
    def n(self) -> int:
        return self.waves.shape[1]

    @property
    def q(self) -> int:
        return self.waves.shape[2]

    @property
    def P(self) -> int:
        return self.waves.shape[0]

    def layer_adjacency(self) -> np.ndarray:
        """Adjacency per layer, ``(q, n, n)`` (one shared graph is repeated)."""
        if self.adjacency.ndim == 2:
            return np.broadcast_to(self.adjacency, (self.q, self.n, self.n)).copy()
        return self.adjacency.copy()

    def filled(self) -> np.ndarray:
        """Waves with each missing entry replaced by the mean of that agent's present waves."""
        waves = self.waves
        missing = np.isnan(waves)
        if not missing.any():
            return waves.copy()
        count = (~missing).sum(axis=0)
        if np.any(count == 0):
            i, l = np.argwhere(count == 0)[0]
            raise ModelError(f"agent {self.agents[i]} has no observation in layer {self.layers[l]}")
        warnings.warn(f"{int(missing.sum())} missing wave entries filled with per-agent means",
                      DataQualityWarning, stacklevel=2)
        means = np.nanmean(waves, axis=0)
        return np.where(missing, means[None], waves)


def in_degree(data: WaveData) -> np.ndarray:
    """Edges entering each agent, ``(q, n)``."""
    return (data.layer_adjacency() > 0).sum(axis=2).astype(float)


def alpha_from_waves(data: WaveData) -> np.ndarray:
    """Susceptibility ``1 - 1/(1 + zeta_i * sqrt(sum_p dev^2) / P)``, shape ``(q, n)``.

    ``dev`` is the deviation of each wave from the agent's mean over the waves.
    Missing entries are skipped and ``P`` counts only the present waves.
    """
    waves = data.waves
    present = ~np.isnan(waves)
    count = present.sum(axis=0)  # (n, q)
    if np.any(count == 0):
        raise ModelError("every agent needs at least one observation per layer")
    if not present.all():
        warnings.warn("volatility computed over present waves only", DataQualityWarning, stacklevel=2)
    mean = np.nanmean(waves, axis=0)
    dev2 = np.where(present, (waves - mean[None]) ** 2, 0.0).sum(axis=0)
    spread = np.sqrt(dev2) / count  # (n, q)
    zeta = in_degree(data)  # (q, n)
    return 1.0 - 1.0 / (1.0 + zeta * spread.T)


def empirical_covariance(data: WaveData) -> np.ndarray:
    """Covariance of the layers pooled over waves, each wave centred on its own mean."""
    waves = data.filled()
    P, n, _ = waves.shape
    centred = waves - waves.mean(axis=1, keepdims=True)
    return np.einsum("pil,pij->lj", centred, centred) / (P * n)


def lambda_from_covariance(data: WaveData):
    """Cross-layer coupling from the nonnegative part of the covariance.

    Returns ``(C, lam)`` where ``C`` is the ``(q, q)`` row-normalized matrix and
    ``lam[l, j, i] = C[l, j]`` for every agent.
    """
    cov = empirical_covariance(data)
    plus = np.maximum(cov, 0.0)
    rows = plus.sum(axis=1)
    if np.any(rows <= 0):
        l = int(np.argmin(rows))
        raise ModelError(f"layer {data.layers[l]!r} has no positive covariance (zero variance?); "
                         "cannot normalize its coupling row")
    C = plus / rows[:, None]
    lam = np.broadcast_to(C[:, :, None], (data.q, data.q, data.n)).copy()
    return C, lam


def normalize_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Row-normalize; rows without any neighbour get a unit self-loop."""
    adj = (np.asarray(adjacency, dtype=float) > 0).astype(float) * np.asarray(adjacency, dtype=float)
    rows = adj.sum(axis=-1, keepdims=True)
    eye = np.broadcast_to(np.eye(adj.shape[-1]), adj.shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        W = np.where(rows > 0, adj / rows, eye)
    return W


def calibrate(data: WaveData, description: str = "") -> MultilayerModel:
    """Base model with one (inactive) source, innate opinions from the first wave.

    The affine rule carries zero weights and mismatch weights ``c_{l,i} = C[l, :]``;
    scenarios in :mod:`opinion_lattice.design` fill in the source weights.
    """
    n, q = data.n, data.q
    filled = data.filled()
    W = normalize_adjacency(data.layer_adjacency())
    alpha = alpha_from_waves(data)
    C, lam = lambda_from_covariance(data)
    c = np.broadcast_to(C[:, None, None, :], (q, n, 1, q)).copy()
    zeros = np.zeros((q, n, 1))
    return MultilayerModel(n, 1, q, W, alpha, lam, stack(filled[0]), np.zeros(q),
                           AffineRule(zeros, zeros.copy(), c),
                           description or f"calibrated from {data.P} waves, {n} agents, {q} layers")


# --------------------------------------------------------------------------- file ingestion


@dataclass
class Manifest:
    """How raw wave CSV values map onto ``[0, 1]``.

    ``normalize`` maps a layer name to ``{"type": "map", "values": {raw: value}}``
    or ``{"type": "range", "min": a, "max": b, "reverse": false}``. Layers
    without an entry must already be in ``[0, 1]``.
    """

    layers: Optional[list] = None
    agent_column: str = "agent"
    normalize: dict = field(default_factory=dict)
    missing: tuple = ("", "NA", "NaN", "nan")

    @classmethod
    def load(cls, path) -> "Manifest":
        d = json.loads(Path(path).read_text())
        return cls(layers=d.get("layers"), agent_column=d.get("agent_column", "agent"),
                   normalize=d.get("normalize", {}), missing=tuple(d.get("missing", cls.missing)))

    def convert(self, layer: str, raw: str) -> float:
        raw = raw.strip()
        if raw in self.missing:
            return math.nan
        rule = self.normalize.get(layer)
        if rule is None:
            return float(raw)
        if rule["type"] == "map":
            if raw not in rule["values"]:
                raise ModelError(f"value {raw!r} of layer {layer!r} missing from the manifest map")
            return float(rule["values"][raw])
        if rule["type"] == "range":
            lo, hi = float(rule["min"]), float(rule["max"])
            v = (float(raw) - lo) / (hi - lo)
            return 1.0 - v if rule.get("reverse") else v
        raise ModelError(f"unknown normalization type {rule['type']!r}")


def read_wave_csv(path, manifest: Manifest):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or manifest.agent_column not in reader.fieldnames:
            raise ModelError(f"{path}: needs a {manifest.agent_column!r} column")
        layers = manifest.layers or [c for c in reader.fieldnames if c != manifest.agent_column]
        missing_cols = [l for l in layers if l not in reader.fieldnames]
        if missing_cols:
            raise ModelError(f"{path}: missing layer columns {missing_cols}")
        agents, rows = [], []
        for row in reader:
            agents.append(row[manifest.agent_column].strip())
            rows.append([manifest.convert(l, row[l] or "") for l in layers])
    return agents, layers, np.array(rows, dtype=float)


def read_edge_list(path, agents: Sequence[str], undirected: bool = False) -> np.ndarray:
    """Edge-list CSV with ``source,target`` columns: ``source`` influences ``target``."""
    index = {a: i for i, a in enumerate(agents)}
    adj = np.zeros((len(agents), len(agents)))
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"source", "target"} <= set(reader.fieldnames):
            raise ModelError(f"{path}: needs 'source' and 'target' columns")
        for row in reader:
            a, b = row["source"].strip(), row["target"].strip()
            if a not in index or b not in index:
                raise ModelError(f"{path}: edge ({a}, {b}) names an agent absent from the waves")
            adj[index[b], index[a]] = 1.0
            if undirected:
                adj[index[a], index[b]] = 1.0
    return adj


def load_wave_data(wave_paths, edges_path, manifest_path=None, undirected: bool = False) -> WaveData:
    manifest = Manifest.load(manifest_path) if manifest_path else Manifest()
    waves, agents, layers = [], None, None
    for p in wave_paths:
        a, l, values = read_wave_csv(p, manifest)
        if agents is None:
            agents, layers = a, l
        elif a != agents or l != layers:
            raise ModelError(f"{p}: agents or layers differ from the first wave")
        waves.append(values)
    if not waves:
        raise ModelError("no wave files given")
    adj = read_edge_list(edges_path, agents, undirected)
    return WaveData(np.stack(waves), adj, agents, layers)
