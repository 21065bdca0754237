"""Source-strategy design: steady-state objective, scenarios, box optimization.

A scenario switches on a single information source for a chosen set of
agents (``access``) and optionally lets its influence decay with mismatch
(``bias``). The optimizer minimizes (or maximizes) the population mean of one
layer at the steady state over a box of source opinions.
"""
from __future__ import annotations

import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .dynamics import simulate
from .model import AffineRule, AssumptionError, ModelError, MultilayerModel

OBJECTIVE_TOL = 1e-8
IMPROVE_TOL = 1e-15
THREADS_ENV = "OPINION_LATTICE_THREADS"


def _indicator(value, n: int, name: str) -> np.ndarray:
    if isinstance(value, str):
        if value == "all":
            return np.ones(n)
        if value == "none":
            return np.zeros(n)
        raise ModelError(f"{name} must be 'all', 'none', a 0/1 list or {{'agents': [...]}}")
    if isinstance(value, dict):
        out = np.zeros(n)
        idx = list(value.get("agents", []))
        if any(not 0 <= int(i) < n for i in idx):
            raise ModelError(f"{name} names an agent outside 0..{n - 1}")
        out[[int(i) for i in idx]] = 1.0
        return out
    a = np.asarray(value, dtype=float)
    if a.shape != (n,) or not np.all((a == 0) | (a == 1)):
        raise ModelError(f"{name} must be a 0/1 vector of length {n}")
    return a


@dataclass
class ScenarioSpec:
    """One source-design experiment.

    ``access[i] = 1`` connects agent ``i`` to the source; ``bias[i] = 1`` makes
    that agent discount the source as the mismatch grows. ``objective_layer``
    is 0-based. ``subset_size`` switches :func:`run_scenario` to subset search.
    """

    access: np.ndarray
    bias: np.ndarray
    objective_layer: int
    box: Optional[np.ndarray] = None
    direction: str = "minimize"
    omega_factor: float = 0.9
    name: str = "scenario"
    subset_size: Optional[int] = None
    starts: int = 8
    step_tol: float = 1e-4
    verify_grid: int = 5
    seed: int = 0
    subset_cap: int = 50_000
    restarts: int = 3
    max_evals_per_start: int = 5_000

    def __post_init__(self):
        self.access = np.asarray(self.access, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.access.shape != self.bias.shape or self.access.ndim != 1:
            raise ModelError("access and bias must be vectors of equal length")
        if np.any(self.bias > self.access):
            i = int(np.argmax(self.bias > self.access))
            raise ModelError(f"agent {i} has bias without access to the source")
        if self.direction not in ("minimize", "maximize"):
            raise ModelError("direction must be 'minimize' or 'maximize'")
        if not 0 < self.omega_factor < 1:
            raise ModelError("omega_factor must lie in (0, 1)")
        if self.starts < 1 or self.step_tol <= 0 or self.verify_grid < 0:
            raise ModelError("starts >= 1, step_tol > 0 and verify_grid >= 0 are required")
        if self.box is not None:
            box = np.asarray(self.box, dtype=float)
            if box.ndim != 2 or box.shape[1] != 2:
                raise ModelError("box must be a (q, 2) array of [low, high] pairs")
            if np.any(box[:, 0] > box[:, 1]) or box.min() < 0 or box.max() > 1:
                raise ModelError("box must satisfy 0 <= low <= high <= 1 in every layer")
            self.box = box

    @property
    def n(self) -> int:
        return self.access.size

    def resolved_box(self, q: int) -> np.ndarray:
        if self.box is None:
            return np.tile([0.0, 1.0], (q, 1))
        if self.box.shape[0] != q:
            raise ModelError(f"box has {self.box.shape[0]} layers, model has {q}")
        return self.box

    def check(self, model: MultilayerModel) -> None:
        if self.n != model.n:
            raise ModelError(f"scenario covers {self.n} agents, model has {model.n}")
        if not 0 <= self.objective_layer < model.q:
            raise ModelError(f"objective_layer {self.objective_layer} outside 0..{model.q - 1}")
        self.resolved_box(model.q)

    @classmethod
    def from_dict(cls, d: dict, n: int) -> "ScenarioSpec":
        if "objective_layer" not in d:
            raise ModelError("scenario needs 'objective_layer'")
        access = _indicator(d.get("access", "none"), n, "access")
        bias = _indicator(d.get("bias", "none"), n, "bias")
        known = {"name", "box", "direction", "omega_factor", "subset_size", "starts", "step_tol",
                 "verify_grid", "seed", "subset_cap", "restarts", "max_evals_per_start"}
        extra = {k: d[k] for k in known if k in d}
        return cls(access=access, bias=bias, objective_layer=int(d["objective_layer"]), **extra)

    def to_dict(self) -> dict:
        return {"name": self.name, "access": self.access.astype(int).tolist(),
                "bias": self.bias.astype(int).tolist(), "objective_layer": self.objective_layer,
                "box": None if self.box is None else self.box.tolist(), "direction": self.direction,
                "omega_factor": self.omega_factor, "subset_size": self.subset_size,
                "starts": self.starts, "step_tol": self.step_tol, "verify_grid": self.verify_grid,
                "seed": self.seed, "subset_cap": self.subset_cap, "restarts": self.restarts}


def load_scenario(path, n: int) -> ScenarioSpec:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(d, dict):
        raise ModelError(f"{path}: scenario must be a JSON object")
    d.setdefault("name", Path(path).stem)
    return ScenarioSpec.from_dict(d, n)


@dataclass
class DesignResult:
    y_star: Optional[np.ndarray]
    J_star: float
    delta_percent: np.ndarray
    evaluations: int
    fixed_point: np.ndarray
    method: str
    heuristic: bool = False
    subset: Optional[tuple] = None
    scenario: str = ""
    objective_layer: int = 0
    trace: list = field(default_factory=list, repr=False)

    def to_dict(self, include_trace: bool = False) -> dict:
        out = {"scenario": self.scenario, "objective_layer": self.objective_layer,
               "method": self.method, "heuristic": self.heuristic,
               "y_star": None if self.y_star is None else self.y_star.tolist(),
               "J_star": self.J_star, "delta_percent": self.delta_percent.tolist(),
               "evaluations": self.evaluations, "fixed_point": self.fixed_point.tolist()}
        if self.subset is not None:
            out["subset"] = list(self.subset)
        if include_trace:
            out["trace"] = [{"y": y, "J": J} for y, J in self.trace]
        return out


# --------------------------------------------------------------------------- scenario models


def source_parameters(model: MultilayerModel, scenario: ScenarioSpec, access=None, bias=None):
    """``(omega, gamma, c)`` of the single source under a scenario.

    ``omega = factor * access * (1 - alpha) / alpha`` (0 where ``alpha = 0``),
    ``gamma = bias * omega`` and ``c[l, i, 0] = lam[l, :, i]``.
    """
    access = scenario.access if access is None else np.asarray(access, dtype=float)
    bias = scenario.bias if bias is None else np.asarray(bias, dtype=float)
    alpha = model.alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(alpha > 0, (1.0 - alpha) / np.where(alpha > 0, alpha, 1.0), 0.0)
    omega = scenario.omega_factor * access[None, :] * ratio
    gamma = bias[None, :] * omega
    c = np.transpose(model.lam, (0, 2, 1))[:, :, None, :]
    return omega[:, :, None], gamma[:, :, None], c


def scenario_model(model: MultilayerModel, scenario: ScenarioSpec, y, access=None, bias=None) -> MultilayerModel:
    """The base model with its source replaced by the scenario's source at opinion ``y``."""
    scenario.check(model)
    omega, gamma, c = source_parameters(model, scenario, access, bias)
    y = np.asarray(y, dtype=float).reshape(model.q)
    return MultilayerModel(model.n, 1, model.q, model.W, model.alpha, model.lam, model.s, y,
                           AffineRule(omega, gamma, c), model.description)


def audit_box(model: MultilayerModel, scenario: ScenarioSpec, access=None, bias=None) -> float:
    """Worst contraction factor over every source opinion in the box.

    Raises :class:`AssumptionError` when some box point leaves the contractive,
    sub-stochastic regime.
    """
    box = scenario.resolved_box(model.q)
    omega, gamma, _ = source_parameters(model, scenario, access, bias)
    alpha = model.alpha
    if np.any(alpha * (1.0 + omega[:, :, 0]) > 1.0 + 1e-12):
        raise AssumptionError("scenario source weights violate sub-stochasticity")
    S = model.S
    far = np.maximum(np.abs(box[:, 1:2] - S), np.abs(S - box[:, 0:1]))
    kappa = float((alpha * (1.0 + gamma[:, :, 0] * far)).max())
    if kappa >= 1.0:
        raise AssumptionError(f"scenario is not contractive over the whole box (kappa = {kappa:.6g})")
    return kappa


def delta_percent(fixed_point, s, n: int, q: int) -> np.ndarray:
    """``100 (mean x* - mean s) / mean s`` per layer; NaN where ``mean s = 0``."""
    xbar = np.asarray(fixed_point, dtype=float).reshape(q, n).mean(axis=1)
    sbar = np.asarray(s, dtype=float).reshape(q, n).mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(sbar != 0, 100.0 * (xbar - sbar) / np.where(sbar != 0, sbar, 1.0), np.nan)


class _Objective:
    """Cached steady-state objective for one (scenario, access, bias) triple."""

    def __init__(self, model, scenario, access=None, bias=None, tol: float = OBJECTIVE_TOL):
        scenario.check(model)
        self.model, self.scenario, self.tol = model, scenario, tol
        self.access = scenario.access if access is None else np.asarray(access, dtype=float)
        self.bias = scenario.bias if bias is None else np.asarray(bias, dtype=float)
        self.kappa = audit_box(model, scenario, self.access, self.bias)
        self.box = scenario.resolved_box(model.q)
        self.sign = 1.0 if scenario.direction == "minimize" else -1.0
        self.cache: dict = {}
        self.order: list = []

    def _compute(self, y: np.ndarray):
        m = scenario_model(self.model, self.scenario, y, self.access, self.bias)
        traj = simulate(m, tol=self.tol, detect_cycles=False)
        if not traj.converged:
            raise RuntimeError(f"objective iteration did not converge at y = {y.tolist()}")
        x = traj.x
        return float(x.reshape(m.q, m.n)[self.scenario.objective_layer].mean()), x

    def project(self, y) -> np.ndarray:
        return np.clip(np.asarray(y, dtype=float), self.box[:, 0], self.box[:, 1])

    def __call__(self, y) -> float:
        """Signed value (always minimized)."""
        y = self.project(y)
        key = tuple(y.tolist())
        if key not in self.cache:
            self.cache[key] = self._compute(y)
            self.order.append(key)
        return self.sign * self.cache[key][0]

    def batch(self, points) -> list:
        points = [self.project(p) for p in points]
        todo, seen = [], set()
        for p in points:
            key = tuple(p.tolist())
            if key not in self.cache and key not in seen:
                seen.add(key)
                todo.append(p)
        threads = _threads()
        if threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(self._compute, todo))
        else:
            results = [self._compute(p) for p in todo]
        for p, r in zip(todo, results):
            key = tuple(p.tolist())
            self.cache[key] = r
            self.order.append(key)
        return [self(p) for p in points]

    def best(self):
        key = min(self.order, key=lambda k: self.sign * self.cache[k][0])
        return np.array(key), self.cache[key]

    @property
    def evaluations(self) -> int:
        return len(self.order)

    def trace(self) -> list:
        return [(list(k), self.cache[k][0]) for k in self.order]


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def objective(model: MultilayerModel, scenario: ScenarioSpec, y) -> float:
    """Population mean of the objective layer at the steady state for source opinion ``y``."""
    y = np.asarray(y, dtype=float).reshape(model.q)
    box = scenario.resolved_box(model.q)
    if np.any(y < box[:, 0] - 1e-12) or np.any(y > box[:, 1] + 1e-12):
        raise ValueError(f"y = {y.tolist()} lies outside the scenario box")
    f = _Objective(model, scenario)
    return f.sign * f(y)


# --------------------------------------------------------------------------- optimization


def pattern_search(f, x0, lo, hi, step_tol: float = 1e-4, max_evals: int = 5_000):
    """Coordinate pattern search with expanding/contracting per-axis steps.

    Every trial point is projected onto the box ``[lo, hi]``. Stops when every
    step is below ``step_tol`` or after ``max_evals`` calls to ``f``.
    """
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    fx = f(x)
    width = hi - lo
    step = np.where(width > 0, width / 4.0, 0.0)
    evals = 1
    while np.any(step >= step_tol) and evals < max_evals:
        for d in range(x.size):
            if step[d] < step_tol:
                continue
            moved = False
            for sign in (1.0, -1.0):
                cand = x.copy()
                cand[d] = min(max(x[d] + sign * step[d], lo[d]), hi[d])
                if cand[d] == x[d]:
                    continue
                fc = f(cand)
                evals += 1
                if fc < fx - IMPROVE_TOL:
                    x, fx, moved = cand, fc, True
                    break
            step[d] = min(2.0 * step[d], width[d]) if moved else 0.5 * step[d]
    return x, fx


def _optimize(f: _Objective, scenario: ScenarioSpec) -> None:
    lo, hi = f.box[:, 0], f.box[:, 1]
    q = lo.size
    sampler = qmc.Sobol(d=q, scramble=True, seed=scenario.seed)
    starts = lo + sampler.random(scenario.starts) * (hi - lo)
    for x0 in starts:
        pattern_search(f, x0, lo, hi, scenario.step_tol, scenario.max_evals_per_start)
    if scenario.verify_grid >= 2:
        axes = [np.linspace(lo[d], hi[d], scenario.verify_grid) for d in range(q)]
        grid = [np.array(p) for p in itertools.product(*axes)]
        values = f.batch(grid)
        best_grid = int(np.argmin(values))
        best_y, _ = f.best()
        if values[best_grid] <= f(best_y) and not np.array_equal(grid[best_grid], best_y):
            pattern_search(f, grid[best_grid], lo, hi, scenario.step_tol, scenario.max_evals_per_start)


def _result(f: _Objective, method: str, flat: bool, heuristic: bool = False, subset=None) -> DesignResult:
    y, (J, x) = f.best()
    m = f.model
    return DesignResult(y_star=None if flat else y, J_star=J,
                        delta_percent=delta_percent(x, m.s, m.n, m.q), evaluations=f.evaluations,
                        fixed_point=x, method=method, heuristic=heuristic, subset=subset,
                        scenario=f.scenario.name, objective_layer=f.scenario.objective_layer,
                        trace=f.trace())


def optimize(model: MultilayerModel, scenario: ScenarioSpec, access=None, bias=None) -> DesignResult:
    """Multi-start box-constrained pattern search, checked against a verification grid.

    The returned ``J_star`` is no worse than any grid point. Without any source
    access the objective is flat: it is evaluated once and ``y_star`` is None.
    """
    f = _Objective(model, scenario, access, bias)
    if not np.any(f.access):
        f(f.box[:, 0])
        return _result(f, "flat", flat=True)
    _optimize(f, scenario)
    return _result(f, "pattern_search", flat=False)


def subset_search(model: MultilayerModel, scenario: ScenarioSpec, k: int) -> DesignResult:
    """Best ``k``-agent access subset (drawn from the scenario's access set) with optimized ``y``.

    Exhaustive while the number of subsets stays within ``scenario.subset_cap``,
    otherwise greedy construction followed by pairwise swaps from several
    starts. Either way the inner optimization is local, so the result is
    labeled heuristic.
    """
    scenario.check(model)
    pool = [int(i) for i in np.flatnonzero(scenario.access)]
    if not 0 <= k <= model.n:
        raise ValueError(f"k must lie in 0..{model.n}")
    k = min(k, len(pool))
    evaluated: dict = {}
    total = [0]

    def run(subset) -> DesignResult:
        key = tuple(sorted(subset))
        if key not in evaluated:
            access = np.zeros(model.n)
            access[list(key)] = 1.0
            res = optimize(model, scenario, access, scenario.bias * access)
            total[0] += res.evaluations
            evaluated[key] = res
        return evaluated[key]

    def value(subset) -> float:
        J = run(subset).J_star
        return J if scenario.direction == "minimize" else -J

    if math.comb(len(pool), k) <= scenario.subset_cap:
        method = "subset_exhaustive"
        for subset in itertools.combinations(pool, k):
            run(subset)
    else:
        method = "subset_greedy_swap"
        rng = np.random.default_rng(scenario.seed)
        for r in range(scenario.restarts):
            if r == 0:
                current: list = []
                for _ in range(k):
                    rest = [a for a in pool if a not in current]
                    current.append(min(rest, key=lambda a: value(current + [a])))
            else:
                current = sorted(rng.choice(pool, size=k, replace=False).tolist())
            improved = True
            while improved:
                improved = False
                base = value(current)
                for a in list(current):
                    for b in pool:
                        if b in current:
                            continue
                        cand = [b if v == a else v for v in current]
                        if value(cand) < base - IMPROVE_TOL:
                            current, improved = cand, True
                            break
                    if improved:
                        break

    best_key = min(evaluated, key=lambda key: value(key))
    best = evaluated[best_key]
    return DesignResult(y_star=best.y_star, J_star=best.J_star, delta_percent=best.delta_percent,
                        evaluations=total[0], fixed_point=best.fixed_point, method=method,
                        heuristic=True, subset=best_key, scenario=scenario.name,
                        objective_layer=scenario.objective_layer, trace=best.trace)


def run_scenario(model: MultilayerModel, scenario: ScenarioSpec) -> DesignResult:
    if scenario.subset_size is not None:
        return subset_search(model, scenario, scenario.subset_size)
    return optimize(model, scenario)


# --------------------------------------------------------------------------- summary table


def scenario_table(results) -> list:
    """Rows ``[label, scenario_1, scenario_2, ...]`` for y*, objective-layer change and J.

    Values use 4 decimals; a scenario without a source strategy shows ``-``.
    """
    def fmt(v):
        return "-" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.4f}"

    header = ["quantity"] + [r.scenario for r in results]
    ys = ["y_star"] + ["-" if r.y_star is None else "(" + ", ".join(f"{v:.4f}" for v in r.y_star) + ")"
                       for r in results]
    return [header, ys,
            ["delta_percent"] + [fmt(float(r.delta_percent[r.objective_layer])) for r in results],
            ["J"] + [fmt(r.J_star) for r in results]]
