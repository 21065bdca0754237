"""Synchronous update map, trajectory simulation and cycle detection."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import (
    STATE_TOL,
    AssumptionError,
    MultilayerModel,
    SubStochasticError,
    check_state,
    source_weights,
)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100_000
CYCLE_WINDOW = 256


def step(model: MultilayerModel, x, enforce_substochastic: bool = True) -> np.ndarray:
    """One synchronous update of every agent in every layer.

    Each coordinate is the convex combination of the innate opinion, the
    cross-layer social aggregate and the source opinions. With
    ``enforce_substochastic=False`` a negative innate-opinion coefficient is
    tolerated, but the result must still stay in ``[0, 1]``.
    """
    n, q = model.n, model.q
    x = np.asarray(x, dtype=float)
    X = x.reshape(q, n)
    B = source_weights(model, x)

    WX = np.einsum("jia,ja->ji", model.W, X)
    social = np.einsum("lji,ji->li", model.lam, WX)
    coef = 1.0 - model.alpha * (1.0 + B.sum(axis=2))
    if enforce_substochastic and coef.min() < -STATE_TOL:
        l, i = np.unravel_index(int(np.argmin(coef)), coef.shape)
        raise SubStochasticError(int(l), int(i), float(coef[l, i]))
    src = np.einsum("lik,lk->li", B, model.Y)
    out = coef * model.S + model.alpha * (social + src)

    lo, hi = out.min(), out.max()
    if lo < -STATE_TOL or hi > 1.0 + STATE_TOL:
        l, i = np.unravel_index(int(np.argmin(out) if lo < -STATE_TOL else np.argmax(out)), out.shape)
        raise AssumptionError(f"update left [0, 1] at layer {l}, agent {i} "
                              f"(value {out[l, i]:.6g}); the model is not invariant on the unit box")
    return np.clip(out, 0.0, 1.0).reshape(-1)


def residual(model: MultilayerModel, x, enforce_substochastic: bool = True) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.abs(step(model, x, enforce_substochastic) - x).max())


@dataclass
class Trajectory:
    """Result of :func:`simulate`.

    ``status`` is ``"converged"``, ``"max_iter"`` or ``"cycle"`` (then
    ``period`` and ``orbit`` are set). ``states`` is the full history when it was
    requested, otherwise the last two states.
    """

    states: list
    status: str
    iterations: int
    final_residual: float
    tol: float
    period: Optional[int] = None
    orbit: Optional[list] = field(default=None, repr=False)

    @property
    def x(self) -> np.ndarray:
        return self.states[-1]

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def summary(self) -> dict:
        out = {"status": self.status, "iterations": self.iterations,
               "final_residual": self.final_residual, "fixed_point": None}
        if self.status == "converged":
            out["fixed_point"] = self.x.tolist()
        if self.period is not None:
            out["period"] = self.period
            out["orbit"] = [np.asarray(o).tolist() for o in self.orbit]
        return out


def simulate(
    model: MultilayerModel,
    x0=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    detect_cycles: bool = True,
    keep_history: bool = False,
    enforce_substochastic: bool = True,
    window: int = CYCLE_WINDOW,
) -> Trajectory:
    """Iterate the update map from ``x0`` (default: the innate opinions).

    Stops when ``||x[t+1] - x[t]||_inf < tol``, after ``max_iter`` steps, or,
    with ``detect_cycles``, when the newest state is within ``tol`` of the
    state ``p >= 2`` steps earlier (smallest such ``p`` in the last ``window``
    states) and the recurrence holds for ``p`` further steps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    x = check_state(model, model.s if x0 is None else x0)
    history = [x] if keep_history else None
    ring = np.empty((window, x.size))  # most recent states, newest at ring[(pos - 1) % window]
    ring[0], pos, filled = x, 1, 1
    lags = np.arange(window)
    candidate = None  # (period, confirmations still needed)
    res = float("inf")

    def back(p):
        return ring[(pos - 1 - p) % window]

    for t in range(1, max_iter + 1):
        x_new = step(model, x, enforce_substochastic)
        res = float(np.abs(x_new - x).max())
        if keep_history:
            history.append(x_new)
        if res < tol:
            return Trajectory(history if keep_history else [x, x_new], "converged", t, res, tol)
        ring[pos % window] = x_new
        pos, filled = pos + 1, min(filled + 1, window)

        if detect_cycles:
            if candidate is not None:
                p, remaining = candidate
                if np.abs(x_new - back(p)).max() < tol:
                    remaining -= 1
                    if remaining == 0:
                        orbit = [ring[(pos - p + j) % window].copy() for j in range(p)]
                        states = history if keep_history else [x, x_new]
                        return Trajectory(states, "cycle", t, res, tol, period=p, orbit=orbit)
                    candidate = (p, remaining)
                else:
                    candidate = None
            if candidate is None and filled > 2:
                p = lags[2:filled]
                close = np.abs(ring[(pos - 1 - p) % window] - x_new).max(axis=1) < tol
                if close.any():
                    first = int(p[np.argmax(close)])
                    candidate = (first, first)
        x = x_new

    last = [back(1).copy(), back(0).copy()] if filled > 1 else [x]
    return Trajectory(history if keep_history else last, "max_iter", max_iter, res, tol)
