"""Steady-state computation: resolvent, componentwise bounds and sign-pattern search.

Under the affine rule the only nonlinearity is the sign of each coordinate of
``x_i - y_k``. Fixing those signs gives an affine system

    x = A_a s + B_a(theta) y + W_a(theta) x,

whose equilibrium is one linear solve. The exact fixed point is the unique
candidate whose realized signs agree with the pattern that produced it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import residual, simulate
from .model import (
    AffineRule,
    AssumptionError,
    ModelError,
    MultilayerModel,
    build_supra_social,
    validate,
)

TIE_TOL = 1e-10
MAX_CANDIDATES = 2 ** 20


class NoConsistentPatternError(RuntimeError):
    """No enumerated sign pattern reproduced itself; carries the two nearest misses."""

    def __init__(self, misses):
        self.misses = misses
        detail = "; ".join(f"violation {v:.3g}, residual {r:.3g}" for v, r, _ in misses)
        super().__init__("no sign pattern passed the consistency check "
                         f"(likely a tolerance issue at a sign boundary): {detail}")


@dataclass
class FixedPointBounds:
    x_lower: np.ndarray
    x_upper: np.ndarray

    def __post_init__(self):
        if np.any(self.x_lower > self.x_upper + 1e-12):
            raise ValueError("x_lower must not exceed x_upper")

    def contains(self, x, atol: float = 1e-12) -> bool:
        x = np.asarray(x)
        return bool(np.all(self.x_lower - atol <= x) and np.all(x <= self.x_upper + atol))


@dataclass
class SignPattern:
    """Signs of ``x_i(l) - y_k(l)`` for every (agent, source, coordinate).

    Arrays are ``(n, m, q)``. ``active`` marks agent-source pairs with any
    source weight, ``relevant`` the coordinates that actually move some weight
    (nonzero ``gamma * c``), ``locked`` the coordinates fixed by the bounds.
    """

    theta: np.ndarray
    locked: np.ndarray
    active: np.ndarray
    relevant: np.ndarray

    @property
    def free(self) -> np.ndarray:
        return self.active[:, :, None] & ~self.locked

    @property
    def free_count(self) -> int:
        return int(self.free.sum())

    def free_coordinates(self) -> list:
        return [tuple(int(v) for v in idx) for idx in zip(*np.nonzero(self.free))]

    def search_coordinates(self) -> list:
        """Free coordinates that influence the dynamics (the ones worth enumerating)."""
        return [tuple(int(v) for v in idx) for idx in zip(*np.nonzero(self.free & self.relevant))]

    def with_theta(self, theta) -> "SignPattern":
        return SignPattern(np.asarray(theta, dtype=np.int8), self.locked, self.active, self.relevant)


@dataclass
class AffineRegime:
    W_a: np.ndarray
    B_a: np.ndarray
    A_a: np.ndarray
    pattern: SignPattern
    kappa_aff: float

    def equilibrium(self, model: MultilayerModel) -> np.ndarray:
        rhs = self.A_a @ model.s + self.B_a @ model.y
        return _solve_refined(np.eye(len(rhs)) - self.W_a, rhs)


@dataclass
class FixedPointResult:
    fixed_point: np.ndarray
    method: str  # "closed_form" | "sign_search" | "iterative"
    bounds: FixedPointBounds
    regimes_tested: int
    locked_fraction: float
    pattern: Optional[SignPattern] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "fixed_point": self.fixed_point.tolist(),
            "method": self.method,
            "bounds": {"x_lower": self.bounds.x_lower.tolist(), "x_upper": self.bounds.x_upper.tolist()},
            "regimes_tested": self.regimes_tested,
            "locked_fraction": self.locked_fraction,
        }


@dataclass
class ClosedForm:
    applicable: bool
    fixed_point: Optional[np.ndarray]
    free: list


# --------------------------------------------------------------------------- linear algebra


def _solve_refined(M: np.ndarray, rhs: np.ndarray, rounds: int = 2) -> np.ndarray:
    x = np.linalg.solve(M, rhs)
    for _ in range(rounds):
        r = rhs - M @ x
        if np.abs(r).max(initial=0.0) <= 1e-15:
            break
        x = x + np.linalg.solve(M, r)
    return x


def resolvent(model: MultilayerModel) -> np.ndarray:
    """``Z = (I - AW)^{-1}``, entrywise nonnegative when every alpha is below 1."""
    if model.alpha.max() >= 1.0:
        l, i = np.unravel_index(int(np.argmax(model.alpha)), model.alpha.shape)
        raise AssumptionError(f"alpha[{l}][{i}] = {model.alpha[l, i]:g}: the resolvent needs "
                              "max alpha < 1, otherwise I - AW may be singular")
    M = np.eye(model.n * model.q) - build_supra_social(model)
    Z = np.linalg.solve(M, np.eye(len(M)))
    Z = Z + Z @ (np.eye(len(M)) - M @ Z)
    return Z


# --------------------------------------------------------------------------- bounds


def bounds(model: MultilayerModel, phi_lower=None, phi_upper=None) -> FixedPointBounds:
    """Componentwise envelope of the fixed point from constant weight bounds.

    By default the bounds come from the rule: ``[omega - gamma, omega]`` for
    the affine rule (mismatch at 1 and 0), the declared matrices for a custom
    rule, ``[0, P]`` for bounded confidence.
    """
    lo_default, hi_default = model.rule.bounds()
    lo = np.asarray(lo_default if phi_lower is None else phi_lower, dtype=float)
    hi = np.asarray(hi_default if phi_upper is None else phi_upper, dtype=float)
    shape = (model.q, model.n, model.m)
    if lo.shape != shape or hi.shape != shape:
        raise ModelError(f"weight bounds must have shape {shape}")
    if np.any(lo > hi):
        raise ModelError("lower weight bound exceeds upper weight bound")

    Z = resolvent(model)
    a = model.alpha.reshape(-1)
    s = model.s
    base = (1.0 - a) * s
    lo_y = np.einsum("lik,lk->li", lo, model.Y).reshape(-1)
    hi_y = np.einsum("lik,lk->li", hi, model.Y).reshape(-1)
    lo_rows = lo.sum(axis=2).reshape(-1)
    hi_rows = hi.sum(axis=2).reshape(-1)
    x_lower = Z @ (base + a * lo_y - a * hi_rows * s)
    x_upper = Z @ (base + a * hi_y - a * lo_rows * s)
    return FixedPointBounds(np.maximum(x_lower, 0.0), np.minimum(x_upper, 1.0))


# --------------------------------------------------------------------------- sign patterns


def _relevance(model: MultilayerModel) -> np.ndarray:
    rule = model.rule
    if isinstance(rule, AffineRule):
        weight = np.einsum("lik,likj->ikj", rule.gamma, rule.c)
        return weight > 0
    _, hi = rule.bounds()
    return np.broadcast_to((hi > 0).any(axis=0)[:, :, None], (model.n, model.m, model.q)).copy()


def fix_signs(model: MultilayerModel, b: FixedPointBounds) -> SignPattern:
    """Lock every coordinate whose source value lies strictly outside the bounds."""
    n, m, q = model.n, model.m, model.q
    _, hi = model.rule.bounds()
    active = (hi > 0).any(axis=0)  # (n, m)
    XL = b.x_lower.reshape(q, n).T[:, None, :]  # (n, 1, q)
    XU = b.x_upper.reshape(q, n).T[:, None, :]
    Yk = model.Y.T[None, :, :]  # (1, m, q)
    theta = np.zeros((n, m, q), dtype=np.int8)
    theta[np.broadcast_to(Yk > XU, theta.shape)] = -1
    theta[np.broadcast_to(Yk < XL, theta.shape)] = 1
    locked = (theta != 0) & active[:, :, None]
    theta[~locked] = 0
    return SignPattern(theta, locked, active, _relevance(model) & active[:, :, None])


class _RegimeBuilder:
    """Pattern-independent pieces of the affine regimes of one model."""

    def __init__(self, model: MultilayerModel):
        rule = model.rule
        if not isinstance(rule, AffineRule):
            raise AssumptionError("affine regimes need the affine source rule")
        report = validate(model)
        if not report.sub_stochastic_ok:
            raise AssumptionError("affine weights can exceed the sub-stochastic limit: need "
                                  "sum_k omega_l(i,k) <= (1 - alpha_l(i)) / alpha_l(i)")
        if report.kappa_aff >= 1.0:
            raise AssumptionError(f"affine contraction factor {report.kappa_aff:.6g} >= 1; "
                                  "regime solves are not guaranteed to be well posed")
        self.model = model
        self.kappa_aff = report.kappa_aff
        n, m, q = model.n, model.m, model.q
        self.a = model.alpha.reshape(-1)
        self.AW = build_supra_social(model)
        omega_blk = np.zeros((n * q, m * q))
        for l in range(q):
            omega_blk[l * n:(l + 1) * n, l * m:(l + 1) * m] = rule.omega[l]
        self.omega_blk = omega_blk
        self.A_a = np.diag(1.0 - self.a - self.a * rule.omega.sum(axis=2).reshape(-1))
        # gamma_l(i,k) * (s_l(i) - y_l(k)) * c_{l,i,k}(j), shape (l, i, k, j)
        gap = model.S[:, :, None] - model.Y[:, None, :]
        self.coef = (rule.gamma * gap)[..., None] * rule.c
        L, I, J = np.meshgrid(np.arange(q), np.arange(n), np.arange(q), indexing="ij")
        self.rx_rows = (L * n + I).reshape(-1)
        self.rx_cols = (J * n + I).reshape(-1)
        self.rhs_s = self.A_a @ model.s
        self.eye = np.eye(n * q)

    def matrices(self, theta: np.ndarray):
        n, m, q = self.model.n, self.model.m, self.model.q
        signed = self.coef * theta[None]  # (l, i, k, j)
        Rx = np.zeros((n * q, n * q))
        Rx[self.rx_rows, self.rx_cols] = signed.sum(axis=2).reshape(-1)
        # R^y(l,i) at column (j, k) is -(coefficient) * theta
        Ry = -signed.transpose(0, 1, 3, 2).reshape(n * q, q * m)
        W_a = self.AW + self.a[:, None] * Rx
        B_a = self.a[:, None] * (self.omega_blk + Ry)
        return W_a, B_a

    def regime(self, pattern: SignPattern) -> AffineRegime:
        W_a, B_a = self.matrices(pattern.theta)
        norm = float(np.abs(W_a).sum(axis=1).max())
        if norm > self.kappa_aff + 1e-12:
            raise AssertionError(f"regime row-sum norm {norm} exceeds kappa_aff {self.kappa_aff}")
        return AffineRegime(W_a, B_a, self.A_a, pattern, self.kappa_aff)

    def solve(self, theta: np.ndarray):
        W_a, B_a = self.matrices(theta)
        x = _solve_refined(self.eye - W_a, self.rhs_s + B_a @ self.model.y)
        return x, W_a


def build_regime(model: MultilayerModel, pattern: SignPattern) -> AffineRegime:
    """Assemble ``W_a = A(W + R^x)``, ``B_a = A(Omega + R^y)``, ``A_a = I - A - A Sigma_Omega``."""
    return _RegimeBuilder(model).regime(pattern)


def realized_signs(model: MultilayerModel, x: np.ndarray) -> np.ndarray:
    """``x_i(l) - y_k(l)`` arranged as ``(n, m, q)``."""
    X = np.asarray(x).reshape(model.q, model.n).T
    return X[:, None, :] - model.Y.T[None, :, :]


def _violation(diff: np.ndarray, theta: np.ndarray, mask: np.ndarray, tie_tol: float) -> float:
    """Largest distance by which a checked coordinate sits on the wrong side (0 = consistent)."""
    wrong = mask & (np.abs(diff) >= tie_tol) & (np.sign(diff) != theta)
    return float(np.abs(diff[wrong]).max()) if wrong.any() else 0.0


def _search_order(model, b: FixedPointBounds, coords):
    """Midpoint-heuristic signs and the enumeration order (most ambiguous first)."""
    mid = 0.5 * (b.x_lower + b.x_upper)
    guess, dist = [], []
    for i, k, j in coords:
        d = mid[j * model.n + i] - model.Y[j, k]
        guess.append(1 if d >= 0 else -1)
        dist.append(abs(d))
    order = np.argsort(dist, kind="stable")
    return np.asarray(guess, dtype=np.int8)[order], [coords[o] for o in order]


def solve_affine_exact(
    model: MultilayerModel,
    max_candidates: int = MAX_CANDIDATES,
    tie_tol: float = TIE_TOL,
    fallback_tol: float = 1e-12,
) -> FixedPointResult:
    """Exact fixed point of an affine-rule model by pruned sign-consistency search.

    Signs fixed by the bounds are locked; the remaining influential signs are
    enumerated over ``{-1, +1}`` (a coordinate within ``tie_tol`` of the source
    accepts either sign), most ambiguous coordinates flipped first. The first
    self-consistent candidate is returned. Above ``max_candidates`` the search
    is skipped and the iterated fixed point is returned, tagged ``"iterative"``.
    """
    builder = _RegimeBuilder(model)
    b = bounds(model)
    pattern = fix_signs(model, b)
    coords = pattern.search_coordinates()
    n_active = int(pattern.active.sum()) * model.q
    locked_fraction = float(pattern.locked.sum()) / n_active if n_active else 1.0
    d = len(coords)

    if 2 ** d > max_candidates:
        traj = simulate(model, tol=fallback_tol)
        return FixedPointResult(traj.x, "iterative", b, 0, locked_fraction, pattern)

    guess, coords = _search_order(model, b, coords)
    idx = tuple(np.array(coords, dtype=int).T) if d else None
    check = pattern.active[:, :, None] & pattern.relevant
    misses = []
    for tested, mask in enumerate(range(2 ** d), start=1):
        theta = pattern.theta.copy()
        if d:
            flips = ((mask >> np.arange(d)) & 1).astype(np.int8)
            theta[idx] = guess * (1 - 2 * flips)
        x, _ = builder.solve(theta)
        diff = realized_signs(model, x)
        v = _violation(diff, theta, check, tie_tol)
        if v == 0.0:
            inert = pattern.free & ~pattern.relevant
            theta[inert] = np.where(diff[inert] >= 0, 1, -1)
            method = "closed_form" if d == 0 else "sign_search"
            return FixedPointResult(np.clip(x, 0.0, 1.0), method, b, tested, locked_fraction,
                                    pattern.with_theta(theta))
        misses.append((v, residual(model, np.clip(x, 0.0, 1.0)), theta))
        misses = sorted(misses, key=lambda t: t[0])[:2]
    raise NoConsistentPatternError(misses)


def closed_form(model: MultilayerModel) -> ClosedForm:
    """Single-regime solution when the bounds pin down every influential sign."""
    builder = _RegimeBuilder(model)
    pattern = fix_signs(model, bounds(model))
    search = pattern.search_coordinates()
    if search:
        return ClosedForm(False, None, search)
    theta = pattern.theta.copy()
    theta[theta == 0] = 1  # inert coordinates: any sign gives the same regime
    x, _ = builder.solve(theta)
    return ClosedForm(True, np.clip(x, 0.0, 1.0), [])


def consistent_patterns(model: MultilayerModel, prune: bool = False, tie_tol: float = TIE_TOL):
    """Enumerate every sign pattern and return the consistent ones.

    Without ``prune`` all influential coordinates of active pairs are
    enumerated (no help from the bounds). Also returns the largest regime
    row-sum norm met, for auditing against ``kappa_aff``.
    """
    builder = _RegimeBuilder(model)
    if prune:
        pattern = fix_signs(model, bounds(model))
    else:
        n, m, q = model.n, model.m, model.q
        _, hi = model.rule.bounds()
        active = (hi > 0).any(axis=0)
        pattern = SignPattern(np.zeros((n, m, q), dtype=np.int8), np.zeros((n, m, q), bool),
                              active, _relevance(model) & active[:, :, None])
    coords = pattern.search_coordinates()
    idx = tuple(np.array(coords, dtype=int).T) if coords else None
    check = pattern.active[:, :, None] & pattern.relevant
    found, worst_norm = [], 0.0
    for mask in range(2 ** len(coords)):
        theta = pattern.theta.copy()
        if coords:
            theta[idx] = 1 - 2 * ((mask >> np.arange(len(coords))) & 1)
        x, W_a = builder.solve(theta)
        worst_norm = max(worst_norm, float(np.abs(W_a).sum(axis=1).max()))
        if _violation(realized_signs(model, x), theta, check, tie_tol) == 0.0:
            found.append((theta, x))
    return found, worst_norm, builder.kappa_aff
