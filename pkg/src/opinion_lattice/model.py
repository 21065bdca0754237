"""Model data types, assumption checks and source-influence weights.

Shapes used throughout the package (all 0-based):

* ``W``      ``(q, n, n)``   per-layer social weights, row ``i`` = who agent ``i`` listens to
* ``alpha``  ``(q, n)``      diagonal of the susceptibility matrix of each layer
* ``lam``    ``(q, q, n)``   ``lam[l, j, i]`` = weight agent ``i`` in layer ``l`` gives to
  the layer-``j`` social aggregate
* ``s``      ``(n*q,)``      innate opinions, layer-major (entry ``l*n + i``)
* ``y``      ``(m*q,)``      source opinions, layer-major (entry ``l*m + k``)
* source matrices ``(q, n, m)`` and mismatch weights ``c`` ``(q, n, m, q)`` where
  ``c[l, i, k]`` weights the ``q`` coordinates of ``|x_i - y_k|``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

ROW_TOL = 1e-9
RENORMALIZE_TOL = 1e-6
STATE_TOL = 1e-12


class ModelError(ValueError):
    """Structurally invalid model (shapes, ranges, normalization)."""


class AssumptionError(ValueError):
    """A well-formed model violates an assumption an operation depends on."""


class SubStochasticError(AssumptionError):
    def __init__(self, layer: int, agent: int, coefficient: float):
        self.layer = layer
        self.agent = agent
        self.coefficient = coefficient
        super().__init__(
            f"alpha*(1 + sum of source weights) exceeds 1 at layer {layer}, agent {agent} "
            f"(innate-opinion coefficient {coefficient:.3g} < 0)"
        )


class ClampWarning(UserWarning):
    """A custom source-influence evaluator left its declared bounds."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_range(name: str, a: np.ndarray, lo: float = 0.0, hi: Optional[float] = 1.0):
    if not np.all(np.isfinite(a)):
        raise ModelError(f"{name} contains non-finite entries")
    if np.any(a < lo):
        raise ModelError(f"{name} has entries below {lo}")
    if hi is not None and np.any(a > hi):
        raise ModelError(f"{name} has entries above {hi}")


def _normalize_rows(name: str, a: np.ndarray, axis: int) -> np.ndarray:
    """Rescale sums along ``axis`` to one, tolerating only rounding noise."""
    sums = a.sum(axis=axis, keepdims=True)
    err = np.abs(sums - 1.0)
    worst = float(err.max()) if err.size else 0.0
    if worst > RENORMALIZE_TOL:
        raise ModelError(f"{name} must sum to 1 (worst deviation {worst:.3g})")
    if worst > ROW_TOL:
        warnings.warn(f"{name} renormalized (worst deviation {worst:.3g})", stacklevel=3)
        return a / sums
    return a


def layer_local_mismatch(n: int, m: int, q: int) -> np.ndarray:
    """Mismatch weights ``c[l, i, k] = e_l`` (each layer only compares itself)."""
    c = np.zeros((q, n, m, q))
    for l in range(q):
        c[l, :, :, l] = 1.0
    return c


def _check_mismatch_weights(c, n, m, q) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape != (q, n, m, q):
        raise ModelError(f"c must have shape {(q, n, m, q)}, got {c.shape}")
    _check_range("c", c, 0.0, None)
    return _normalize_rows("c vectors", c, axis=3)


# --------------------------------------------------------------------------- rules


@dataclass(frozen=True, eq=False)
class AffineRule:
    """``b = omega - gamma * beta``; weights fall linearly with mismatch."""

    omega: np.ndarray
    gamma: np.ndarray
    c: Optional[np.ndarray] = None

    kind = "affine"

    def _bind(self, n, m, q) -> "AffineRule":
        omega = np.asarray(self.omega, dtype=float)
        gamma = np.asarray(self.gamma, dtype=float)
        for name, a in (("omega", omega), ("gamma", gamma)):
            if a.shape != (q, n, m):
                raise ModelError(f"{name} must have shape {(q, n, m)}, got {a.shape}")
            _check_range(name, a, 0.0, None)
        if np.any(gamma > omega):
            raise ModelError("affine rule requires 0 <= gamma <= omega entrywise")
        c = layer_local_mismatch(n, m, q) if self.c is None else _check_mismatch_weights(self.c, n, m, q)
        return AffineRule(_frozen(omega), _frozen(gamma), _frozen(c))

    def bounds(self):
        return self.omega - self.gamma, self.omega


@dataclass(frozen=True, eq=False)
class BoundedConfidenceRule:
    """``b = P`` while the mismatch is within the agent's threshold, else 0."""

    p: np.ndarray
    eps: np.ndarray
    c: Optional[np.ndarray] = None

    kind = "bounded_confidence"

    def _bind(self, n, m, q) -> "BoundedConfidenceRule":
        p = np.asarray(self.p, dtype=float)
        eps = np.asarray(self.eps, dtype=float).reshape(-1)
        if p.shape != (q, n, m):
            raise ModelError(f"p must have shape {(q, n, m)}, got {p.shape}")
        if eps.shape != (n,):
            raise ModelError(f"eps must have length {n}")
        _check_range("p", p, 0.0, None)
        _check_range("eps", eps, 0.0, None)
        c = layer_local_mismatch(n, m, q) if self.c is None else _check_mismatch_weights(self.c, n, m, q)
        return BoundedConfidenceRule(_frozen(p), _frozen(eps), _frozen(c))

    def bounds(self):
        return np.zeros_like(self.p), self.p


Evaluator = Callable[["MultilayerModel", np.ndarray, int, int, int], float]


@dataclass(frozen=True, eq=False)
class CustomBoundedRule:
    """Arbitrary weight function sandwiched between two constant matrices.

    ``evaluator(model, x, l, i, k)`` returns the raw weight; it is clamped into
    ``[phi_lower, phi_upper]``. Entries with ``phi_upper == 0`` are never evaluated.
    ``mu`` holds optional per-entry Lipschitz constants; ``entries`` keeps the
    catalog description when the evaluator was built from one (needed for JSON).
    """

    evaluator: Evaluator
    phi_lower: np.ndarray
    phi_upper: np.ndarray
    mu: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None
    entries: Optional[tuple] = None

    kind = "custom_bounded"

    def _bind(self, n, m, q) -> "CustomBoundedRule":
        lo = np.asarray(self.phi_lower, dtype=float)
        hi = np.asarray(self.phi_upper, dtype=float)
        for name, a in (("phi_lower", lo), ("phi_upper", hi)):
            if a.shape != (q, n, m):
                raise ModelError(f"{name} must have shape {(q, n, m)}, got {a.shape}")
            _check_range(name, a, 0.0, None)
        if np.any(lo > hi):
            raise ModelError("phi_lower must not exceed phi_upper")
        mu = None
        if self.mu is not None:
            mu = np.asarray(self.mu, dtype=float)
            if mu.shape != (q, n, m):
                raise ModelError(f"mu must have shape {(q, n, m)}")
            _check_range("mu", mu, 0.0, None)
            mu = _frozen(mu)
        c = None if self.c is None else _frozen(_check_mismatch_weights(self.c, n, m, q))
        return CustomBoundedRule(self.evaluator, _frozen(lo), _frozen(hi), mu, c, self.entries)

    def bounds(self):
        return self.phi_lower, self.phi_upper


SourceRule = Union[AffineRule, BoundedConfidenceRule, CustomBoundedRule]


# --------------------------------------------------------------------------- model


@dataclass(frozen=True, eq=False)
class MultilayerModel:
    """Static parameters of the topic-layered network.

    Arrays are copied, checked and made read-only on construction; row sums
    off by at most ``1e-6`` are renormalized with a warning.
    """

    n: int
    m: int
    q: int
    W: np.ndarray
    alpha: np.ndarray
    lam: np.ndarray
    s: np.ndarray
    y: np.ndarray
    rule: SourceRule
    description: str = field(default="", compare=False)

    def __post_init__(self):
        n, m, q = int(self.n), int(self.m), int(self.q)
        if n < 1 or q < 1 or m < 0:
            raise ModelError("need n >= 1, q >= 1, m >= 0")
        W = np.asarray(self.W, dtype=float)
        if W.shape != (q, n, n):
            raise ModelError(f"W must have shape {(q, n, n)}, got {W.shape}")
        _check_range("W", W, 0.0, None)
        W = _normalize_rows("W rows", W, axis=2)

        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.shape != (q, n):
            raise ModelError(f"alpha must have shape {(q, n)}, got {alpha.shape}")
        _check_range("alpha", alpha)

        lam = np.asarray(self.lam, dtype=float)
        if lam.shape != (q, q, n):
            raise ModelError(f"lambda must have shape {(q, q, n)}, got {lam.shape}")
        _check_range("lambda", lam)
        lam = _normalize_rows("lambda over source layers", lam, axis=1)

        s = np.asarray(self.s, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if s.shape != (n * q,):
            raise ModelError(f"s must have n*q = {n * q} entries, got {s.size}")
        if y.shape != (m * q,):
            raise ModelError(f"y must have m*q = {m * q} entries, got {y.size}")
        _check_range("s", s)
        _check_range("y", y)

        if not hasattr(self.rule, "_bind"):
            raise ModelError(f"unsupported source rule {type(self.rule).__name__}")
        rule = self.rule._bind(n, m, q)

        for name, value in (("n", n), ("m", m), ("q", q), ("W", _frozen(W)),
                            ("alpha", _frozen(alpha)), ("lam", _frozen(lam)),
                            ("s", _frozen(s)), ("y", _frozen(y)), ("rule", rule)):
            object.__setattr__(self, name, value)

    # views ---------------------------------------------------------------

    @property
    def S(self) -> np.ndarray:
        """Innate opinions as a ``(q, n)`` array."""
        return self.s.reshape(self.q, self.n)

    @property
    def Y(self) -> np.ndarray:
        """Source opinions as a ``(q, m)`` array."""
        return self.y.reshape(self.q, self.m)

    def replace(self, **changes) -> "MultilayerModel":
        fields = dict(n=self.n, m=self.m, q=self.q, W=self.W, alpha=self.alpha, lam=self.lam,
                      s=self.s, y=self.y, rule=self.rule, description=self.description)
        fields.update(changes)
        return MultilayerModel(**fields)


# --------------------------------------------------------------------------- state helpers


def agent_vector(x: np.ndarray, n: int, q: int, i: int) -> np.ndarray:
    """Opinion vector of agent ``i`` across the ``q`` layers."""
    return np.asarray(x).reshape(q, n)[:, i]


def source_vector(y: np.ndarray, m: int, q: int, k: int) -> np.ndarray:
    return np.asarray(y).reshape(q, m)[:, k]


def stack(per_agent: np.ndarray) -> np.ndarray:
    """``(n, q)`` agent-by-layer array to the layer-major stacked vector."""
    return np.asarray(per_agent, dtype=float).T.reshape(-1)


def unstack(x: np.ndarray, n: int, q: int) -> np.ndarray:
    """Inverse of :func:`stack`."""
    return np.asarray(x).reshape(q, n).T.copy()


def check_state(model: MultilayerModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (model.n * model.q,):
        raise ModelError(f"state must have n*q = {model.n * model.q} entries, got {x.size}")
    if np.any(x < -STATE_TOL) or np.any(x > 1 + STATE_TOL) or not np.all(np.isfinite(x)):
        raise ModelError("state must lie in [0, 1]")
    return np.clip(x, 0.0, 1.0)


# --------------------------------------------------------------------------- mismatch / weights


def _mismatch_weights(model: MultilayerModel) -> np.ndarray:
    c = getattr(model.rule, "c", None)
    if c is None:
        raise ModelError("this source rule carries no mismatch weights c")
    return c


def mismatch_all(model: MultilayerModel, x: np.ndarray) -> np.ndarray:
    """All mismatch scores at once, shape ``(q, n, m)``."""
    c = _mismatch_weights(model)
    X = np.asarray(x, dtype=float).reshape(model.q, model.n)
    D = np.abs(X[:, :, None] - model.Y[:, None, :])  # (j, i, k)
    return np.einsum("likj,jik->lik", c, D)


def mismatch(model: MultilayerModel, x, l: int, i: int, k: int) -> float:
    """Weighted coordinate distance between agent ``i`` and source ``k`` used by layer ``l``."""
    _check_index(model, l, i, k)
    c = _mismatch_weights(model)
    xi = agent_vector(x, model.n, model.q, i)
    yk = source_vector(model.y, model.m, model.q, k)
    return float(c[l, i, k] @ np.abs(xi - yk))


def _check_index(model, l, i, k):
    if not (0 <= l < model.q and 0 <= i < model.n and 0 <= k < model.m):
        raise IndexError(f"(layer, agent, source) = {(l, i, k)} out of range "
                         f"for q={model.q}, n={model.n}, m={model.m}")


def _custom_weights(model: MultilayerModel, x: np.ndarray, warn: bool = True) -> np.ndarray:
    rule = model.rule
    out = np.zeros((model.q, model.n, model.m))
    clamped = 0
    for l, i, k in zip(*np.nonzero(rule.phi_upper)):
        raw = float(rule.evaluator(model, x, int(l), int(i), int(k)))
        lo, hi = rule.phi_lower[l, i, k], rule.phi_upper[l, i, k]
        if not lo <= raw <= hi:
            clamped += 1
            raw = min(max(raw, lo), hi)
        out[l, i, k] = raw
    if clamped and warn:
        warnings.warn(f"{clamped} custom source weight(s) clamped into [phi_lower, phi_upper]",
                      ClampWarning, stacklevel=3)
    return out


def source_weights(model: MultilayerModel, x, warn: bool = True) -> np.ndarray:
    """All source-influence weights ``B_l(x)(i, k)``, shape ``(q, n, m)``."""
    rule = model.rule
    if model.m == 0:
        return np.zeros((model.q, model.n, 0))
    x = np.asarray(x, dtype=float)
    if isinstance(rule, AffineRule):
        return rule.omega - rule.gamma * mismatch_all(model, x)
    if isinstance(rule, BoundedConfidenceRule):
        beta = mismatch_all(model, x)
        # exact comparison: the threshold itself still admits the source
        return np.where(beta <= rule.eps[None, :, None], rule.p, 0.0)
    return _custom_weights(model, x, warn=warn)


def source_weight(model: MultilayerModel, x, l: int, i: int, k: int) -> float:
    _check_index(model, l, i, k)
    rule = model.rule
    if isinstance(rule, AffineRule):
        return float(rule.omega[l, i, k] - rule.gamma[l, i, k] * mismatch(model, x, l, i, k))
    if isinstance(rule, BoundedConfidenceRule):
        return float(rule.p[l, i, k]) if mismatch(model, x, l, i, k) <= rule.eps[i] else 0.0
    raw = float(rule.evaluator(model, np.asarray(x, dtype=float), l, i, k))
    lo, hi = float(rule.phi_lower[l, i, k]), float(rule.phi_upper[l, i, k])
    if not lo <= raw <= hi:
        warnings.warn(f"custom weight {raw:.6g} at {(l, i, k)} clamped into [{lo}, {hi}]",
                      ClampWarning, stacklevel=2)
        raw = min(max(raw, lo), hi)
    return raw


# --------------------------------------------------------------------------- operators


def build_supra_social(model: MultilayerModel) -> np.ndarray:
    """Stacked ``nq x nq`` matrix whose block ``(l, j)`` is ``A_l Lambda_{l,j} W_j``."""
    n, q = model.n, model.q
    blocks = model.alpha[:, None, :, None] * model.lam[:, :, :, None] * model.W[None, :, :, :]
    return blocks.transpose(0, 2, 1, 3).reshape(n * q, n * q)


def susceptibility(model: MultilayerModel) -> np.ndarray:
    """Diagonal of the stacked susceptibility matrix."""
    return model.alpha.reshape(-1)


# --------------------------------------------------------------------------- validation


@dataclass
class AssumptionReport:
    """Outcome of :func:`validate`.

    ``kappa_rows`` and ``substochastic_margin`` are ``(q, n)`` arrays; a row is
    sub-stochastic when its margin is >= 0. ``kappa_status`` is ``"certified"``,
    ``"estimated"`` (custom rule without declared Lipschitz constants) or
    ``"not_lipschitz"`` (bounded-confidence rule with a live threshold).
    """

    row_stochastic_ok: list
    sub_stochastic_ok: bool
    kappa: float
    kappa_aff: Optional[float]
    kappa_rows: np.ndarray
    substochastic_margin: np.ndarray
    kappa_status: str
    kappa_uniform: Optional[float]
    resolvent_ok: bool
    max_alpha: float
    max_alpha_at: tuple = (0, 0)
    mu: Optional[np.ndarray] = None

    @property
    def contractive(self) -> bool:
        return (all(self.row_stochastic_ok) and self.sub_stochastic_ok
                and self.kappa < 1.0 and self.resolvent_ok)

    def problems(self) -> list:
        out = []
        for l, ok in enumerate(self.row_stochastic_ok):
            if not ok:
                out.append(f"W[{l}] is not row-stochastic")
        if not self.resolvent_ok:
            l, i = self.max_alpha_at
            out.append(f"susceptibility alpha[{l}][{i}] = {self.max_alpha:g} violates max alpha < 1, "
                       "so I - AW is not invertible (resolvent precondition)")
        if not self.sub_stochastic_ok:
            l, i = np.unravel_index(int(np.argmin(self.substochastic_margin)), self.substochastic_margin.shape)
            out.append(f"alpha*(1 + worst-case source weight) exceeds 1 at layer {l}, agent {i}")
        if not self.kappa < 1.0:
            l, i = np.unravel_index(int(np.argmax(self.kappa_rows)), self.kappa_rows.shape)
            out.append(f"contraction factor kappa = {self.kappa:.6g} >= 1 (worst row: layer {l}, agent {i})")
        return out

    def to_dict(self) -> dict:
        return {
            "contractive": self.contractive,
            "row_stochastic_ok": list(self.row_stochastic_ok),
            "sub_stochastic_ok": self.sub_stochastic_ok,
            "resolvent_ok": self.resolvent_ok,
            "max_alpha": self.max_alpha,
            "kappa": self.kappa,
            "kappa_status": self.kappa_status,
            "kappa_aff": self.kappa_aff,
            "kappa_uniform": self.kappa_uniform,
            "kappa_rows": self.kappa_rows.tolist(),
            "substochastic_margin": self.substochastic_margin.tolist(),
            "problems": self.problems(),
        }


def _kappa_rows(model: MultilayerModel, mu: np.ndarray) -> np.ndarray:
    gap = np.abs(model.Y[:, None, :] - model.S[:, :, None])  # (l, i, k)
    with np.errstate(invalid="ignore"):
        term = np.where(gap > 0, mu * gap, 0.0)
    return model.alpha * (1.0 + term.sum(axis=2))


def estimate_lipschitz(model: MultilayerModel, pairs: int = 10_000, seed: int = 0) -> np.ndarray:
    """Empirical per-entry Lipschitz constants of a custom rule (a lower estimate).

    Half of the pairs are independent uniform draws, half are local
    perturbations, since distant pairs alone underestimate steep regions.
    """
    rng = np.random.default_rng(seed)
    nq = model.n * model.q
    mu = np.zeros((model.q, model.n, model.m))
    for r in range(pairs):
        x = rng.random(nq)
        if r % 2:
            z = np.clip(x + rng.uniform(-1, 1, nq) * 10 ** rng.uniform(-4, -1), 0.0, 1.0)
        else:
            z = rng.random(nq)
        d = np.abs(x - z).max()
        if d == 0:
            continue
        bx = _custom_weights(model, x, warn=False)
        bz = _custom_weights(model, z, warn=False)
        np.maximum(mu, np.abs(bx - bz) / d, out=mu)
    return mu


def validate(model: MultilayerModel, mu_pairs: int = 10_000) -> AssumptionReport:
    """Check row-stochasticity, sub-stochasticity and the contraction factors.

    Never raises for a merely non-contractive model; structural problems are
    rejected earlier, when the model is constructed.
    """
    rule = model.rule
    row_ok = [bool(np.all(np.abs(model.W[l].sum(axis=1) - 1.0) <= ROW_TOL)) for l in range(model.q)]
    _, worst_b = rule.bounds()
    margin = 1.0 - model.alpha * (1.0 + worst_b.sum(axis=2))
    sub_ok = bool(np.all(margin >= -STATE_TOL))

    kappa_aff = None
    kappa_uniform = None
    mu = None
    status = "certified"
    if isinstance(rule, AffineRule):
        mu = rule.gamma
        rows = _kappa_rows(model, mu)
        kappa_aff = float(rows.max())
        kappa_uniform = float((model.alpha * (1.0 + rule.gamma.sum(axis=2))).max())
    elif isinstance(rule, BoundedConfidenceRule):
        # a jump of size P is not Lipschitz unless it cannot matter
        live = (rule.p > 0) & (model.alpha[:, :, None] > 0)
        mu = np.where(live, np.inf, 0.0)
        rows = _kappa_rows(model, mu)
        if np.isinf(rows).any():
            status = "not_lipschitz"
    else:
        if rule.mu is not None:
            mu = rule.mu
        else:
            mu = estimate_lipschitz(model, pairs=mu_pairs)
            status = "estimated"
        rows = _kappa_rows(model, mu)
    report = AssumptionReport(
        row_stochastic_ok=row_ok,
        sub_stochastic_ok=sub_ok,
        kappa=float(rows.max()),
        kappa_aff=kappa_aff,
        kappa_rows=rows,
        substochastic_margin=margin,
        kappa_status=status,
        kappa_uniform=kappa_uniform,
        resolvent_ok=bool(model.alpha.max() < 1.0),
        max_alpha=float(model.alpha.max()),
        max_alpha_at=tuple(int(v) for v in np.unravel_index(int(np.argmax(model.alpha)), model.alpha.shape)),
        mu=mu,
    )
    return report
