"""Shared domain types: layer statistics, solver parameters, and solution plans.

Everything here is immutable after construction and validated up front;
a plan whose invariants do not hold cannot be built, it is rejected with
an exception rather than silently repaired.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

SIMPLEX_TOL = 1e-9

CLIP_LOWER = "lower"
CLIP_INTERIOR = "interior"
CLIP_UPPER = "upper"


class MdlcapError(Exception):
    """Base class for all errors raised by this package."""


class AllZeroError(MdlcapError, ValueError):
    """Every gain is zero; scores cannot be normalized."""


class NonFiniteError(MdlcapError, ValueError):
    """An input or an objective evaluation is NaN or infinite."""


class DimensionMismatchError(MdlcapError, ValueError):
    """Vector/matrix shapes disagree."""


class NotPositiveDefiniteError(MdlcapError):
    """Factorization of a regularized Hessian block failed (tau too small)."""


class InfeasibleError(MdlcapError, ValueError):
    """The constraint cannot be met on the given instance."""


class MaxIterExceededError(MdlcapError, RuntimeError):
    """Bisection hit the iteration cap before reaching the residual tolerance.

    Indicates pathological scaling of the instance.  The best bracket found
    is carried in ``lo``/``hi`` together with the residual at the midpoint.
    """

    def __init__(self, msg: str, lo: float, hi: float, residual: float):
        super().__init__(msg)
        self.lo = lo
        self.hi = hi
        self.residual = residual


class NoConvergenceError(MdlcapError, RuntimeError):
    """The projected-gradient oracle did not reach its gradient tolerance."""


def _as_1d(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def _check_finite(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite values")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LayerStats:
    """Per-layer record: quality score q, per-unit cost, and parameter count."""

    id: str
    q: float
    cost: float = 1.0
    size: int = 1

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("layer id must be a non-empty string")
        if not np.isfinite(self.q) or self.q < 0.0:
            raise ValueError(f"layer {self.id!r}: q must be finite and >= 0, got {self.q}")
        if not np.isfinite(self.cost) or self.cost <= 0.0:
            raise ValueError(f"layer {self.id!r}: cost must be finite and > 0, got {self.cost}")
        if int(self.size) != self.size or self.size < 1:
            raise ValueError(f"layer {self.id!r}: size must be an integer >= 1, got {self.size}")


class StatsVector:
    """Ordered collection of layer statistics with sum(q) = 1.

    Backed by flat arrays so the solvers stay O(K) with small constants even
    for K ~ 1e6; ``layers`` materializes the per-layer records on demand.
    """

    __slots__ = ("_ids", "_q", "_cost", "_size", "__dict__")

    def __init__(self, layers: Iterable[LayerStats]):
        records = tuple(layers)
        if not records:
            raise ValueError("StatsVector needs at least one layer")
        self._init_arrays(
            tuple(r.id for r in records),
            np.array([r.q for r in records], dtype=float),
            np.array([r.cost for r in records], dtype=float),
            np.array([r.size for r in records], dtype=float),
        )

    @classmethod
    def from_arrays(cls, ids: Sequence[str], q, cost=None, size=None) -> "StatsVector":
        """Build directly from arrays, skipping per-layer record construction."""
        self = cls.__new__(cls)
        q = _as_1d(q, "q")
        k = q.shape[0]
        if k == 0:
            raise ValueError("StatsVector needs at least one layer")
        if len(ids) != k:
            raise DimensionMismatchError(f"{len(ids)} ids for {k} scores")
        cost = np.ones(k) if cost is None else _as_1d(cost, "cost")
        size = np.ones(k) if size is None else _as_1d(size, "size")
        if cost.shape[0] != k or size.shape[0] != k:
            raise DimensionMismatchError("cost/size length disagrees with q")
        _check_finite(q, "q")
        _check_finite(cost, "cost")
        _check_finite(size, "size")
        if np.any(q < 0.0):
            raise ValueError("q must be >= 0 elementwise")
        if np.any(cost <= 0.0):
            raise ValueError("cost must be > 0 elementwise")
        if np.any(size < 1.0) or np.any(size != np.floor(size)):
            raise ValueError("size must be integer >= 1 elementwise")
        self._init_arrays(tuple(ids), q.copy(), cost.copy(), size.copy())
        return self

    def _init_arrays(self, ids, q, cost, size):
        if len(set(ids)) != len(ids):
            raise ValueError("layer ids must be unique")
        total = float(q.sum())
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"scores must sum to 1 within {SIMPLEX_TOL:g}, got {total!r}")
        self._ids = ids
        self._q = _freeze(q)
        self._cost = _freeze(cost)
        self._size = _freeze(size)

    @property
    def ids(self) -> tuple:
        return self._ids

    @property
    def q(self) -> np.ndarray:
        return self._q

    @property
    def cost(self) -> np.ndarray:
        return self._cost

    @property
    def size(self) -> np.ndarray:
        return self._size

    @cached_property
    def layers(self) -> tuple:
        return tuple(
            LayerStats(id=i, q=float(qk), cost=float(ck), size=int(nk))
            for i, qk, ck, nk in zip(self._ids, self._q, self._cost, self._size)
        )

    def __len__(self) -> int:
        return len(self._ids)

    def __repr__(self) -> str:
        return f"StatsVector(K={len(self)})"


def normalize_scores(zeta2, *, ids=None, cost=None, size=None) -> StatsVector:
    """Normalize raw layer gains into quality scores q_k = z_k / sum(z).

    Order is preserved and the result is invariant to positive rescaling of
    the input.  ``ids``/``cost``/``size`` default to positional labels and
    unit cost/size.
    """
    z = _as_1d(zeta2, "zeta2")
    _check_finite(z, "zeta2")
    if np.any(z < 0.0):
        raise ValueError("gains must be >= 0")
    total = z.sum()
    if total == 0.0:
        raise AllZeroError("all gains are zero; scores are undefined")
    q = z / total
    if ids is None:
        ids = tuple(str(i) for i in range(z.shape[0]))
    return StatsVector.from_arrays(ids, q, cost=cost, size=size)


def _positive(value: float, name: str) -> None:
    if not np.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be finite and > 0, got {value}")


def _nonnegative(value: float, name: str) -> None:
    if not np.isfinite(value) or value < 0.0:
        raise ValueError(f"{name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class AllocParams:
    """Hyperparameters of the capacity-allocation program.

    ``alpha`` scales the linear cost, ``gamma`` the concave benefit,
    ``beta`` the score emphasis, and ``budget`` caps sum(cost * capacity).
    """

    alpha: float
    gamma: float
    beta: float
    budget: float

    def __post_init__(self):
        _positive(self.alpha, "alpha")
        _positive(self.gamma, "gamma")
        _nonnegative(self.beta, "beta")
        _nonnegative(self.budget, "budget")


@dataclass(frozen=True)
class PruneParams:
    """Hyperparameters of the pruning program.

    ``bits`` is the per-parameter storage cost, ``eta`` scales the quadratic
    degradation penalty, ``kappa`` the score emphasis, and ``target`` is the
    minimum number of parameters to remove globally.
    """

    bits: float
    eta: float
    kappa: float
    target: float

    def __post_init__(self):
        _positive(self.bits, "bits")
        _positive(self.eta, "eta")
        _nonnegative(self.kappa, "kappa")
        _nonnegative(self.target, "target")


class AllocPlan:
    """Solution of the allocation program: capacities, dual value, residuals.

    Invariants checked at construction:
      * e >= 0 elementwise and sum(cost * e) <= budget + tol
      * lam == 0 implies the unconstrained optimum is feasible;
        lam > 0 implies the budget binds within tol
    """

    __slots__ = ("stats", "params", "e", "lam", "budget_residual", "kkt_residual",
                 "tol", "iterations", "__dict__")

    def __init__(self, stats: StatsVector, params: AllocParams, e, lam: float,
                 budget_residual: float, kkt_residual: float, tol: float,
                 iterations: int = 0):
        e = _as_1d(e, "e")
        if e.shape[0] != len(stats):
            raise DimensionMismatchError("capacity vector length disagrees with stats")
        _check_finite(e, "e")
        if np.any(e < 0.0):
            raise ValueError("capacities must be >= 0")
        if not np.isfinite(lam) or lam < 0.0:
            raise ValueError(f"dual value must be finite and >= 0, got {lam}")
        spend = float(stats.cost @ e)
        if spend > params.budget + tol:
            raise ValueError(f"plan overspends budget: {spend!r} > {params.budget!r} + {tol:g}")
        if lam > 0.0 and abs(spend - params.budget) > tol:
            raise ValueError("lam > 0 but budget constraint is not binding within tolerance")
        self.stats = stats
        self.params = params
        self.e = _freeze(e)
        self.lam = float(lam)
        self.budget_residual = float(budget_residual)
        self.kkt_residual = float(kkt_residual)
        self.tol = float(tol)
        self.iterations = int(iterations)

    @cached_property
    def active(self) -> np.ndarray:
        """Indices of layers receiving strictly positive capacity."""
        return _freeze(np.flatnonzero(self.e > 0.0))

    @property
    def binding(self) -> bool:
        return self.lam > 0.0

    @property
    def spend(self) -> float:
        return float(self.stats.cost @ self.e)

    def __repr__(self) -> str:
        return (f"AllocPlan(K={len(self.stats)}, lam={self.lam:.6g}, "
                f"spend={self.spend:.6g}, active={self.active.size})")


class PrunePlan:
    """Solution of the pruning program: ratios, dual value, clip status.

    Invariants checked at construction:
      * every rho in [0, 1] and sum(size * rho) >= target - tol
      * lam == 0 implies the unconstrained solution meets the target;
        lam > 0 implies the target binds within tol
    """

    __slots__ = ("stats", "params", "rho", "lam", "sparsity_residual",
                 "kkt_residual", "rho_cap", "tol", "iterations", "__dict__")

    def __init__(self, stats: StatsVector, params: PruneParams, rho, lam: float,
                 sparsity_residual: float, kkt_residual: float, rho_cap: float,
                 tol: float, iterations: int = 0):
        rho = _as_1d(rho, "rho")
        if rho.shape[0] != len(stats):
            raise DimensionMismatchError("ratio vector length disagrees with stats")
        _check_finite(rho, "rho")
        if np.any(rho < 0.0) or np.any(rho > 1.0):
            raise ValueError("ratios must lie in [0, 1]")
        if not np.isfinite(lam) or lam < 0.0:
            raise ValueError(f"dual value must be finite and >= 0, got {lam}")
        if not 0.0 < rho_cap <= 1.0:
            raise ValueError(f"rho_cap must lie in (0, 1], got {rho_cap}")
        removed = float(stats.size @ rho)
        if removed < params.target - tol:
            raise ValueError(f"plan misses sparsity target: {removed!r} < {params.target!r} - {tol:g}")
        if lam > 0.0 and abs(removed - params.target) > tol:
            raise ValueError("lam > 0 but sparsity constraint is not binding within tolerance")
        self.stats = stats
        self.params = params
        self.rho = _freeze(rho)
        self.lam = float(lam)
        self.sparsity_residual = float(sparsity_residual)
        self.kkt_residual = float(kkt_residual)
        self.rho_cap = float(rho_cap)
        self.tol = float(tol)
        self.iterations = int(iterations)

    @cached_property
    def clip_status(self) -> tuple:
        """Per-layer status: 'lower' (rho=0), 'interior', or 'upper' (rho=cap)."""
        codes = np.full(self.rho.shape[0], 1, dtype=np.int8)
        codes[self.rho == 0.0] = 0
        codes[self.rho == self.rho_cap] = 2
        names = (CLIP_LOWER, CLIP_INTERIOR, CLIP_UPPER)
        return tuple(names[c] for c in codes)

    @property
    def binding(self) -> bool:
        return self.lam > 0.0

    @property
    def removed(self) -> float:
        return float(self.stats.size @ self.rho)

    def __repr__(self) -> str:
        return (f"PrunePlan(K={len(self.stats)}, lam={self.lam:.6g}, "
                f"removed={self.removed:.6g})")
