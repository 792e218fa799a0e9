"""Curvature-adjusted layer gain from a gradient and a regularized Hessian block.

The gain of a layer is zeta^2 = g' (H + tau*I)^{-1} g: twice the largest
second-order decrease of the objective achievable by updating that layer
alone.  The report also carries the regularization-bias diagnostics
(tau/2)*||d*||^2 <= (tau / (2*lambda_min)) * zeta^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import (
    DimensionMismatchError,
    NonFiniteError,
    NotPositiveDefiniteError,
    _as_1d,
    _check_finite,
    _freeze,
)

DENSE_BLOCK_LIMIT = 512
SYMMETRY_RTOL = 1e-10
LEMMA_RTOL = 1e-10


@dataclass(frozen=True)
class LayerCurvature:
    """Gradient g and Hessian block H (dense p x p, or length-p diagonal) plus tau.

    H may be indefinite; positive definiteness of H + tau*I is established by
    the factorization inside compute_gain, not here.  Dense blocks are limited
    to p <= 512; larger blocks must be supplied as diagonals.
    """

    g: np.ndarray
    H: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        g = _as_1d(self.g, "g")
        H = np.asarray(self.H, dtype=float)
        _check_finite(g, "g")
        _check_finite(H, "H")
        p = g.shape[0]
        if p < 1:
            raise DimensionMismatchError("gradient must have at least one entry")
        if H.ndim == 2:
            if H.shape != (p, p):
                raise DimensionMismatchError(f"H has shape {H.shape}, expected ({p}, {p})")
            if p > DENSE_BLOCK_LIMIT:
                raise DimensionMismatchError(
                    f"dense blocks are limited to p <= {DENSE_BLOCK_LIMIT}; "
                    "supply a diagonal for larger layers")
            scale = 1.0 + np.abs(H).max()
            if np.abs(H - H.T).max() > SYMMETRY_RTOL * scale:
                raise ValueError("H is not symmetric within tolerance")
        elif H.ndim == 1:
            if H.shape[0] != p:
                raise DimensionMismatchError(f"diagonal H has length {H.shape[0]}, expected {p}")
        else:
            raise DimensionMismatchError(f"H must be a matrix or a diagonal, got ndim={H.ndim}")
        if not np.isfinite(self.tau) or self.tau < 0.0:
            raise ValueError(f"tau must be finite and >= 0, got {self.tau}")
        object.__setattr__(self, "g", _freeze(g))
        object.__setattr__(self, "H", _freeze(H))

    @property
    def dim(self) -> int:
        return self.g.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return self.H.ndim == 1


@dataclass(frozen=True)
class GainReport:
    """Gain zeta^2, optimal step, and regularization-bias diagnostics for one block."""

    zeta2: float
    step: np.ndarray
    quad_value: float
    bias_lhs: float
    bias_rhs: float
    lambda_min: float
    tau: float

    def __post_init__(self):
        if not np.isfinite(self.zeta2) or self.zeta2 < 0.0:
            raise ValueError(f"zeta2 must be finite and >= 0, got {self.zeta2}")
        if abs(self.quad_value + 0.5 * self.zeta2) > LEMMA_RTOL * (1.0 + self.zeta2):
            raise ValueError(
                f"quadratic value {self.quad_value!r} violates the -zeta2/2 identity")
        if self.bias_lhs > self.bias_rhs + LEMMA_RTOL * (1.0 + self.bias_rhs):
            raise ValueError(
                f"bias bound violated: {self.bias_lhs!r} > {self.bias_rhs!r}")
        object.__setattr__(self, "step", _freeze(np.asarray(self.step, dtype=float)))


def compute_gain(curv: LayerCurvature) -> GainReport:
    """Solve (H + tau*I) d = -g and report the gain zeta^2 = -g'd.

    The quadratic value is obtained by evaluating g'd + d'(H+tau*I)d/2 at the
    step, never from the -zeta^2/2 formula, so the Lemma-level identity stays
    an independent check.  Raises NotPositiveDefiniteError when the Cholesky
    factorization fails, which signals tau is too small for this block.
    """
    g = curv.g
    if curv.is_diagonal:
        d = curv.H + curv.tau
        if np.any(d <= 0.0):
            raise NotPositiveDefiniteError(
                "diagonal H + tau*I has a non-positive entry")
        step = -g / d
        hstep = d * step
        lambda_min = float(d.min())
    else:
        h_reg = curv.H + curv.tau * np.eye(curv.dim)
        try:
            factor = scipy.linalg.cho_factor(h_reg, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(f"H + tau*I is not positive definite: {exc}") from exc
        step = -scipy.linalg.cho_solve(factor, g, check_finite=False)
        hstep = h_reg @ step
        lambda_min = float(np.linalg.eigvalsh(h_reg).min())
    zeta2 = max(float(-(g @ step)), 0.0)
    quad_value = float(g @ step + 0.5 * (step @ hstep))
    step_sq = float(step @ step)
    bias_lhs = 0.5 * curv.tau * step_sq
    bias_rhs = 0.5 * curv.tau / lambda_min * zeta2 if curv.tau > 0.0 else 0.0
    return GainReport(
        zeta2=zeta2,
        step=step,
        quad_value=quad_value,
        bias_lhs=bias_lhs,
        bias_rhs=bias_rhs,
        lambda_min=lambda_min,
        tau=curv.tau,
    )


def realized_decrease(objective, theta, layer_selector, step) -> float:
    """Actual objective change from applying ``step`` to the selected block.

    Evaluates objective(theta with block updated) - objective(theta); for an
    exactly quadratic objective with tau = 0 this equals -zeta^2/2.
    """
    theta = _as_1d(theta, "theta")
    step = _as_1d(step, "step")
    selector = np.asarray(layer_selector)
    if selector.dtype == bool:
        selector = np.flatnonzero(selector)
    if selector.ndim != 1:
        raise DimensionMismatchError("layer selector must be one-dimensional")
    if selector.shape[0] != step.shape[0]:
        raise DimensionMismatchError(
            f"selector picks {selector.shape[0]} coordinates but step has {step.shape[0]}")
    if selector.size and (selector.min() < 0 or selector.max() >= theta.shape[0]):
        raise IndexError("layer selector indices out of range")
    moved = theta.copy()
    moved[selector] += step
    before = float(objective(theta))
    after = float(objective(moved))
    if not (np.isfinite(before) and np.isfinite(after)):
        raise NonFiniteError("objective evaluated to a non-finite value")
    return after - before


def bias_ratio(report: GainReport) -> float:
    """Relative bias tau / lambda_min(H + tau*I) introduced by regularization.

    Lies in (0, 1] whenever H is positive semidefinite; exceeds 1 only when
    tau props up an indefinite block.
    """
    return report.tau / report.lambda_min
