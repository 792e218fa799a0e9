"""Toy objectives that yield exact or finite-difference curvature blocks.

Two probes feed the gain computation with known ground truth: a block-separable
quadratic whose gradient and Hessian are available in closed form, and a tiny
deterministic MLP whose blocks are extracted by central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from .core import DimensionMismatchError, NonFiniteError, _as_1d, _check_finite, _freeze
from .gain import LayerCurvature

MAX_MLP_PARAMS = 512

_MASK64 = (1 << 64) - 1


def _splitmix64_stream(seed: int, count: int) -> np.ndarray:
    """Deterministic uniforms in [0, 1) from a SplitMix64 stream.

    Used instead of numpy's RNG so that probe weights are reproducible
    bit-for-bit with no dependency on a generator implementation.
    """
    state = seed & _MASK64
    out = np.empty(count, dtype=float)
    for i in range(count):
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z ^= z >> 31
        out[i] = z / 2.0**64
    return out


def _low_discrepancy_inputs(n_samples: int, dim: int) -> np.ndarray:
    """Kronecker sequence on [-1, 1]^dim (fractional parts of sqrt-prime multiples)."""
    primes = []
    candidate = 2
    while len(primes) < dim:
        if all(candidate % p for p in primes):
            primes.append(candidate)
        candidate += 1
    alphas = np.sqrt(np.array(primes, dtype=float)) % 1.0
    steps = np.arange(1, n_samples + 1, dtype=float)[:, None]
    return 2.0 * ((steps * alphas[None, :]) % 1.0) - 1.0


@dataclass(frozen=True)
class BlockQuadratic:
    """Block-separable quadratic L(theta) = sum_k (theta_k - t_k)' A_k (theta_k - t_k) / 2.

    Each block contributes an exact gradient A_k (theta_k - t_k) and an exact
    Hessian A_k, so gain identities can be checked without discretization error.
    """

    blocks: tuple
    theta: np.ndarray

    def __post_init__(self):
        theta = _as_1d(self.theta, "theta")
        _check_finite(theta, "theta")
        blocks = []
        total = 0
        for i, (a, t_star) in enumerate(self.blocks):
            a = np.asarray(a, dtype=float)
            t_star = _as_1d(t_star, f"theta_star[{i}]")
            if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != t_star.shape[0]:
                raise DimensionMismatchError(f"block {i}: A/theta_star shapes disagree")
            if np.abs(a - a.T).max() > 1e-10 * (1.0 + np.abs(a).max()):
                raise ValueError(f"block {i}: A must be symmetric")
            try:
                scipy.linalg.cho_factor(a, check_finite=False)
            except scipy.linalg.LinAlgError:
                raise ValueError(f"block {i}: A must be positive definite") from None
            blocks.append((_freeze(a), _freeze(t_star)))
            total += t_star.shape[0]
        if total != theta.shape[0]:
            raise DimensionMismatchError(
                f"block sizes sum to {total} but theta has {theta.shape[0]} entries")
        object.__setattr__(self, "blocks", tuple(blocks))
        object.__setattr__(self, "theta", _freeze(theta))

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    def block_slice(self, k: int) -> slice:
        if not 0 <= k < self.num_blocks:
            raise IndexError(f"block index {k} out of range [0, {self.num_blocks})")
        start = sum(self.blocks[i][1].shape[0] for i in range(k))
        return slice(start, start + self.blocks[k][1].shape[0])

    def block_indices(self, k: int) -> np.ndarray:
        sl = self.block_slice(k)
        return np.arange(sl.start, sl.stop)

    def objective(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        value = 0.0
        for k, (a, t_star) in enumerate(self.blocks):
            delta = theta[self.block_slice(k)] - t_star
            value += 0.5 * float(delta @ (a @ delta))
        return value


def quadratic_blocks(q: BlockQuadratic, k: int, tau: float = 0.0) -> LayerCurvature:
    """Exact curvature of block k: g = A_k (theta_k - t_k), H = A_k."""
    sl = q.block_slice(k)
    a, t_star = q.blocks[k]
    g = a @ (q.theta[sl] - t_star)
    return LayerCurvature(g=g, H=a, tau=tau)


@dataclass(frozen=True)
class TinyMlp:
    """A deterministic multilayer perceptron probe with at most 512 parameters.

    ``layer_dims`` gives the widths (input, hidden..., output); parameters are
    the flattened (W_0, b_0, W_1, b_1, ...) in order, and layer k of the probe
    is the (W_k, b_k) block.  Hidden layers apply ``activation``; the output
    layer is linear.  The loss is mean squared error over ``dataset``,
    L = sum_i ||f(x_i) - y_i||^2 / (2 N).
    """

    layer_dims: tuple
    weights: np.ndarray
    dataset: tuple
    seed: int = 0
    activation: str = "tanh"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError("layer_dims needs at least two positive widths")
        n_params = sum(dims[i + 1] * (dims[i] + 1) for i in range(len(dims) - 1))
        if n_params > MAX_MLP_PARAMS:
            raise ValueError(f"probe has {n_params} parameters, limit is {MAX_MLP_PARAMS}")
        weights = _as_1d(self.weights, "weights")
        _check_finite(weights, "weights")
        if weights.shape[0] != n_params:
            raise DimensionMismatchError(
                f"weights has {weights.shape[0]} entries, architecture needs {n_params}")
        if self.activation not in ("tanh", "identity"):
            raise ValueError(f"unsupported activation {self.activation!r}")
        pairs = tuple((np.asarray(x, dtype=float).reshape(dims[0]),
                       np.asarray(y, dtype=float).reshape(dims[-1]))
                      for x, y in self.dataset)
        if not pairs:
            raise ValueError("dataset must not be empty")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", _freeze(weights))
        object.__setattr__(self, "dataset", pairs)

    @classmethod
    def generate(cls, layer_dims, seed: int, n_samples: int = 32,
                 activation: str = "tanh") -> "TinyMlp":
        """Deterministically build weights, inputs, and teacher targets from a seed.

        Inputs come from a low-discrepancy sequence and targets from a fixed
        teacher network of the same architecture, so identical seeds reproduce
        the probe bit-for-bit.
        """
        dims = tuple(int(d) for d in layer_dims)
        n_params = sum(dims[i + 1] * (dims[i] + 1) for i in range(len(dims) - 1))
        weights = cls._init_weights(dims, _splitmix64_stream(seed, n_params))
        teacher_w = cls._init_weights(dims, _splitmix64_stream(seed ^ 0x7EAC4E12, n_params))
        x = _low_discrepancy_inputs(n_samples, dims[0])
        y = _forward(dims, teacher_w, x, activation)
        dataset = tuple((x[i], y[i]) for i in range(n_samples))
        return cls(layer_dims=dims, weights=weights, dataset=dataset,
                   seed=seed, activation=activation)

    @staticmethod
    def _init_weights(dims, uniforms: np.ndarray) -> np.ndarray:
        weights = 2.0 * uniforms - 1.0
        offset = 0
        for i in range(len(dims) - 1):
            n_w = dims[i + 1] * dims[i]
            weights[offset:offset + n_w] /= np.sqrt(dims[i])
            offset += n_w
            weights[offset:offset + dims[i + 1]] *= 0.1
            offset += dims[i + 1]
        return weights

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def num_params(self) -> int:
        return self.weights.shape[0]

    def block_slice(self, k: int) -> slice:
        if not 0 <= k < self.num_layers:
            raise IndexError(f"layer index {k} out of range [0, {self.num_layers})")
        dims = self.layer_dims
        start = sum(dims[i + 1] * (dims[i] + 1) for i in range(k))
        return slice(start, start + dims[k + 1] * (dims[k] + 1))

    def block_indices(self, k: int) -> np.ndarray:
        sl = self.block_slice(k)
        return np.arange(sl.start, sl.stop)

    @cached_property
    def _inputs(self) -> np.ndarray:
        return np.stack([x for x, _ in self.dataset])

    @cached_property
    def _targets(self) -> np.ndarray:
        return np.stack([y for _, y in self.dataset])

    def predictions(self, theta) -> np.ndarray:
        return _forward(self.layer_dims, np.asarray(theta, dtype=float),
                        self._inputs, self.activation)

    def objective(self, theta) -> float:
        resid = self.predictions(theta) - self._targets
        return 0.5 * float(np.mean(np.sum(resid * resid, axis=1)))


def _forward(dims, theta: np.ndarray, x: np.ndarray, activation: str) -> np.ndarray:
    h = x
    offset = 0
    last = len(dims) - 2
    for i in range(len(dims) - 1):
        n_out, n_in = dims[i + 1], dims[i]
        w = theta[offset:offset + n_out * n_in].reshape(n_out, n_in)
        offset += n_out * n_in
        b = theta[offset:offset + n_out]
        offset += n_out
        h = h @ w.T + b
        if i < last and activation == "tanh":
            h = np.tanh(h)
    return h


def default_fd_step(theta) -> float:
    """Cube root of machine epsilon scaled by the parameter magnitude."""
    scale = float(np.abs(np.asarray(theta)).max()) if np.asarray(theta).size else 0.0
    return float(np.cbrt(np.finfo(float).eps) * (1.0 + scale))


def mlp_blocks(m: TinyMlp, k: int, fd_step: float | None = None,
               tau: float = 0.0) -> LayerCurvature:
    """Central-finite-difference gradient and Hessian of the MLP loss on block k.

    The Hessian uses the four-point cross formula off the diagonal and the
    three-point formula on it, then is symmetrized as (H + H')/2.
    """
    idx = m.block_indices(k)
    if fd_step is None:
        fd_step = default_fd_step(m.weights)
    if not fd_step > 0.0:
        raise ValueError(f"fd_step must be > 0, got {fd_step}")
    theta = m.weights.copy()
    h = float(fd_step)
    p = idx.shape[0]

    def shifted(deltas) -> float:
        moved = theta.copy()
        for j, d in deltas:
            moved[idx[j]] += d
        return m.objective(moved)

    f0 = m.objective(theta)
    g = np.empty(p)
    hess = np.zeros((p, p))
    for i in range(p):
        f_plus = shifted([(i, h)])
        f_minus = shifted([(i, -h)])
        g[i] = (f_plus - f_minus) / (2.0 * h)
        hess[i, i] = (f_plus - 2.0 * f0 + f_minus) / (h * h)
        for j in range(i + 1, p):
            cross = (shifted([(i, h), (j, h)]) - shifted([(i, h), (j, -h)])
                     - shifted([(i, -h), (j, h)]) + shifted([(i, -h), (j, -h)]))
            hess[i, j] = hess[j, i] = cross / (4.0 * h * h)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(hess))):
        raise NonFiniteError("finite-difference evaluation overflowed")
    hess = 0.5 * (hess + hess.T)
    return LayerCurvature(g=g, H=hess, tau=tau)
