"""Two-layer ReLU pushforward maps.

The transport map is a sum of forward-facing ramps ``a_i * relu(z - b_i)``
and backward-facing ramps ``a_i * relu(b_i - z)``.  Stored weights are the
rescaled ``a_bar`` values; the effective slope of neuron ``i`` is
``a_bar_i / scale``.  All normalization constants are absorbed into the
stored weights, so no neuron-count factors appear in the formulas below.

Evaluation at a bias node follows a fixed tie rule: a forward-facing
neuron takes its left limit at its own node, a backward-facing neuron its
right limit.  Both conventions drop the singular neuron's contribution at
the node itself, which keeps every operation total and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class NetworkParams:
    """Parameters of the piecewise-linear transport map.

    ``weights`` and ``biases`` hold the forward-facing neurons first
    (``n_forward`` of them) followed by the backward-facing ones.  The
    symmetric model used in experiments has equal halves; the monotone
    one-sided model used by the closed-form metric path has
    ``n_forward == len(weights)`` and no backward half.
    """

    weights: np.ndarray
    biases: np.ndarray
    n_forward: int
    scale: float = 1.0
    init_offset: float = 5e-6

    def __post_init__(self):
        object.__setattr__(self, "weights", _readonly(self.weights))
        object.__setattr__(self, "biases", _readonly(self.biases))
        if self.weights.ndim != 1 or self.biases.ndim != 1:
            raise ValueError("weights and biases must be 1-d")
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must have equal length")
        if not 0 < self.n_forward <= len(self.weights):
            raise ValueError("n_forward out of range")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not self.init_offset > 0:
            raise ValueError("init_offset must be positive")

    @property
    def n_backward(self) -> int:
        return len(self.weights) - self.n_forward

    @property
    def neuron_count(self) -> int:
        """Half-width of the symmetric model (forward neuron count)."""
        return self.n_forward

    @property
    def dim(self) -> int:
        """Total parameter count: one weight and one bias per neuron."""
        return 2 * len(self.weights)

    @property
    def is_one_sided(self) -> bool:
        return self.n_backward == 0

    @property
    def forward_weights(self) -> np.ndarray:
        return self.weights[: self.n_forward]

    @property
    def forward_biases(self) -> np.ndarray:
        return self.biases[: self.n_forward]

    @property
    def backward_weights(self) -> np.ndarray:
        return self.weights[self.n_forward:]

    @property
    def backward_biases(self) -> np.ndarray:
        return self.biases[self.n_forward:]

    @property
    def effective_weights(self) -> np.ndarray:
        """Slopes ``a_i = a_bar_i / scale`` actually applied to the ramps."""
        return self.weights / self.scale

    def with_values(self, weights=None, biases=None) -> "NetworkParams":
        return NetworkParams(
            weights=self.weights if weights is None else weights,
            biases=self.biases if biases is None else biases,
            n_forward=self.n_forward,
            scale=self.scale,
            init_offset=self.init_offset,
        )

    def min_bias_gap(self) -> float:
        b = np.sort(self.biases)
        return float(np.min(np.diff(b))) if len(b) > 1 else np.inf

    def piecewise(self) -> "_PiecewiseMap":
        """Sorted-node decomposition used for batched evaluation."""
        return _PiecewiseMap(self)


class _PiecewiseMap:
    """Affine-per-segment view of a :class:`NetworkParams` map.

    Crossing a forward node upward adds its effective weight to the slope;
    crossing a backward node upward removes that neuron, which also adds
    its (negative) weight.  Forward nodes count strictly below the query
    point and backward nodes count at-or-below, which realizes the node
    tie rule exactly.
    """

    def __init__(self, params: NetworkParams):
        a = params.effective_weights
        nf = params.n_forward
        of = np.argsort(params.biases[:nf], kind="stable")
        ob = np.argsort(params.biases[nf:], kind="stable")
        self.fwd_knots = params.biases[:nf][of]
        self.bwd_knots = params.biases[nf:][ob]
        wf = a[:nf][of]
        wb = a[nf:][ob]
        self.slope_base = -float(np.sum(a[nf:]))
        self.inter_base = float(np.sum(a[nf:] * params.biases[nf:]))
        self.cum_wf = np.concatenate(([0.0], np.cumsum(wf)))
        self.cum_wbf = np.concatenate(([0.0], np.cumsum(wf * self.fwd_knots)))
        self.cum_wb = np.concatenate(([0.0], np.cumsum(wb)))
        self.cum_wbb = np.concatenate(([0.0], np.cumsum(wb * self.bwd_knots)))

    def _indices(self, z: np.ndarray):
        i_f = np.searchsorted(self.fwd_knots, z, side="left")
        i_b = np.searchsorted(self.bwd_knots, z, side="right")
        return i_f, i_b

    def slope(self, z: np.ndarray) -> np.ndarray:
        i_f, i_b = self._indices(z)
        return self.slope_base + self.cum_wf[i_f] + self.cum_wb[i_b]

    def value(self, z: np.ndarray) -> np.ndarray:
        return self.value_and_slope(z)[0]

    def value_and_slope(self, z: np.ndarray):
        i_f, i_b = self._indices(z)
        slope = self.slope_base + self.cum_wf[i_f] + self.cum_wb[i_b]
        inter = self.inter_base - self.cum_wbf[i_f] - self.cum_wbb[i_b]
        return slope * z + inter, slope


@dataclass(frozen=True)
class ReferenceDensity:
    """Fixed reference probability density on the real line.

    ``sampler(n, rng)`` must be deterministic given the generator state.
    """

    pdf: Callable[[np.ndarray], np.ndarray]
    cdf: Callable[[np.ndarray], np.ndarray]
    inverse_cdf: Callable[[np.ndarray], np.ndarray]
    sampler: Callable[[int, np.random.Generator], np.ndarray]
    name: str = "custom"

    @property
    def is_standard_gaussian(self) -> bool:
        return self.name == "standard_gaussian"


def standard_gaussian() -> ReferenceDensity:
    """Standard normal reference density."""
    inv_sqrt2pi = 1.0 / np.sqrt(2.0 * np.pi)
    return ReferenceDensity(
        pdf=lambda z: inv_sqrt2pi * np.exp(-0.5 * np.square(z)),
        cdf=ndtr,
        inverse_cdf=ndtri,
        sampler=lambda n, rng: rng.standard_normal(n),
        name="standard_gaussian",
    )


def init_identity(N: int, B: float, eps: float, beta: float) -> NetworkParams:
    """Symmetric parameters approximating the identity map.

    Forward biases sit on ``linspace(-B, B, N)``; the mirrored backward
    biases are offset by ``eps``.  Stored weights are ``+beta/N`` and
    ``-beta/N`` so the map satisfies ``|f(z) - z| <= eps`` for every ``z``.
    """
    if N < 2:
        raise ValueError("at least two forward neurons required")
    if B <= 0 or eps <= 0 or beta <= 0:
        raise ValueError("B, eps and beta must be positive")
    b_fwd = np.linspace(-B, B, N)
    weights = np.concatenate((np.full(N, beta / N), np.full(N, -beta / N)))
    biases = np.concatenate((b_fwd, b_fwd + eps))
    return NetworkParams(
        weights=weights, biases=biases, n_forward=N,
        scale=beta, init_offset=eps,
    )


def one_sided(weights, biases, beta: float = 1.0) -> NetworkParams:
    """Monotone one-sided model: forward-facing ramps only.

    ``weights`` are the effective slopes; they are stored pre-multiplied by
    ``beta`` so that ``effective_weights`` returns them unchanged.
    """
    weights = np.asarray(weights, dtype=float)
    return NetworkParams(
        weights=weights * beta,
        biases=np.asarray(biases, dtype=float),
        n_forward=len(weights),
        scale=beta,
    )


def require_one_sided_sorted(params: NetworkParams) -> None:
    """Validate the monotone-regime view used by the closed-form paths."""
    if not params.is_one_sided:
        raise ValueError("operation requires a one-sided (forward-only) model")
    b = params.biases
    if np.any(np.diff(b) <= 0):
        raise ValueError("one-sided biases must be strictly increasing")
    if np.any(params.effective_weights <= 0):
        raise ValueError("one-sided weights must be strictly positive")


def forward(params: NetworkParams, z):
    """Evaluate the map.  Accepts a scalar or an array."""
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    out = params.piecewise().value(z_arr)
    return float(out[0]) if np.isscalar(z) or np.ndim(z) == 0 else out


def z_derivative(params: NetworkParams, z):
    """Spatial slope of the map under the node tie rule."""
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    out = params.piecewise().slope(z_arr)
    return float(out[0]) if np.isscalar(z) or np.ndim(z) == 0 else out


def param_jacobian(params: NetworkParams, z: float) -> np.ndarray:
    """Gradient of ``forward`` in the stored parameters at one point.

    Coordinate order is all weights then all biases.
    """
    return param_jacobian_many(params, np.atleast_1d(np.asarray(z, float)))[0]


def param_jacobian_many(params: NetworkParams, z: np.ndarray) -> np.ndarray:
    """Rows of parameter-Jacobians for a batch of inputs, shape (m, dim)."""
    z = np.asarray(z, dtype=float)[:, None]
    a = params.effective_weights
    bf = params.forward_biases[None, :]
    bb = params.backward_biases[None, :]
    fwd_active = z > bf
    bwd_active = z < bb
    d_wf = np.where(fwd_active, z - bf, 0.0) / params.scale
    d_wb = np.where(bwd_active, bb - z, 0.0) / params.scale
    d_bf = -a[: params.n_forward] * fwd_active
    d_bb = a[params.n_forward:] * bwd_active
    return np.hstack((d_wf, d_wb, d_bf, d_bb))
