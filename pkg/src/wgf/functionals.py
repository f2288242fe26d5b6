"""Free-energy terms and their Euclidean parameter gradients.

Potential and interaction gradients are plain Monte Carlo contractions of
the parameter Jacobian against a per-sample weight.  Internal energies
(entropy, quadratic porous-medium) need care: their weight-coordinate
gradients are smooth Monte Carlo sums, while the bias coordinates
differentiate a jump of the map slope across the node and are evaluated
in closed form with one-sided slope probes offset by ``singular_delta``.

All bias-coordinate internal gradients are gradients of the energy, so
every term here satisfies the same descent convention and the assembled
vector can be fed directly to the projected Euler update.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from wgf.errors import BiasCollisionError, SlopeSignError
from wgf.metric import _SampleMoments
from wgf.network import NetworkParams, ReferenceDensity


class InternalKind(Enum):
    ENTROPY = "entropy"
    POROUS_M = "porous_m"


@dataclass(frozen=True)
class PotentialTerm:
    V: Callable
    dV: Callable


@dataclass(frozen=True)
class InteractionTerm:
    W: Callable
    grad1W: Callable
    exclude_self: bool = True


@dataclass(frozen=True)
class InternalTerm:
    Uhat: Callable
    dUhat: Callable
    kind: InternalKind


def entropy_term() -> InternalTerm:
    return InternalTerm(
        Uhat=np.log, dUhat=lambda p: 1.0 / p, kind=InternalKind.ENTROPY
    )


def porous_medium_term() -> InternalTerm:
    """Quadratic internal energy (exponent-2 porous medium)."""
    return InternalTerm(
        Uhat=lambda p: p, dUhat=lambda p: np.ones_like(p), kind=InternalKind.POROUS_M
    )


@dataclass(frozen=True)
class EnergySpec:
    """Declarative free energy: a list of terms plus global knobs.

    ``diffusion_gamma`` weighs every entropy-kind internal term, both in
    the energy value and in the assembled gradient.  ``singular_delta``
    is the one-sided probe offset for the internal bias derivatives.
    """

    terms: Sequence
    diffusion_gamma: float = 0.0
    singular_delta: float = 2.5e-6

    def __post_init__(self):
        if not self.terms:
            raise ValueError("energy needs at least one term")
        if self.singular_delta <= 0:
            raise ValueError("singular_delta must be positive")
        if self.diffusion_gamma < 0:
            raise ValueError("diffusion_gamma must be nonnegative")
        object.__setattr__(self, "terms", tuple(self.terms))


class _Workspace:
    """Sorted samples with cached map values, slopes and node positions."""

    def __init__(self, params: NetworkParams, samples):
        self.params = params
        self.mom = (
            samples if isinstance(samples, _SampleMoments)
            else _SampleMoments(samples)
        )
        self.z = self.mom.z
        self.m = self.mom.m
        pw = params.piecewise()
        self.pw = pw
        self.values, self.slopes = pw.value_and_slope(self.z)
        nf = params.n_forward
        self.pos_fwd = self.mom.pos_right(params.biases[:nf])
        self.pos_bwd = self.mom.pos_left(params.biases[nf:])

    def contract(self, g: np.ndarray) -> np.ndarray:
        """Monte Carlo contraction ``(1/M) sum_l g_l J(z_l)``."""
        params = self.params
        gl = g.astype(np.longdouble)
        cg = np.concatenate(([np.longdouble(0)], np.cumsum(gl)))
        cgz = np.concatenate(([np.longdouble(0)], np.cumsum(gl * self.z)))
        total_g = cg[-1]
        total_gz = cgz[-1]
        bf = params.biases[: params.n_forward]
        bb = params.biases[params.n_forward:]
        af = params.effective_weights[: params.n_forward]
        ab = params.effective_weights[params.n_forward:]
        suf_g = np.asarray(total_g - cg[self.pos_fwd], dtype=float)
        suf_gz = np.asarray(total_gz - cgz[self.pos_fwd], dtype=float)
        pre_g = np.asarray(cg[self.pos_bwd], dtype=float)
        pre_gz = np.asarray(cgz[self.pos_bwd], dtype=float)
        out = np.concatenate((
            (suf_gz - bf * suf_g) / params.scale,
            (bb * pre_g - pre_gz) / params.scale,
            -af * suf_g,
            ab * pre_g,
        ))
        return out / self.m

    def contract_slope(self, u: np.ndarray) -> np.ndarray:
        """Weight-coordinate contraction against the slope Jacobian.

        Returns ``(1/M) sum_l u_l * d(slope)/d(a_bar)`` for all weight
        coordinates (forward then backward).
        """
        params = self.params
        ul = u.astype(np.longdouble)
        cu = np.concatenate(([np.longdouble(0)], np.cumsum(ul)))
        suf = np.asarray(cu[-1] - cu[self.pos_fwd], dtype=float)
        pre = np.asarray(cu[self.pos_bwd], dtype=float)
        return np.concatenate((suf, -pre)) / (params.scale * self.m)


def _check_positive_slopes(slopes: np.ndarray, where: str) -> None:
    if np.any(slopes <= 0.0):
        raise SlopeSignError(f"nonpositive map slope at {where}")


def _check_bias_gaps(params: NetworkParams, delta: float) -> None:
    gap = params.min_bias_gap()
    # The identity initialization places mirrored nodes exactly 2*delta
    # apart for the default offset, so the bound carries a small relative
    # slack against floating-point rounding of the gap itself.
    if gap < 2.0 * delta * (1.0 - 1e-9):
        raise BiasCollisionError(
            f"bias nodes within 2*delta: min gap {gap:.3e}, delta {delta:.3e}"
        )


def energy_value(
    params: NetworkParams,
    spec: EnergySpec,
    samples: np.ndarray,
    ref: Optional[ReferenceDensity] = None,
) -> float:
    """Monte Carlo estimate of the total free energy on a sample set."""
    ws = _Workspace(params, samples)
    total = 0.0
    for term in spec.terms:
        if isinstance(term, PotentialTerm):
            total += float(np.mean(term.V(ws.values)))
        elif isinstance(term, InteractionTerm):
            total += _interaction_energy(term, ws.values)
        elif isinstance(term, InternalTerm):
            if ref is None:
                raise ValueError("internal terms need the reference density")
            _check_positive_slopes(ws.slopes, "a sample point")
            dens = ref.pdf(ws.z) / ws.slopes
            weight = spec.diffusion_gamma if term.kind is InternalKind.ENTROPY else 1.0
            total += weight * float(np.mean(term.Uhat(dens)))
        else:
            raise TypeError(f"unknown energy term {term!r}")
    return total


def _interaction_energy(term: InteractionTerm, x: np.ndarray) -> float:
    m = len(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        pair = term.W(x[:, None], x[None, :])
    if term.exclude_self:
        if m < 2:
            raise ValueError("self-excluded interaction needs two samples")
        np.fill_diagonal(pair, 0.0)
        finite = np.isfinite(pair)
        return float(np.sum(np.where(finite, pair, 0.0)) / (2.0 * m * (m - 1)))
    return float(np.sum(pair) / (2.0 * m * m))


def grad_potential(
    params: NetworkParams, term: PotentialTerm, samples: np.ndarray
) -> np.ndarray:
    ws = _Workspace(params, samples)
    return ws.contract(np.asarray(term.dV(ws.values), dtype=float))


def grad_interaction(
    params: NetworkParams,
    term: InteractionTerm,
    samples: np.ndarray,
    diagnostics: Optional[dict] = None,
) -> np.ndarray:
    """Pairwise interaction gradient (symmetric kernels).

    Kernel singularities at coincident pushforward values are skipped and
    counted in ``diagnostics['skipped_pairs']`` when a dict is passed.
    """
    ws = _Workspace(params, samples)
    return _interaction_gradient(ws, term, diagnostics)


def _interaction_gradient(ws, term: InteractionTerm, diagnostics) -> np.ndarray:
    x = ws.values
    m = len(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        pair = np.asarray(term.grad1W(x[:, None], x[None, :]), dtype=float)
    np.fill_diagonal(pair, 0.0 if term.exclude_self else np.diag(pair))
    if term.exclude_self:
        if m < 2:
            raise ValueError("self-excluded interaction needs two samples")
        denom = m - 1
    else:
        denom = m
    bad = ~np.isfinite(pair)
    if term.exclude_self:
        np.fill_diagonal(bad, False)
    n_bad = int(np.count_nonzero(bad))
    if n_bad:
        pair = np.where(bad, 0.0, pair)
    if diagnostics is not None:
        diagnostics["skipped_pairs"] = diagnostics.get("skipped_pairs", 0) + n_bad
    g = pair.sum(axis=1) / denom
    return ws.contract(g)


def grad_internal(
    params: NetworkParams,
    term: InternalTerm,
    samples: np.ndarray,
    ref: ReferenceDensity,
    delta: float,
) -> np.ndarray:
    """Gradient of an internal energy term.

    Weight coordinates are smooth Monte Carlo sums.  Bias coordinates use
    the closed forms built from one-sided slopes just left and right of
    each node; the node spacing must exceed twice the probe offset.
    """
    ws = _Workspace(params, samples)
    _check_positive_slopes(ws.slopes, "a sample point")
    return _internal_gradient(ws, term, ref, delta)


def _internal_gradient(ws, term: InternalTerm, ref, delta: float) -> np.ndarray:
    params = ws.params
    _check_bias_gaps(params, delta)
    b = params.biases
    s_lo = ws.pw.slope(b - delta)
    s_hi = ws.pw.slope(b + delta)
    _check_positive_slopes(np.concatenate((s_lo, s_hi)), "a node probe point")
    p_b = np.asarray(ref.pdf(b), dtype=float)
    if term.kind is InternalKind.ENTROPY:
        w_coords = -ws.contract_slope(1.0 / ws.slopes)
        b_coords = p_b * np.log(s_hi / s_lo)
    elif term.kind is InternalKind.POROUS_M:
        w_coords = -ws.contract_slope(ref.pdf(ws.z) / ws.slopes**2)
        b_coords = p_b**2 * (1.0 / s_lo - 1.0 / s_hi)
    else:
        raise TypeError(f"unknown internal kind {term.kind!r}")
    return np.concatenate((w_coords, b_coords))


def assemble_gradient(
    params: NetworkParams,
    spec: EnergySpec,
    samples: np.ndarray,
    ref: ReferenceDensity,
    diagnostics: Optional[dict] = None,
) -> np.ndarray:
    """Weighted sum of all term gradients in the full coordinate order."""
    total = np.zeros(params.dim)
    for term in spec.terms:
        if isinstance(term, PotentialTerm):
            total += grad_potential(params, term, samples)
        elif isinstance(term, InteractionTerm):
            total += grad_interaction(params, term, samples, diagnostics)
        elif isinstance(term, InternalTerm):
            g = grad_internal(params, term, samples, ref, spec.singular_delta)
            if term.kind is InternalKind.ENTROPY:
                g = spec.diffusion_gamma * g
            total += g
        else:
            raise TypeError(f"unknown energy term {term!r}")
    return total


def energy_and_gradient(
    params: NetworkParams,
    spec: EnergySpec,
    samples,
    ref: ReferenceDensity,
    diagnostics: Optional[dict] = None,
):
    """Energy estimate and assembled gradient from one shared workspace."""
    ws = _Workspace(params, samples)
    energy = 0.0
    total = np.zeros(params.dim)
    for term in spec.terms:
        if isinstance(term, PotentialTerm):
            energy += float(np.mean(term.V(ws.values)))
            total += ws.contract(np.asarray(term.dV(ws.values), dtype=float))
        elif isinstance(term, InteractionTerm):
            energy += _interaction_energy(term, ws.values)
            total += _interaction_gradient(ws, term, diagnostics)
        elif isinstance(term, InternalTerm):
            weight = (
                spec.diffusion_gamma
                if term.kind is InternalKind.ENTROPY else 1.0
            )
            _check_positive_slopes(ws.slopes, "a sample point")
            dens = ref.pdf(ws.z) / ws.slopes
            energy += weight * float(np.mean(term.Uhat(dens)))
            total += weight * _internal_gradient(
                ws, term, ref, spec.singular_delta
            )
        else:
            raise TypeError(f"unknown energy term {term!r}")
    return energy, total
