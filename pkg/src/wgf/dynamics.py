"""Time integration of the projected flow and semi-discrete node flows.

``run_flow`` advances parameters with the preconditioned explicit Euler
update ``theta <- theta - h * pinv(G) * grad``; the metric is either the
Monte Carlo Gram on the run's frozen samples or the closed-form Gaussian
metric of the one-sided model.  ``potential_flow_rhs`` and
``heat_flow_rhs`` are the explicit node-velocity formulas the projected
flow reduces to when only the biases of a one-sided model move; they back
the consistency and mesh-quality checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Tuple

import numpy as np
from scipy import integrate

from wgf.errors import CdfGapError, NumericError, QuadratureError
from wgf.functionals import EnergySpec, energy_and_gradient
from wgf.metric import (
    MetricTensor,
    ParamSubset,
    _SampleMoments,
    analytic_inverse_bb,
    analytic_metric,
    empirical_metric,
    pinv_solve_diagnostic,
    subset_indices,
)
from wgf.network import NetworkParams, ReferenceDensity, require_one_sided_sorted


class MetricMode(Enum):
    EMPIRICAL = "empirical"
    ANALYTIC_GAUSSIAN = "analytic_gaussian"


@dataclass(frozen=True)
class FlowConfig:
    dt: float
    steps: int
    metric_mode: MetricMode = MetricMode.EMPIRICAL
    param_subset: ParamSubset = ParamSubset.BOTH
    pinv_rel_tol: float = 1e-12
    sample_count: int = 1000
    seed: int = 0
    resample_each_step: bool = False
    theta_stride: int = 0

    def __post_init__(self):
        if self.dt < 0:
            raise ValueError("dt must be nonnegative")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.sample_count < 1:
            raise ValueError("sample_count must be at least 1")
        if self.pinv_rel_tol <= 0:
            raise ValueError("pinv_rel_tol must be positive")


@dataclass
class TrajectoryRecord:
    """Per-step history of a flow run plus sparse parameter snapshots."""

    times: np.ndarray
    energy_history: np.ndarray
    min_bias_gap: np.ndarray
    metric_condition: np.ndarray
    skipped_pairs: np.ndarray
    theta_snapshots: List[Tuple[int, NetworkParams]]
    final_params: NetworkParams
    final_time: float
    samples: np.ndarray


def euler_step(
    params: NetworkParams,
    grad: np.ndarray,
    G: MetricTensor,
    h: float,
    rel_tol: float = 1e-12,
    subset: ParamSubset = ParamSubset.BOTH,
) -> NetworkParams:
    """One preconditioned Euler update on the chosen coordinate subset."""
    grad = np.asarray(grad, dtype=float)
    idx = subset_indices(params, subset)
    if G.dim != len(grad) or len(grad) != len(idx):
        raise ValueError("metric, gradient and subset dimensions disagree")
    step, _ = pinv_solve_diagnostic(G, grad, rel_tol)
    theta = np.concatenate((params.weights, params.biases))
    theta[idx] -= h * step
    n = len(params.weights)
    return params.with_values(weights=theta[:n], biases=theta[n:])


def _metric_for_step(
    params: NetworkParams,
    samples: np.ndarray,
    ref: ReferenceDensity,
    config: FlowConfig,
) -> MetricTensor:
    subset = config.param_subset
    if config.metric_mode is MetricMode.EMPIRICAL:
        return empirical_metric(params, samples, subset)
    if not ref.is_standard_gaussian:
        raise NumericError("closed-form metric requires the Gaussian reference")
    try:
        full = analytic_metric(params, ref).entries
    except ValueError as exc:
        raise NumericError(f"closed-form metric unavailable: {exc}") from exc
    idx = subset_indices(params, subset)
    return MetricTensor(entries=full[np.ix_(idx, idx)])


def run_flow(
    params0: NetworkParams,
    spec: EnergySpec,
    ref: ReferenceDensity,
    config: FlowConfig,
) -> TrajectoryRecord:
    """Run the projected Euler scheme for ``config.steps`` updates.

    Samples are drawn once up front and reused at every step unless
    ``resample_each_step`` is set.  Numeric failures (slope sign, node
    collision, CDF underflow) abort the run with step context attached.
    """
    rng = np.random.default_rng(config.seed)
    moments = _SampleMoments(ref.sampler(config.sample_count, rng))
    params = params0
    idx = subset_indices(params0, config.param_subset)

    times = np.empty(config.steps)
    energies = np.empty(config.steps)
    gaps = np.empty(config.steps)
    conds = np.empty(config.steps)
    skipped = np.zeros(config.steps)
    snapshots: List[Tuple[int, NetworkParams]] = []

    for k in range(config.steps):
        if config.resample_each_step and k > 0:
            moments = _SampleMoments(ref.sampler(config.sample_count, rng))
        if config.theta_stride and k % config.theta_stride == 0:
            snapshots.append((k, params))
        diag: dict = {}
        try:
            energies[k], grad = energy_and_gradient(
                params, spec, moments, ref, diag
            )
        except NumericError as exc:
            raise NumericError(f"aborted at step {k}: {exc}") from exc
        times[k] = k * config.dt
        gaps[k] = params.min_bias_gap()
        skipped[k] = diag.get("skipped_pairs", 0)

        if (
            config.metric_mode is MetricMode.ANALYTIC_GAUSSIAN
            and config.param_subset is ParamSubset.B_ONLY
        ):
            try:
                inv = analytic_inverse_bb(params, ref)
            except (ValueError, CdfGapError) as exc:
                raise NumericError(f"aborted at step {k}: {exc}") from exc
            step = inv.matvec(grad[idx])
            conds[k] = np.nan
            theta = np.concatenate((params.weights, params.biases))
            theta[idx] -= config.dt * step
            n = len(params.weights)
            params = params.with_values(weights=theta[:n], biases=theta[n:])
        else:
            try:
                G = _metric_for_step(params, moments, ref, config)
            except NumericError as exc:
                raise NumericError(f"aborted at step {k}: {exc}") from exc
            sub_grad = grad[idx]
            step, conds[k] = pinv_solve_diagnostic(
                G, sub_grad, config.pinv_rel_tol
            )
            theta = np.concatenate((params.weights, params.biases))
            theta[idx] -= config.dt * step
            n = len(params.weights)
            params = params.with_values(weights=theta[:n], biases=theta[n:])

    snapshots.append((config.steps, params))
    return TrajectoryRecord(
        times=times,
        energy_history=energies,
        min_bias_gap=gaps,
        metric_condition=conds,
        skipped_pairs=skipped,
        theta_snapshots=snapshots,
        final_params=params,
        final_time=config.steps * config.dt,
        samples=moments.z,
    )


def _interval_average(ref: ReferenceDensity, g, lo_u: float, hi_u: float) -> float:
    """Average of ``g`` against the reference weight on a CDF interval."""
    if hi_u - lo_u <= 0:
        raise CdfGapError("empty CDF interval in node-flow average")
    val, _ = integrate.quad(
        lambda u: g(float(ref.inverse_cdf(u))),
        lo_u, hi_u, epsabs=1e-13, epsrel=1e-11, limit=400,
    )
    if not np.isfinite(val):
        raise QuadratureError("node-flow average diverged")
    return val / (hi_u - lo_u)


def potential_flow_rhs(
    params: NetworkParams,
    dV: Callable,
    ref: ReferenceDensity,
    quadrature: bool = False,
) -> np.ndarray:
    """Node velocities of the bias-only projected potential flow.

    Interior rows follow the trapezoid discretization; the first row is
    the one-interval average and the last row keeps its exact tail
    integral.  With ``quadrature=True`` every row uses exact interval
    averages of ``dV(f)`` instead of the trapezoid rule.
    """
    require_one_sided_sorted(params)
    a = params.effective_weights
    b = params.biases
    n = len(b)
    if n < 2:
        raise ValueError("node flow needs at least two nodes")
    cdf = np.asarray(ref.cdf(b), dtype=float)
    tail = 1.0 - cdf[-1]
    if np.any(np.diff(cdf) <= 1e-14) or tail <= 1e-14:
        raise CdfGapError("CDF increment underflow in potential flow")
    pw = params.piecewise()

    def dV_f(z: float) -> float:
        return float(dV(float(pw.value(np.array([z]))[0])))

    tail_avg = _interval_average(ref, dV_f, cdf[-1], 1.0)
    if quadrature:
        avgs = [
            _interval_average(ref, dV_f, cdf[i], cdf[i + 1]) for i in range(n - 1)
        ]
        out = np.empty(n)
        out[0] = avgs[0] / a[0]
        for i in range(1, n - 1):
            out[i] = (avgs[i] - avgs[i - 1]) / a[i]
        out[-1] = (tail_avg - avgs[-1]) / a[-1]
        return out
    vb = np.asarray(dV(pw.value(b)), dtype=float)
    out = np.empty(n)
    out[0] = (vb[0] + vb[1]) / (2.0 * a[0])
    out[1:-1] = (vb[2:] - vb[:-2]) / (2.0 * a[1:-1])
    out[-1] = (tail_avg - (vb[-2] + vb[-1]) / 2.0) / a[-1]
    return out


def entropy_bias_gradient(params: NetworkParams, ref: ReferenceDensity) -> np.ndarray:
    """Bias gradient of the negative entropy on the one-sided model.

    Interior nodes use the slope-ratio logarithm; the first node carries
    the derivative of the point-mass bookkeeping term of the energy.
    """
    require_one_sided_sorted(params)
    a = params.effective_weights
    b = params.biases
    p = np.asarray(ref.pdf(b), dtype=float)
    S = np.cumsum(a)
    out = np.empty(len(b))
    F0 = float(ref.cdf(b[0]))
    if F0 <= 0.0:
        raise CdfGapError("CDF underflow at the first node")
    out[0] = p[0] * (np.log(F0) + 1.0 + np.log(a[0]))
    out[1:] = -np.log(S[:-1] / S[1:]) * p[1:]
    return out


def heat_flow_rhs(params: NetworkParams, ref: ReferenceDensity) -> np.ndarray:
    """Node velocities of the bias-only projected entropy flow.

    The explicit three-case form of the tridiagonal-inverse product; the
    row next to the boundary uses the first node's special gradient term
    in its left-neighbor slot.
    """
    require_one_sided_sorted(params)
    a = params.effective_weights
    b = params.biases
    n = len(b)
    if n < 2:
        raise ValueError("heat flow needs at least two nodes")
    cdf = np.asarray(ref.cdf(b), dtype=float)
    gaps = np.diff(cdf)
    tail = 1.0 - cdf[-1]
    if np.any(gaps <= 1e-14) or tail <= 1e-14:
        raise CdfGapError("CDF increment underflow in heat flow")
    D = entropy_bias_gradient(params, ref)
    out = np.empty(n)
    out[0] = -(D[0] / a[0] - D[1] / a[1]) / (a[0] * gaps[0])
    for i in range(1, n - 1):
        left = (D[i - 1] / (a[i] * a[i - 1]) - D[i] / a[i] ** 2) / gaps[i - 1]
        right = (D[i + 1] / (a[i] * a[i + 1]) - D[i] / a[i] ** 2) / gaps[i]
        out[i] = left + right
    out[-1] = (
        D[-2] / (a[-1] * a[-2] * gaps[-1])
        - (D[-1] / a[-1] ** 2) * (1.0 / gaps[-1] + 1.0 / tail)
    )
    return out


def map_velocity(params: NetworkParams, bdot: np.ndarray):
    """Piecewise-constant map velocity induced by bias velocities.

    Returns ``(breakpoints, velocities)`` with ``velocities[k]`` the map
    velocity on ``(breakpoints[k-1], breakpoints[k])``; the leading entry
    covers the inactive region left of the first node.
    """
    require_one_sided_sorted(params)
    bdot = np.asarray(bdot, dtype=float)
    if bdot.shape != params.biases.shape:
        raise ValueError("one velocity per bias node required")
    seg = -np.cumsum(params.effective_weights * bdot)
    return params.biases.copy(), np.concatenate(([0.0], seg))
