"""Ground-truth transport maps, densities and a reference PDE solver.

Each analytic map solves the characteristic ODE ``dT/dt = -V'(T)`` of its
potential; the Ornstein-Uhlenbeck map and density include diffusion in
closed form.  Flows without closed-form solutions are referenced against
a centered-in-space, implicit-in-time finite-difference solver plus
monotone quantile inversion of the resulting CDFs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from wgf.errors import NumericError
from wgf.network import ReferenceDensity

_SQRT2PI = np.sqrt(2.0 * np.pi)

BARENBLATT_C = 3.0 ** (1.0 / 3.0) / 4.0
BARENBLATT_EDGE = 3.0 ** (2.0 / 3.0)


def map_quadratic(t: float, z, mu0: float):
    """Transport map of the quadratic-potential flow: contraction to mu0."""
    return mu0 + np.exp(-t) * (np.asarray(z, dtype=float) - mu0)


def map_quartic(t: float, z):
    """Transport map of the double-well quartic potential (center 1)."""
    z = np.asarray(z, dtype=float)
    w = z - 1.0
    with np.errstate(divide="ignore"):
        core = np.exp(t) / np.sqrt(w ** (-2.0) + np.expm1(2.0 * t))
    return np.where(w == 0.0, 1.0, 1.0 + np.sign(w) * core)


def map_sextic(t: float, z):
    """Transport map of the sixth-power potential (center 4)."""
    z = np.asarray(z, dtype=float)
    w = z - 4.0
    with np.errstate(divide="ignore"):
        core = 1.0 / np.sqrt(2.0 * np.sqrt(0.25 * w ** (-4.0) + t))
    return np.where(w == 0.0, 4.0, 4.0 + np.sign(w) * core)


def ou_moments(t: float, gamma0: float, mu0: float, D: float):
    """Mean and variance at time ``t`` starting from the standard normal."""
    decay = np.exp(-gamma0 * t)
    mean = mu0 * (1.0 - decay)
    var = decay**2 + D * (1.0 - decay**2) / gamma0
    return mean, var


def map_ou(t: float, z, gamma0: float, mu0: float, D: float):
    """Affine optimal map between the OU Gaussian marginals."""
    mean, var = ou_moments(t, gamma0, mu0, D)
    return mean + np.asarray(z, dtype=float) * np.sqrt(var)


def density_ou(t: float, x, gamma0: float, mu0: float, D: float):
    mean, var = ou_moments(t, gamma0, mu0, D)
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(var) / _SQRT2PI


def barenblatt(t: float, x, t0: float):
    """Self-similar compactly supported profile of the quadratic diffusion."""
    tau = t0 + t
    if tau <= 0:
        raise ValueError("t + t0 must be positive")
    x = np.asarray(x, dtype=float)
    body = BARENBLATT_C - x**2 * tau ** (-2.0 / 3.0) / 12.0
    return tau ** (-1.0 / 3.0) * np.maximum(body, 0.0)


def barenblatt_support_radius(t: float, t0: float) -> float:
    tau = t0 + t
    if tau <= 0:
        raise ValueError("t + t0 must be positive")
    return BARENBLATT_EDGE * tau ** (1.0 / 3.0)


def barenblatt_cdf(t: float, x, t0: float):
    tau = t0 + t
    if tau <= 0:
        raise ValueError("t + t0 must be positive")
    u = np.clip(np.asarray(x, dtype=float) * tau ** (-1.0 / 3.0),
                -BARENBLATT_EDGE, BARENBLATT_EDGE)
    return 0.5 + BARENBLATT_C * u - u**3 / 36.0


def barenblatt_inverse_cdf(t: float, q, t0: float):
    """Vectorized bisection inverse of the closed-form profile CDF."""
    tau = t0 + t
    if tau <= 0:
        raise ValueError("t + t0 must be positive")
    q = np.asarray(q, dtype=float)
    lo = np.full(q.shape, -BARENBLATT_EDGE)
    hi = np.full(q.shape, BARENBLATT_EDGE)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = 0.5 + BARENBLATT_C * mid - mid**3 / 36.0 < q
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi) * tau ** (1.0 / 3.0)


def barenblatt_map(t: float, z, t0: float):
    """Exact transport map of the quadratic-diffusion flow: a dilation."""
    if t0 <= 0 or t0 + t <= 0:
        raise ValueError("t0 and t + t0 must be positive")
    return np.asarray(z, dtype=float) * ((t0 + t) / t0) ** (1.0 / 3.0)


def barenblatt_reference(t0: float) -> ReferenceDensity:
    """Barenblatt profile at time zero as a reference density."""
    return ReferenceDensity(
        pdf=lambda z: barenblatt(0.0, z, t0),
        cdf=lambda z: barenblatt_cdf(0.0, z, t0),
        inverse_cdf=lambda q: barenblatt_inverse_cdf(0.0, q, t0),
        sampler=lambda n, rng: barenblatt_inverse_cdf(0.0, rng.random(n), t0),
        name=f"barenblatt_t0_{t0:g}",
    )


def ks_second_moment_rate(chi: float, m2_0: float) -> float:
    """Signed growth rate of the second moment in the aggregation model.

    Positive below the critical coupling (spreading), negative above it
    (collapse).  Only the sign and monotonicity content is trusted by the
    acceptance checks.
    """
    return 2.0 * (1.0 - chi) * m2_0


@dataclass(frozen=True)
class DensityGrid:
    """Gridded density snapshots of a PDE solve."""

    x_min: float
    x_max: float
    n_points: int
    times: np.ndarray
    values: np.ndarray
    dt: float
    n_steps: int

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        times = np.asarray(self.times, dtype=float)
        if values.shape != (len(times), self.n_points):
            raise ValueError("snapshot array shape mismatch")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    def snapshot(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 + 1e-6 * max(abs(t), 1.0):
            raise KeyError(f"no snapshot recorded at t={t}")
        return self.values[i]

    def trapezoid_mass(self, t: float) -> float:
        return float(np.trapezoid(self.snapshot(t), dx=self.dx))


@dataclass(frozen=True)
class CDFGrid:
    """Nondecreasing cumulative distribution sampled on a grid."""

    x: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if x.shape != v.shape or x.ndim != 1:
            raise ValueError("grid and CDF values must be equal-length vectors")
        if np.any(np.diff(v) < 0):
            raise ValueError("CDF values must be nondecreasing")
        if abs(v[0]) > 1e-8 or abs(v[-1] - 1.0) > 1e-8:
            raise ValueError("CDF endpoints must be 0 and 1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_density(cls, x: np.ndarray, density: np.ndarray) -> "CDFGrid":
        x = np.asarray(x, dtype=float)
        # Implicit solves can leave denormal-scale negative undershoots in
        # the far tails; a distribution function needs them gone.
        density = np.maximum(np.asarray(density, dtype=float), 0.0)
        inc = 0.5 * (density[1:] + density[:-1]) * np.diff(x)
        cum = np.concatenate(([0.0], np.cumsum(inc)))
        return cls(x=x, values=cum / cum[-1])


def fd_fokker_planck(
    dV,
    gamma: float,
    x_min: float,
    x_max: float,
    n_points: int,
    dt: float,
    steps: int,
    p0: np.ndarray,
    snapshot_every: int | None = None,
) -> DensityGrid:
    """Implicit Euler solve of ``dp/dt = d/dx(p dV/dx) + gamma d2p/dx2``.

    Space is discretized with centered differences and vanishing (Dirichlet)
    boundary values; each step solves one tridiagonal system.  The interior
    stencil telescopes, so total mass is conserved up to boundary leakage,
    which is monitored and must stay below 1e-12 in density units.
    """
    x = np.linspace(x_min, x_max, n_points)
    dx = x[1] - x[0]
    drift = np.asarray(dV(x), dtype=float)
    p = np.array(p0, dtype=float)
    if p.shape != x.shape:
        raise ValueError("p0 must live on the requested grid")

    # Banded matrix of I - dt*L in solve_banded layout (upper, diag, lower).
    upper = np.zeros(n_points)
    diag = np.ones(n_points)
    lower = np.zeros(n_points)
    diag[1:-1] = 1.0 + 2.0 * dt * gamma / dx**2
    upper[2:] = -dt * (drift[2:] / (2.0 * dx) + gamma / dx**2)
    lower[:-2] = dt * (drift[:-2] / (2.0 * dx) - gamma / dx**2)
    band = np.vstack((upper, diag, lower))

    if snapshot_every is None:
        snapshot_every = steps
    times = [0.0]
    snaps = [p.copy()]
    for k in range(1, steps + 1):
        rhs = p.copy()
        rhs[0] = 0.0
        rhs[-1] = 0.0
        p = solve_banded((1, 1), band, rhs)
        if max(abs(p[1]), abs(p[-2])) > 1e-12:
            raise NumericError(
                "density reached the grid boundary; widen the domain"
            )
        if k % snapshot_every == 0 or k == steps:
            times.append(k * dt)
            snaps.append(p.copy())
    return DensityGrid(
        x_min=x_min, x_max=x_max, n_points=n_points,
        times=np.array(times), values=np.array(snaps),
        dt=dt, n_steps=steps,
    )


def quantile_transport(F0, Ft: CDFGrid, z, clamp_diagnostics: dict | None = None):
    """Monotone map sending the ``F0`` distribution onto the ``Ft`` one.

    ``F0`` may be a callable CDF or a :class:`CDFGrid`.  Query quantiles
    are clamped into (0, 1) with a diagnostic count; flat runs of the
    target CDF are merged before the piecewise-linear inversion so the
    interpolation stays strictly monotone.
    """
    z = np.asarray(z, dtype=float)
    if isinstance(F0, CDFGrid):
        q = np.interp(z, F0.x, F0.values)
    else:
        q = np.asarray(F0(z), dtype=float)
    lo, hi = 1e-12, 1.0 - 1e-12
    n_clamped = int(np.count_nonzero((q < lo) | (q > hi)))
    if n_clamped and clamp_diagnostics is not None:
        clamp_diagnostics["clamped"] = (
            clamp_diagnostics.get("clamped", 0) + n_clamped
        )
    q = np.clip(q, lo, hi)
    keep = np.concatenate(([True], np.diff(Ft.values) > 0))
    return np.interp(q, Ft.values[keep], Ft.x[keep])
