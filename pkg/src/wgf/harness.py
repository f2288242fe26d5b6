"""Experiment harness: configuration, sampling, error metrics, CSV output.

Each experiment wires an initial map, an energy, a reference density and
an oracle together, runs the projected flow, and writes its artifacts:

* ``errors.csv``      -- experiment, N, subset, t, error
* ``trajectory.csv``  -- step, t, energy, min_bias_gap
* ``histogram.csv``   -- t, bin_left, bin_right, count
* ``mapping.csv``     -- z, f_theta, T_oracle
* ``density.csv``     -- t, x, value (oracle density, where one exists)
* ``metadata.csv``    -- key, value

Headers are mandatory; floats are written with shortest round-trip
representation so every file re-parses to bitwise-identical values.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from wgf import oracles
from wgf.dynamics import FlowConfig, MetricMode, TrajectoryRecord, run_flow
from wgf.errors import ConfigError
from wgf.functionals import (
    EnergySpec,
    InteractionTerm,
    PotentialTerm,
    entropy_term,
    porous_medium_term,
)
from wgf.metric import ParamSubset
from wgf.network import NetworkParams, ReferenceDensity, forward, init_identity
from wgf.network import standard_gaussian
from wgf.oracles import (
    CDFGrid,
    barenblatt,
    barenblatt_map,
    barenblatt_reference,
    density_ou,
    fd_fokker_planck,
    map_ou,
    map_quadratic,
    map_quartic,
    map_sextic,
    quantile_transport,
)


class Experiment(Enum):
    LINEAR_QUADRATIC = "linear_quadratic"
    LINEAR_QUARTIC = "linear_quartic"
    LINEAR_SEXTIC = "linear_sextic"
    FPK_QUADRATIC = "fpk_quadratic"
    FPK_QUARTIC = "fpk_quartic"
    FPK_SEXTIC = "fpk_sextic"
    POROUS = "porous"
    KELLER_SEGEL = "keller_segel"
    SWEEP_N = "sweep_n"


@dataclass
class ExperimentConfig:
    experiment: Experiment
    n_neurons: int = 32
    bias_range: float = 4.0
    eps: float = 5e-6
    beta: Optional[float] = None
    dt: float = 1e-3
    steps: int = 1000
    subset: ParamSubset = ParamSubset.BOTH
    metric_mode: MetricMode = MetricMode.EMPIRICAL
    pinv_rel_tol: float = 1e-6
    particles: int = 500_000
    seed: int = 0
    singular_delta: float = 1e-12
    mu0: Optional[float] = None
    gamma0: Optional[float] = None
    sigma0: Optional[float] = None
    diffusion_gamma: Optional[float] = None
    chi: Optional[float] = None
    t0: Optional[float] = None
    m_exponent: Optional[float] = None
    mesh_points: int = 100_000
    mesh_range: Tuple[float, float] = (-6.0, 6.0)
    hist_bins: int = 100
    hist_range: Tuple[float, float] = (-5.0, 5.0)
    snapshot_count: int = 11
    desk_scale: bool = False
    output_dir: str = "out"
    sweep_base: Optional[Experiment] = None
    sweep_n_list: Tuple[int, ...] = (4, 8, 16, 32, 64)
    sweep_subsets: Tuple[ParamSubset, ...] = (ParamSubset.A_ONLY, ParamSubset.BOTH)

    @property
    def effective_particles(self) -> int:
        return max(self.particles // 100, 10) if self.desk_scale else self.particles

    @property
    def effective_beta(self) -> float:
        return float(self.n_neurons) if self.beta is None else self.beta


_DEFAULTS = {
    Experiment.LINEAR_QUADRATIC: dict(
        dt=1e-3, steps=1000, particles=500_000, seed=101, mu0=0.0,
        hist_range=(-5.0, 5.0),
    ),
    Experiment.LINEAR_QUARTIC: dict(
        dt=2e-4, steps=1000, particles=500_000, seed=102,
        hist_range=(-4.0, 4.0),
    ),
    Experiment.LINEAR_SEXTIC: dict(
        dt=1e-6, steps=1000, particles=500_000, seed=103,
        mesh_points=4_000_000, hist_range=(-5.0, 6.0),
    ),
    Experiment.FPK_QUADRATIC: dict(
        dt=1e-3, steps=1000, particles=1_000_000, seed=104,
        mu0=30.0, gamma0=1.0, sigma0=4.0, hist_range=(-8.0, 45.0),
    ),
    Experiment.FPK_QUARTIC: dict(
        dt=2e-4, steps=1000, particles=1_000_000, seed=105,
        diffusion_gamma=0.5, hist_range=(-4.0, 5.0),
    ),
    Experiment.FPK_SEXTIC: dict(
        dt=1e-6, steps=1000, particles=1_000_000, seed=106,
        diffusion_gamma=0.5, hist_range=(-6.0, 7.0),
        # The stiff drift needs a tight truncation to keep desk-scale
        # sampling noise out of the near-null metric directions.
        pinv_rel_tol=3e-7,
    ),
    Experiment.POROUS: dict(
        dt=1e-3, steps=1000, particles=1_000_000, seed=107, t0=1.0,
        m_exponent=2.0, hist_range=(-3.0, 3.0), bias_range=3.0 ** (2.0 / 3.0),
        mesh_range=(-(3.0 ** (2.0 / 3.0)), 3.0 ** (2.0 / 3.0)),
    ),
    Experiment.KELLER_SEGEL: dict(
        dt=3e-4, steps=1000, particles=2000, seed=108, chi=0.5,
        diffusion_gamma=1.0, hist_range=(-5.0, 5.0),
    ),
    Experiment.SWEEP_N: dict(
        dt=2e-4, steps=1000, particles=500_000, seed=109,
        sweep_base=Experiment.LINEAR_QUARTIC,
    ),
}


def default_config(experiment: Experiment, **overrides) -> ExperimentConfig:
    """Experiment configuration with its published defaults applied."""
    kwargs = dict(_DEFAULTS[experiment])
    kwargs.update(overrides)
    return ExperimentConfig(experiment=experiment, **kwargs)


def validate_config(config: ExperimentConfig) -> None:
    exp = config.experiment
    if config.n_neurons < 2:
        raise ConfigError("n_neurons must be at least 2")
    for name in ("bias_range", "eps", "dt", "singular_delta", "pinv_rel_tol"):
        if getattr(config, name) <= 0:
            raise ConfigError(f"{name} must be positive")
    if config.steps < 1 or config.particles < 1 or config.mesh_points < 1:
        raise ConfigError("steps, particles and mesh_points must be positive")
    if config.mesh_range[0] >= config.mesh_range[1]:
        raise ConfigError("mesh_range must be increasing")
    if config.hist_range[0] >= config.hist_range[1] or config.hist_bins < 1:
        raise ConfigError("histogram range/bins invalid")
    needs = {
        Experiment.LINEAR_QUADRATIC: ("mu0",),
        Experiment.FPK_QUADRATIC: ("mu0", "gamma0", "sigma0"),
        Experiment.FPK_QUARTIC: ("diffusion_gamma",),
        Experiment.FPK_SEXTIC: ("diffusion_gamma",),
        Experiment.POROUS: ("t0", "m_exponent"),
        Experiment.KELLER_SEGEL: ("chi", "diffusion_gamma"),
    }
    for name in needs.get(exp, ()):
        if getattr(config, name) is None:
            raise ConfigError(f"{exp.value} requires {name}")
    if exp is Experiment.POROUS and config.m_exponent != 2.0:
        raise ConfigError("only the quadratic porous-medium exponent is supported")
    if exp is Experiment.SWEEP_N:
        if config.sweep_base is None or config.sweep_base is Experiment.SWEEP_N:
            raise ConfigError("sweep needs a base experiment")
        if not config.sweep_n_list or any(n < 2 for n in config.sweep_n_list):
            raise ConfigError("sweep N list invalid")


def weighted_l1_error(f_map, T_oracle, mesh: np.ndarray, p0) -> float:
    """Mean absolute map deviation weighted by the initial density.

    Plain average over the mesh without a spacing factor, matching the
    error functional used throughout the experiments.
    """
    mesh = np.asarray(mesh, dtype=float)
    if mesh.size == 0:
        raise ValueError("mesh must be nonempty")
    fv = forward(f_map, mesh) if isinstance(f_map, NetworkParams) else f_map(mesh)
    return float(np.mean(np.abs(fv - T_oracle(mesh)) * p0(mesh)))


def sample_gaussian(M: int, seed: int) -> np.ndarray:
    if M < 1:
        raise ValueError("sample count must be positive")
    return np.random.default_rng(seed).standard_normal(M)


def sample_barenblatt(M: int, seed: int, t0: float) -> np.ndarray:
    if M < 1:
        raise ValueError("sample count must be positive")
    rng = np.random.default_rng(seed)
    return oracles.barenblatt_inverse_cdf(0.0, rng.random(M), t0)


def histogram(particles: np.ndarray, bins: int, hist_range: Tuple[float, float]):
    """Bin counts plus edges; counts sum to the in-range particle count."""
    counts, edges = np.histogram(particles, bins=bins, range=hist_range)
    return counts, edges


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path: str, expected_header: Sequence[str]):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != list(expected_header):
            raise ConfigError(
                f"{os.path.basename(path)}: expected header {list(expected_header)}, got {header}"
            )
        return [tuple(row) for row in reader]


ERRORS_HEADER = ("experiment", "N", "subset", "t", "error")
TRAJECTORY_HEADER = ("step", "t", "energy", "min_bias_gap")
HISTOGRAM_HEADER = ("t", "bin_left", "bin_right", "count")
MAPPING_HEADER = ("z", "f_theta", "T_oracle")
DENSITY_HEADER = ("t", "x", "value")
METADATA_HEADER = ("key", "value")


def read_errors(path: str):
    return [
        (exp, int(n), sub, float(t), float(err))
        for exp, n, sub, t, err in read_csv(path, ERRORS_HEADER)
    ]


def read_trajectory(path: str):
    return [
        (int(s), float(t), float(e), float(g))
        for s, t, e, g in read_csv(path, TRAJECTORY_HEADER)
    ]


def read_histogram(path: str):
    return [
        (float(t), float(l), float(r), int(c))
        for t, l, r, c in read_csv(path, HISTOGRAM_HEADER)
    ]


def read_mapping(path: str):
    return [
        (float(z), float(f), float(T))
        for z, f, T in read_csv(path, MAPPING_HEADER)
    ]


def read_density(path: str):
    return [
        (float(t), float(x), float(v))
        for t, x, v in read_csv(path, DENSITY_HEADER)
    ]


# Plain multiplications; array integer powers are an order of magnitude
# slower at the particle counts used here.
def _quartic_v(x):
    u = x - 1.0
    u2 = u * u
    return 0.25 * u2 * u2 - 0.5 * u2


def _quartic_dv(x):
    u = x - 1.0
    return u * u * u - u


def _sextic_v(x):
    u = x - 4.0
    u2 = u * u
    return u2 * u2 * u2 / 6.0


def _sextic_dv(x):
    u = x - 4.0
    u2 = u * u
    return u2 * u2 * u


def _reference(config: ExperimentConfig) -> ReferenceDensity:
    if config.experiment is Experiment.POROUS:
        return barenblatt_reference(config.t0)
    return standard_gaussian()


def _energy_spec(config: ExperimentConfig) -> EnergySpec:
    exp = config.experiment
    delta = config.singular_delta
    if exp is Experiment.LINEAR_QUADRATIC:
        mu0 = config.mu0
        term = PotentialTerm(
            V=lambda x: 0.5 * (x - mu0) ** 2, dV=lambda x: x - mu0
        )
        return EnergySpec(terms=[term], singular_delta=delta)
    if exp is Experiment.LINEAR_QUARTIC or exp is Experiment.FPK_QUARTIC:
        term = PotentialTerm(V=_quartic_v, dV=_quartic_dv)
        if exp is Experiment.LINEAR_QUARTIC:
            return EnergySpec(terms=[term], singular_delta=delta)
        return EnergySpec(
            terms=[term, entropy_term()],
            diffusion_gamma=config.diffusion_gamma, singular_delta=delta,
        )
    if exp is Experiment.LINEAR_SEXTIC or exp is Experiment.FPK_SEXTIC:
        term = PotentialTerm(V=_sextic_v, dV=_sextic_dv)
        if exp is Experiment.LINEAR_SEXTIC:
            return EnergySpec(terms=[term], singular_delta=delta)
        return EnergySpec(
            terms=[term, entropy_term()],
            diffusion_gamma=config.diffusion_gamma, singular_delta=delta,
        )
    if exp is Experiment.FPK_QUADRATIC:
        mu0, gamma0 = config.mu0, config.gamma0
        diffusion = config.sigma0**2 / 2.0
        term = PotentialTerm(
            V=lambda x: 0.5 * gamma0 * (x - mu0) ** 2,
            dV=lambda x: gamma0 * (x - mu0),
        )
        return EnergySpec(
            terms=[term, entropy_term()],
            diffusion_gamma=diffusion, singular_delta=delta,
        )
    if exp is Experiment.POROUS:
        return EnergySpec(terms=[porous_medium_term()], singular_delta=delta)
    if exp is Experiment.KELLER_SEGEL:
        chi = config.chi
        return EnergySpec(
            terms=[
                entropy_term(),
                InteractionTerm(
                    W=lambda x, y: 2.0 * chi * np.log(np.abs(x - y)),
                    grad1W=lambda x, y: 2.0 * chi / (x - y),
                    exclude_self=True,
                ),
            ],
            diffusion_gamma=config.diffusion_gamma, singular_delta=delta,
        )
    raise ConfigError(f"no energy for {exp.value}")


class _FdOracle:
    """Quantile-map oracle backed by one finite-difference solve."""

    def __init__(self, config: ExperimentConfig, snapshot_times: np.ndarray):
        if config.experiment is Experiment.FPK_QUARTIC:
            dV = lambda x: (x - 1.0) ** 3 - (x - 1.0)
        else:
            dV = lambda x: (x - 4.0) ** 5
        t_final = config.dt * config.steps
        fd_steps = 10_000
        stride = fd_steps // (len(snapshot_times) - 1)
        ref = standard_gaussian()
        x_min, x_max = -9.0, 9.0
        n = 3601
        x = np.linspace(x_min, x_max, n)
        self.grid = fd_fokker_planck(
            dV, config.diffusion_gamma, x_min, x_max, n,
            t_final / fd_steps, fd_steps, ref.pdf(x), snapshot_every=stride,
        )
        self.ref = ref
        self.densities = {
            round(t, 12): self.grid.values[i] for i, t in enumerate(self.grid.times)
        }

    def map_at(self, t: float) -> Callable:
        p = self.grid.snapshot(t)
        ft = CDFGrid.from_density(self.grid.x, p)
        return lambda z: quantile_transport(self.ref.cdf, ft, z)

    def density_at(self, t: float) -> Callable:
        p = self.grid.snapshot(t)
        x = self.grid.x
        return lambda q: np.interp(q, x, p)


def _oracles_for(config: ExperimentConfig, snapshot_times: np.ndarray):
    """Return (map_oracle(t) -> callable or None, density(t) -> callable or None)."""
    exp = config.experiment
    if exp is Experiment.LINEAR_QUADRATIC:
        mu0 = config.mu0
        dens = lambda t, x: standard_gaussian().pdf((x - mu0) * np.exp(t) + mu0) * np.exp(t)
        return (lambda t: (lambda z: map_quadratic(t, z, mu0))), dens
    if exp is Experiment.LINEAR_QUARTIC:
        return (lambda t: (lambda z: map_quartic(t, z))), None
    if exp is Experiment.LINEAR_SEXTIC:
        return (lambda t: (lambda z: map_sextic(t, z))), None
    if exp is Experiment.FPK_QUADRATIC:
        mu0, gamma0 = config.mu0, config.gamma0
        diffusion = config.sigma0**2 / 2.0
        return (
            lambda t: (lambda z: map_ou(t, z, gamma0, mu0, diffusion)),
            lambda t, x: density_ou(t, x, gamma0, mu0, diffusion),
        )
    if exp in (Experiment.FPK_QUARTIC, Experiment.FPK_SEXTIC):
        fd = _FdOracle(config, snapshot_times)
        return (lambda t: fd.map_at(t)), (lambda t, x: fd.density_at(t)(x))
    if exp is Experiment.POROUS:
        t0 = config.t0
        return (
            lambda t: (lambda z: barenblatt_map(t, z, t0)),
            lambda t, x: barenblatt(t, x, t0),
        )
    return None, None


@dataclass
class ErrorReport:
    """Per-snapshot map errors plus run provenance.

    ``rows`` are (experiment, N, subset, t, error) tuples; a sweep's
    report holds one final-time row per (subset, N).
    """

    rows: List[tuple]
    seed: int
    wall_time_s: float
    mesh_points: int

    def __post_init__(self):
        if any(row[4] < 0 for row in self.rows):
            raise ValueError("map errors must be nonnegative")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    record: Optional[TrajectoryRecord]
    error_rows: List[tuple]
    paths: dict
    wall_time: float
    second_moments: Optional[np.ndarray] = None
    snapshot_times: Optional[np.ndarray] = None

    @property
    def report(self) -> ErrorReport:
        return ErrorReport(
            rows=list(self.error_rows),
            seed=self.config.seed,
            wall_time_s=self.wall_time,
            mesh_points=self.config.mesh_points,
        )


def _snapshot_stride(config: ExperimentConfig) -> int:
    return max(config.steps // max(config.snapshot_count - 1, 1), 1)


def _flow_config(config: ExperimentConfig) -> FlowConfig:
    stride = 1 if config.experiment is Experiment.KELLER_SEGEL else _snapshot_stride(config)
    return FlowConfig(
        dt=config.dt,
        steps=config.steps,
        metric_mode=config.metric_mode,
        param_subset=config.subset,
        pinv_rel_tol=config.pinv_rel_tol,
        sample_count=config.effective_particles,
        seed=config.seed,
        theta_stride=stride,
    )


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run one experiment end to end and write its CSV artifacts."""
    validate_config(config)
    if config.experiment is Experiment.SWEEP_N:
        return run_sweep(config)
    start = time.perf_counter()
    os.makedirs(config.output_dir, exist_ok=True)
    ref = _reference(config)
    spec = _energy_spec(config)
    params0 = init_identity(
        config.n_neurons, config.bias_range, config.eps, config.effective_beta
    )
    record = run_flow(params0, spec, ref, _flow_config(config))

    stride = _snapshot_stride(config)
    snap = [(s, th) for s, th in record.theta_snapshots if s % stride == 0 or s == config.steps]
    snap_times = np.array([s * config.dt for s, _ in snap])
    map_oracle, density_oracle = _oracles_for(config, snap_times)

    mesh = np.linspace(*config.mesh_range, config.mesh_points)
    p0_weight = ref.pdf
    error_rows = []
    if map_oracle is not None:
        for s, th in snap:
            t = s * config.dt
            err = weighted_l1_error(th, map_oracle(t), mesh, p0_weight)
            error_rows.append(
                (config.experiment.value, config.n_neurons,
                 config.subset.value, t, err)
            )

    hist_rows = []
    for s, th in snap:
        t = s * config.dt
        counts, edges = histogram(
            forward(th, record.samples), config.hist_bins, config.hist_range
        )
        hist_rows.extend(
            (t, edges[i], edges[i + 1], int(counts[i]))
            for i in range(len(counts))
        )

    density_rows = []
    if density_oracle is not None:
        xs = np.linspace(*config.hist_range, 401)
        for s, _ in snap:
            t = s * config.dt
            vals = density_oracle(t, xs)
            density_rows.extend((t, x, v) for x, v in zip(xs, vals))

    mesh_csv = np.linspace(*config.mesh_range, 2001)
    f_final = forward(record.final_params, mesh_csv)
    if map_oracle is not None:
        T_final = map_oracle(record.final_time)(mesh_csv)
    else:
        T_final = np.full_like(mesh_csv, np.nan)
    mapping_rows = list(zip(mesh_csv, f_final, T_final))

    traj_rows = [
        (k, record.times[k], record.energy_history[k], record.min_bias_gap[k])
        for k in range(config.steps)
    ]

    second_moments = None
    if config.experiment is Experiment.KELLER_SEGEL:
        second_moments = np.array(
            [float(np.mean(forward(th, record.samples) ** 2))
             for _, th in record.theta_snapshots]
        )

    paths = _write_artifacts(
        config, error_rows, traj_rows, hist_rows, mapping_rows, density_rows,
        wall=time.perf_counter() - start,
    )
    return ExperimentResult(
        config=config, record=record, error_rows=error_rows, paths=paths,
        wall_time=time.perf_counter() - start, second_moments=second_moments,
        snapshot_times=snap_times,
    )


def _write_artifacts(config, error_rows, traj_rows, hist_rows, mapping_rows,
                     density_rows, wall):
    out = config.output_dir
    paths = {}
    if error_rows:
        paths["errors"] = os.path.join(out, "errors.csv")
        write_csv(paths["errors"], ERRORS_HEADER, error_rows)
    paths["trajectory"] = os.path.join(out, "trajectory.csv")
    write_csv(paths["trajectory"], TRAJECTORY_HEADER, traj_rows)
    paths["histogram"] = os.path.join(out, "histogram.csv")
    write_csv(paths["histogram"], HISTOGRAM_HEADER, hist_rows)
    paths["mapping"] = os.path.join(out, "mapping.csv")
    write_csv(paths["mapping"], MAPPING_HEADER, mapping_rows)
    if density_rows:
        paths["density"] = os.path.join(out, "density.csv")
        write_csv(paths["density"], DENSITY_HEADER, density_rows)
    meta = [
        ("experiment", config.experiment.value),
        ("n_neurons", config.n_neurons),
        ("subset", config.subset.value),
        ("dt", config.dt),
        ("steps", config.steps),
        ("particles", config.effective_particles),
        ("seed", config.seed),
        ("mesh_points", config.mesh_points),
        ("pinv_rel_tol", config.pinv_rel_tol),
        ("singular_delta", config.singular_delta),
        ("wall_time_s", wall),
    ]
    paths["metadata"] = os.path.join(config.output_dir, "metadata.csv")
    write_csv(paths["metadata"], METADATA_HEADER, meta)
    return paths


def run_sweep(config: ExperimentConfig) -> ExperimentResult:
    """Error-versus-neuron-count study over a base experiment."""
    validate_config(config)
    start = time.perf_counter()
    os.makedirs(config.output_dir, exist_ok=True)
    base_defaults = dict(_DEFAULTS[config.sweep_base])
    rows = []
    for subset in config.sweep_subsets:
        for n in config.sweep_n_list:
            sub_cfg = default_config(
                config.sweep_base,
                n_neurons=n,
                subset=subset,
                desk_scale=config.desk_scale,
                particles=config.particles if config.particles != 500_000
                else base_defaults.get("particles", config.particles),
                seed=config.seed,
                pinv_rel_tol=config.pinv_rel_tol,
                output_dir=os.path.join(
                    config.output_dir, f"{config.sweep_base.value}_{subset.value}_{n}"
                ),
                snapshot_count=2,
            )
            result = run_experiment(sub_cfg)
            rows.append(result.error_rows[-1])
    paths = {"errors": os.path.join(config.output_dir, "errors.csv")}
    write_csv(paths["errors"], ERRORS_HEADER, rows)
    meta = [
        ("experiment", "sweep_n"),
        ("base", config.sweep_base.value),
        ("n_list", " ".join(str(n) for n in config.sweep_n_list)),
        ("subsets", " ".join(s.value for s in config.sweep_subsets)),
        ("seed", config.seed),
        ("wall_time_s", time.perf_counter() - start),
    ]
    paths["metadata"] = os.path.join(config.output_dir, "metadata.csv")
    write_csv(paths["metadata"], METADATA_HEADER, meta)
    return ExperimentResult(
        config=config, record=None, error_rows=rows, paths=paths,
        wall_time=time.perf_counter() - start,
    )


def load_config_file(path: str) -> dict:
    """Parse the flat ``key = value`` configuration format.

    Lines are ``name = value`` with ``#`` comments; values are parsed as
    int, float, bool or bare string.  Unknown keys are rejected by
    :func:`apply_overrides`.
    """
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            out[key.strip()] = _parse_value(value.strip())
    return out


def _parse_value(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


_SUBSET_ALIASES = {"a": ParamSubset.A_ONLY, "b": ParamSubset.B_ONLY,
                   "both": ParamSubset.BOTH}


def apply_overrides(config: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply config-file or CLI overrides onto a configuration."""
    updates = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "subset":
            if str(value) not in _SUBSET_ALIASES:
                raise ConfigError(f"unknown subset {value!r}")
            updates[key] = _SUBSET_ALIASES[str(value)]
        elif key == "metric_mode":
            try:
                updates[key] = MetricMode(str(value))
            except ValueError as exc:
                raise ConfigError(f"unknown metric mode {value!r}") from exc
        elif key in ("mesh_range", "hist_range"):
            lo, _, hi = str(value).partition(":")
            updates[key] = (float(lo), float(hi))
        elif hasattr(config, key):
            updates[key] = value
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    return replace(config, **updates)
