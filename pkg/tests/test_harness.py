import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wgf import cli
from wgf.errors import ConfigError
from wgf.harness import (
    ERRORS_HEADER,
    Experiment,
    ExperimentConfig,
    apply_overrides,
    default_config,
    histogram,
    load_config_file,
    read_csv,
    read_errors,
    read_histogram,
    read_mapping,
    read_trajectory,
    run_experiment,
    sample_barenblatt,
    sample_gaussian,
    validate_config,
    weighted_l1_error,
    write_csv,
)
from wgf.network import forward, init_identity, standard_gaussian
from wgf.oracles import barenblatt_support_radius


class TestWeightedL1Error:
    def test_exact_map_zero(self, gaussian_ref):
        mesh = np.linspace(-4, 4, 1001)
        T = lambda z: 2 * z + 1
        assert weighted_l1_error(T, T, mesh, gaussian_ref.pdf) == 0.0

    def test_constant_offset_closed_form(self, gaussian_ref):
        mesh = np.linspace(-5, 5, 2001)
        c = 0.37
        err = weighted_l1_error(
            lambda z: z + c, lambda z: z, mesh, gaussian_ref.pdf
        )
        assert err == pytest.approx(c * np.mean(gaussian_ref.pdf(mesh)), rel=1e-12)

    def test_identity_init_within_eps(self, gaussian_ref):
        p = init_identity(16, 4.0, 5e-6, 16.0)
        mesh = np.linspace(-4, 4, 5001)
        err = weighted_l1_error(p, lambda z: z, mesh, gaussian_ref.pdf)
        assert err <= 5e-6

    def test_empty_mesh_rejected(self, gaussian_ref):
        with pytest.raises(ValueError):
            weighted_l1_error(lambda z: z, lambda z: z, np.array([]), gaussian_ref.pdf)


class TestSamplers:
    def test_zero_count_rejected(self):
        with pytest.raises(ValueError):
            sample_gaussian(0, 1)
        with pytest.raises(ValueError):
            sample_barenblatt(0, 1, 1.0)

    def test_gaussian_moments(self):
        z = sample_gaussian(1_000_000, 7)
        n = len(z)
        assert abs(np.mean(z)) <= 4.0 / np.sqrt(n)
        assert abs(np.var(z) - 1.0) <= 4.0 * np.sqrt(2.0 / n)

    def test_barenblatt_support(self):
        z = sample_barenblatt(100_000, 3, 1.0)
        assert np.max(np.abs(z)) <= barenblatt_support_radius(0.0, 1.0)

    def test_deterministic(self):
        np.testing.assert_array_equal(sample_gaussian(100, 5), sample_gaussian(100, 5))


class TestHistogram:
    def test_empty_input(self):
        counts, edges = histogram(np.array([]), 10, (0.0, 1.0))
        assert counts.sum() == 0

    def test_single_bin_capture(self):
        counts, _ = histogram(np.full(37, 0.5), 1, (0.0, 1.0))
        assert counts[0] == 37

    def test_counts_sum_to_in_range(self, rng):
        x = rng.normal(size=10_000)
        counts, _ = histogram(x, 100, (-1.0, 1.0))
        assert counts.sum() == np.count_nonzero((x >= -1.0) & (x <= 1.0))

    def test_uniform_binomial_bound(self, rng):
        n, bins = 100_000, 20
        x = rng.uniform(0, 1, size=n)
        counts, _ = histogram(x, bins, (0.0, 1.0))
        expect = n / bins
        sd = np.sqrt(n * (1 / bins) * (1 - 1 / bins))
        assert np.all(np.abs(counts - expect) <= 5 * sd)


class TestConfigValidation:
    def test_missing_required_field(self, tmp_path):
        config = default_config(
            Experiment.FPK_QUADRATIC, mu0=None, output_dir=str(tmp_path / "x")
        )
        with pytest.raises(ConfigError):
            validate_config(config)
        with pytest.raises(ConfigError):
            run_experiment(config)
        assert not (tmp_path / "x").exists()

    def test_positivity(self):
        with pytest.raises(ConfigError):
            validate_config(default_config(Experiment.LINEAR_QUADRATIC, dt=-1.0))
        with pytest.raises(ConfigError):
            validate_config(default_config(Experiment.LINEAR_QUADRATIC, n_neurons=1))

    def test_sweep_needs_base(self):
        cfg = default_config(Experiment.SWEEP_N, sweep_base=None)
        with pytest.raises(ConfigError):
            validate_config(cfg)

    def test_porous_exponent_pinned(self):
        cfg = default_config(Experiment.POROUS, m_exponent=3.0)
        with pytest.raises(ConfigError):
            validate_config(cfg)


class TestConfigFile:
    def test_parse_and_apply(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# comment\n"
            "n_neurons = 8\n"
            "dt = 2e-3  # inline comment\n"
            "subset = b\n"
            "desk_scale = true\n"
            "hist_range = -2:2\n"
        )
        overrides = load_config_file(str(path))
        config = apply_overrides(default_config(Experiment.LINEAR_QUADRATIC), overrides)
        assert config.n_neurons == 8
        assert config.dt == 2e-3
        assert config.subset.value == "b"
        assert config.desk_scale is True
        assert config.hist_range == (-2.0, 2.0)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            apply_overrides(
                default_config(Experiment.LINEAR_QUADRATIC), {"bogus": 1}
            )

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("just some text\n")
        with pytest.raises(ConfigError):
            load_config_file(str(path))


class TestCsvRoundTrip:
    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=8))
    def test_float_round_trip(self, values):
        import tempfile

        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "vals.csv")
            rows = [(i, v) for i, v in enumerate(values)]
            write_csv(path, ("i", "v"), rows)
            back = read_csv(path, ("i", "v"))
            for (i, v), (si, sv) in zip(rows, back):
                assert float(sv) == v and int(si) == i

    def test_header_mismatch_detected(self, tmp_path):
        path = str(tmp_path / "e.csv")
        write_csv(path, ("a", "b"), [(1, 2)])
        with pytest.raises(ConfigError):
            read_csv(path, ERRORS_HEADER)


class TestRunExperiment:
    @pytest.fixture(scope="class")
    def quick_result(self, tmp_path_factory):
        out = str(tmp_path_factory.mktemp("quick"))
        config = default_config(
            Experiment.LINEAR_QUADRATIC,
            n_neurons=8, steps=50, particles=2000, snapshot_count=6,
            mesh_points=2001, output_dir=out,
        )
        return run_experiment(config)

    def test_artifacts_exist(self, quick_result):
        for name in ("errors", "trajectory", "histogram", "mapping", "metadata", "density"):
            assert os.path.exists(quick_result.paths[name])

    def test_artifacts_parse_and_round_trip(self, quick_result):
        errs = read_errors(quick_result.paths["errors"])
        assert [tuple(r) for r in errs] == [tuple(r) for r in quick_result.error_rows]
        traj = read_trajectory(quick_result.paths["trajectory"])
        assert len(traj) == 50
        np.testing.assert_array_equal(
            [row[2] for row in traj], quick_result.record.energy_history
        )
        hist = read_histogram(quick_result.paths["histogram"])
        assert len(hist) == 6 * 100
        mapping = read_mapping(quick_result.paths["mapping"])
        assert len(mapping) == 2001

    def test_histogram_counts_match_particles(self, quick_result):
        hist = read_histogram(quick_result.paths["histogram"])
        first_t = [row for row in hist if row[0] == 0.0]
        total = sum(row[3] for row in first_t)
        samples = quick_result.record.samples
        lo, hi = quick_result.config.hist_range
        x = forward(quick_result.record.theta_snapshots[0][1], samples)
        assert total == np.count_nonzero((x >= lo) & (x <= hi))

    def test_error_decreases(self, quick_result):
        errs = [row[4] for row in quick_result.error_rows]
        assert errs[-1] <= 5e-2


class TestCli:
    def test_run_and_exit_zero(self, tmp_path, capsys):
        rc = cli.main([
            "run", "linear_quadratic", "--n", "8", "--steps", "30",
            "--particles", "1000", "--out", str(tmp_path / "o"),
        ])
        assert rc == 0
        assert os.path.exists(tmp_path / "o" / "errors.csv")

    def test_unknown_experiment_exit_two(self, tmp_path, capsys):
        assert cli.main(["run", "bogus", "--out", str(tmp_path)]) == 2

    def test_bad_flag_exit_two(self, capsys):
        assert cli.main(["run"]) == 2

    def test_numeric_abort_exit_three(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("singular_delta = 1.0\n")
        rc = cli.main([
            "run", "fpk_quadratic", "--config", str(cfg), "--n", "8",
            "--steps", "5", "--particles", "500", "--out", str(tmp_path / "o"),
        ])
        assert rc == 3

    def test_oracle_fpk(self, tmp_path, capsys):
        rc = cli.main([
            "oracle", "fpk", "--potential", "quadratic", "--mu0", "0",
            "--gamma", "0.5", "--x-min", "-8", "--x-max", "8", "--dx", "0.05",
            "--dt", "1e-3", "--steps", "100", "--out", str(tmp_path / "d"),
        ])
        assert rc == 0
        rows = read_csv(str(tmp_path / "d" / "density.csv"), ("t", "x", "value"))
        assert len(rows) > 0

    def test_sweep_cli(self, tmp_path, capsys):
        rc = cli.main([
            "sweep-n", "linear_quadratic", "--n-list", "4,8",
            "--subsets", "both", "--steps", "20", "--particles", "500",
            "--out", str(tmp_path / "sw"),
        ])
        assert rc == 0
        rows = read_errors(str(tmp_path / "sw" / "errors.csv"))
        assert {r[1] for r in rows} == {4, 8}
