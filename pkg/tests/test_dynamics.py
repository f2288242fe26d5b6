import numpy as np
import pytest
from scipy import integrate

from wgf.dynamics import (
    FlowConfig,
    MetricMode,
    entropy_bias_gradient,
    euler_step,
    heat_flow_rhs,
    map_velocity,
    potential_flow_rhs,
    run_flow,
)
from wgf.errors import CdfGapError
from wgf.functionals import EnergySpec, PotentialTerm, entropy_term, grad_internal
from wgf.metric import (
    MetricTensor,
    ParamSubset,
    analytic_inverse_bb,
    empirical_metric,
    pinv_solve,
)
from wgf.network import NetworkParams, forward, init_identity, one_sided

QUAD = PotentialTerm(V=lambda x: 0.5 * x**2, dV=lambda x: x)
QUARTIC = PotentialTerm(
    V=lambda x: 0.25 * (x - 1) ** 4 - 0.5 * (x - 1) ** 2,
    dV=lambda x: (x - 1) ** 3 - (x - 1),
)


class TestEulerStep:
    def test_zero_gradient_noop(self):
        p = init_identity(4, 2.0, 1e-3, 4.0)
        q = euler_step(p, np.zeros(p.dim), MetricTensor(np.eye(p.dim)), 0.1)
        np.testing.assert_array_equal(q.weights, p.weights)
        np.testing.assert_array_equal(q.biases, p.biases)

    def test_identity_metric_plain_descent(self, rng):
        p = init_identity(3, 2.0, 1e-3, 3.0)
        g = rng.normal(size=p.dim)
        q = euler_step(p, g, MetricTensor(np.eye(p.dim)), 0.05)
        np.testing.assert_allclose(q.weights, p.weights - 0.05 * g[:6])
        np.testing.assert_allclose(q.biases, p.biases - 0.05 * g[6:])

    def test_step_gradient_scaling_cancels(self, rng):
        p = init_identity(3, 2.0, 1e-3, 3.0)
        g = rng.normal(size=p.dim)
        G = MetricTensor(np.eye(p.dim))
        c = 7.3
        q1 = euler_step(p, g, G, 0.05)
        q2 = euler_step(p, c * g, G, 0.05 / c)
        np.testing.assert_allclose(q1.biases, q2.biases, atol=1e-14)

    def test_subset_leaves_other_coordinates(self, rng):
        p = init_identity(3, 2.0, 1e-3, 3.0)
        g = rng.normal(size=6)
        q = euler_step(
            p, g, MetricTensor(np.eye(6)), 0.1, subset=ParamSubset.B_ONLY
        )
        np.testing.assert_array_equal(q.weights, p.weights)
        assert not np.allclose(q.biases, p.biases)


class TestRunFlow:
    def test_zero_step_records_once(self, gaussian_ref):
        p = init_identity(4, 2.0, 1e-3, 4.0)
        spec = EnergySpec(terms=[QUAD])
        cfg = FlowConfig(dt=0.0, steps=1, sample_count=200, seed=1)
        rec = run_flow(p, spec, gaussian_ref, cfg)
        assert rec.energy_history.shape == (1,)
        np.testing.assert_array_equal(rec.final_params.biases, p.biases)

    def test_deterministic(self, gaussian_ref):
        p = init_identity(6, 3.0, 5e-6, 6.0)
        spec = EnergySpec(terms=[QUAD])
        cfg = FlowConfig(dt=1e-3, steps=50, sample_count=500, seed=33)
        r1 = run_flow(p, spec, gaussian_ref, cfg)
        r2 = run_flow(p, spec, gaussian_ref, cfg)
        assert np.array_equal(r1.final_params.weights, r2.final_params.weights)
        assert np.array_equal(r1.final_params.biases, r2.final_params.biases)
        assert np.array_equal(r1.energy_history, r2.energy_history)

    def test_quadratic_flow_preserves_affinity(self, gaussian_ref):
        # The linear oracle map means the learned map must stay affine;
        # the fit window covers the well-sampled bulk of the reference.
        p = init_identity(128, 4.0, 1e-6, 128.0)
        spec = EnergySpec(terms=[QUAD])
        cfg = FlowConfig(
            dt=1e-3, steps=1000, param_subset=ParamSubset.A_ONLY,
            sample_count=20_000, seed=5, pinv_rel_tol=1e-10,
        )
        rec = run_flow(p, spec, gaussian_ref, cfg)
        z = np.linspace(-2, 2, 20001)
        f = forward(rec.final_params, z)
        A = np.vstack((z, np.ones_like(z))).T
        coef = np.linalg.lstsq(A, f, rcond=None)[0]
        assert np.max(np.abs(f - A @ coef)) < 1e-8
        assert coef[0] == pytest.approx((1 - 1e-3) ** 1000, abs=1e-4)

    def test_quartic_energy_dissipates(self, gaussian_ref):
        p = init_identity(16, 4.0, 5e-6, 16.0)
        spec = EnergySpec(terms=[QUARTIC])
        cfg = FlowConfig(dt=1e-4, steps=300, sample_count=2000, seed=8,
                         pinv_rel_tol=1e-6)
        rec = run_flow(p, spec, gaussian_ref, cfg)
        increases = np.flatnonzero(np.diff(rec.energy_history) > 0)
        assert len(increases) <= 3
        z = np.sort(gaussian_ref.sampler(2000, np.random.default_rng(8)))
        for k in increases:
            se = np.std(QUARTIC.V(forward(rec.theta_snapshots[0][1], z)))
            se /= np.sqrt(len(z))
            assert rec.energy_history[k + 1] - rec.energy_history[k] <= 3 * se

    def test_analytic_gaussian_needs_gaussian(self):
        from wgf.oracles import barenblatt_reference

        p = one_sided(np.ones(4), np.linspace(-1, 1, 4))
        spec = EnergySpec(terms=[QUAD])
        cfg = FlowConfig(
            dt=1e-3, steps=1, metric_mode=MetricMode.ANALYTIC_GAUSSIAN,
            sample_count=100, seed=0,
        )
        from wgf.errors import NumericError

        with pytest.raises(NumericError):
            run_flow(p, spec, barenblatt_reference(1.0), cfg)

    def test_analytic_matches_empirical_direction_large_m(self, gaussian_ref):
        # With many samples one empirical step approaches the closed-form
        # metric step on a one-sided model.
        p = one_sided([0.9, 1.2, 0.8], [-1.0, 0.1, 1.3])
        spec = EnergySpec(terms=[QUAD])
        kw = dict(dt=1e-2, steps=1, sample_count=400_000, seed=4,
                  param_subset=ParamSubset.BOTH, pinv_rel_tol=1e-9)
        r_emp = run_flow(p, spec, gaussian_ref,
                         FlowConfig(metric_mode=MetricMode.EMPIRICAL, **kw))
        r_ana = run_flow(p, spec, gaussian_ref,
                         FlowConfig(metric_mode=MetricMode.ANALYTIC_GAUSSIAN, **kw))
        np.testing.assert_allclose(
            r_emp.final_params.biases, r_ana.final_params.biases, atol=5e-3
        )


def segment_quad_average(ref, g, lo_u, hi_u, inner_edges):
    total = 0.0
    edges = np.concatenate(([lo_u], inner_edges, [hi_u]))
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        val, _ = integrate.quad(
            lambda u: g(float(ref.inverse_cdf(u))), a, b,
            epsabs=1e-13, epsrel=1e-11, limit=300,
        )
        total += val
    return total / (hi_u - lo_u)


class TestPotentialFlow:
    def test_constant_potential_is_stationary(self, gaussian_ref):
        p = one_sided(np.ones(5), np.linspace(-2, 2, 5))
        rhs = potential_flow_rhs(p, lambda x: 0.0 * x, gaussian_ref)
        np.testing.assert_allclose(rhs, 0.0, atol=1e-12)

    def test_interior_trapezoid_values(self, gaussian_ref):
        p = one_sided(np.ones(6), np.linspace(-1.5, 1.5, 6))
        rhs = potential_flow_rhs(p, lambda x: x, gaussian_ref)
        fb = forward(p, p.biases)
        np.testing.assert_allclose(rhs[1:-1], (fb[2:] - fb[:-2]) / 2.0, atol=1e-12)
        np.testing.assert_allclose(rhs[0], (fb[0] + fb[1]) / 2.0, atol=1e-12)

    def test_pipeline_equivalence(self, gaussian_ref, rng):
        # Closed-form inverse times the exact gradient, with the descent
        # sign, reproduces the integral-form node velocities.
        b = np.sort(rng.normal(size=7)) * 1.2
        while np.min(np.diff(b)) < 0.05:
            b = np.sort(rng.normal(size=7)) * 1.2
        a = np.exp(rng.normal(size=7) * 0.3)
        p = one_sided(a, b)
        dV = lambda x: x - 0.3
        rhs = potential_flow_rhs(p, dV, gaussian_ref, quadrature=True)
        pw = p.piecewise()
        edges = np.asarray(gaussian_ref.cdf(b), dtype=float)

        def grad_b(j):
            inner = edges[edges > edges[j]]
            avg = segment_quad_average(
                gaussian_ref,
                lambda z: dV(float(pw.value(np.array([z]))[0])),
                edges[j], 1.0 - 1e-15, inner,
            )
            return -a[j] * avg * (1.0 - 1e-15 - edges[j])

        g = np.array([grad_b(j) for j in range(7)])
        T = analytic_inverse_bb(p, gaussian_ref)
        np.testing.assert_allclose(rhs, -T.matvec(g), atol=1e-8)

    def test_map_velocity_segment_identity(self, gaussian_ref, rng):
        p = one_sided(np.exp(rng.normal(size=6) * 0.2), np.sort(rng.normal(size=6)) * 1.5)
        dV = lambda x: x
        rhs = potential_flow_rhs(p, dV, gaussian_ref)
        knots, vel = map_velocity(p, rhs)
        fb = forward(p, knots)
        for k in range(1, len(knots) - 1):
            expect = -(dV(fb[k + 1]) + dV(fb[k])) / 2.0
            assert vel[k + 1] == pytest.approx(expect, abs=1e-10)

    def test_velocity_consistency_refinement(self, gaussian_ref):
        # Sup deviation of the induced map velocity from the transport
        # velocity shrinks at first order in the node spacing.
        sups = []
        Ns = [8, 16, 32, 64]
        for n in Ns:
            p = one_sided(np.full(n, 2.0 / n), np.linspace(-3, 3, n))
            rhs = potential_flow_rhs(p, lambda x: x, gaussian_ref)
            knots, vel = map_velocity(p, rhs)
            z = np.linspace(-3, 3 - 1e-9, 4001)
            idx = np.searchsorted(knots, z, side="right")
            sups.append(np.max(np.abs(vel[idx] + forward(p, z))))
        slope = np.polyfit(np.log2(Ns), np.log2(sups), 1)[0]
        assert slope <= -0.8

    def test_zero_velocity(self, gaussian_ref):
        p = one_sided(np.ones(4), np.linspace(-1, 1, 4))
        knots, vel = map_velocity(p, np.zeros(4))
        np.testing.assert_array_equal(vel, 0.0)


class TestHeatFlow:
    def test_pipeline_equivalence(self, gaussian_ref, rng):
        b = np.sort(rng.normal(size=8))
        while np.min(np.diff(b)) < 0.05:
            b = np.sort(rng.normal(size=8))
        p = one_sided(np.exp(rng.normal(size=8) * 0.3), b)
        rhs = heat_flow_rhs(p, gaussian_ref)
        D = entropy_bias_gradient(p, gaussian_ref)
        T = analytic_inverse_bb(p, gaussian_ref)
        np.testing.assert_allclose(rhs, -T.matvec(D), atol=1e-10)

    def test_interior_entropy_gradient_matches_probe_formula(self, gaussian_ref, rng):
        n = 6
        a = np.exp(rng.normal(size=n) * 0.2)
        b = np.sort(rng.normal(size=n))
        while np.min(np.diff(b)) < 0.05:
            b = np.sort(rng.normal(size=n))
        eta = 1e-13
        guarded = NetworkParams(
            weights=np.concatenate((a, [-eta])),
            biases=np.concatenate((b, [10.0])),
            n_forward=n,
        )
        g = grad_internal(
            guarded, entropy_term(), rng.uniform(b[0] + 0.1, 3.0, 32),
            gaussian_ref, 1e-3,
        )
        D = entropy_bias_gradient(one_sided(a, b), gaussian_ref)
        np.testing.assert_allclose(g[n + 2: 2 * n + 1], D[1:], atol=1e-12)

    def test_pinched_pair_repulsion(self, gaussian_ref):
        n = 8
        b = np.linspace(-1.5, 1.5, n)
        i = 4
        b[i] = b[i - 1] + 1e-3
        p = one_sided(np.ones(n), np.sort(b))
        rhs = heat_flow_rhs(p, gaussian_ref)
        assert rhs[i] - rhs[i - 1] > 0.0

    def test_mesh_order_preserved_along_integration(self, gaussian_ref):
        from scipy.special import ndtri

        n = 32
        a = np.ones(n)
        a[0] = 3.0
        b = ndtri(np.linspace(0.3, 0.97, n))
        min_gap = np.inf
        for _ in range(1000):
            rhs = heat_flow_rhs(one_sided(a, b), gaussian_ref)
            b = b + 1e-4 * rhs
            gaps = np.diff(b)
            assert np.all(gaps > 0.0)
            min_gap = min(min_gap, gaps.min())
        assert min_gap > 0.0

    def test_cdf_gap_error(self, gaussian_ref):
        p = one_sided([1.0, 1.0], [8.7, 8.9])
        with pytest.raises(CdfGapError):
            heat_flow_rhs(p, gaussian_ref)

    def test_symmetric_model_velocity_antisymmetry(self, gaussian_ref, rng):
        # A mirror-symmetric two-sided model under symmetrized samples
        # must produce mirror-antisymmetric node velocities.
        a = np.array([0.8, 1.1, 0.6])
        bf = np.array([-0.5, 0.4, 1.3])
        p = NetworkParams(
            weights=np.concatenate((a, -a)),
            biases=np.concatenate((bf, -bf)),
            n_forward=3,
        )
        half = rng.normal(size=4000)
        z = np.concatenate((half, -half))
        D = grad_internal(p, entropy_term(), z, gaussian_ref, 1e-3)[p.dim // 2:]
        G = empirical_metric(p, z, ParamSubset.B_ONLY)
        v = -pinv_solve(G, D, 1e-10)
        np.testing.assert_allclose(v[:3], -v[3:], atol=1e-9)
