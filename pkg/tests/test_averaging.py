import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from fbmavg.averaging import (
    AveragingStudy,
    PhiProbes,
    convergence_study,
    khasminskii_block_diagnostic,
    l2_path_norm,
    numeric_average_drift,
    phi_estimate,
)
from fbmavg.exceptions import DomainError
from fbmavg.fbm import TimeGrid, sample_fbm
from fbmavg.models import get_model
from fbmavg.solver import (
    DiffusionModel,
    DriftModel,
    ParticleTrajectories,
    ProbeSpec,
    SolverConfig,
    solve_oscillatory,
    validate_assumptions,
)

BENCH = get_model("benchmark")
TANH = get_model("tanh")
MUS = ProbeSpec().measures()
XS = np.linspace(-4, 4, 17)
ZERO_SIGMA = DiffusionModel(lambda x: np.zeros(np.shape(x)), lambda x: np.zeros(np.shape(x)),
                            K_sigma=0.0, M_sigma=0.0, L_sigma=0.0, M_sigma_prime=0.0)


def bench_without_average():
    return DriftModel(BENCH.drift.func, M_b=2.25, L_b=1.5, L_b_prime=0.75)


class TestNumericAverage:
    def test_time_free_exact(self):
        b = DriftModel(lambda t, x, mu: np.tanh(x) + 0 * t, M_b=1, L_b=1, time_dependent=False)
        avg = numeric_average_drift(b).averaged
        assert np.array_equal(avg(XS, MUS[0]), np.tanh(XS))

    def test_sine_averages_out(self):
        b = DriftModel(lambda t, x, mu: np.sin(t) * np.cos(x), M_b=1, L_b=1)
        avg = numeric_average_drift(b, T_avg=200 * math.pi).averaged
        assert np.all(np.abs(avg(XS, MUS[0])) <= 1e-3 * np.abs(np.cos(XS)) + 1e-15)

    @pytest.mark.parametrize("T_avg", [1e2, 1e3])
    def test_benchmark_within_one_over_T(self, T_avg):
        avg = numeric_average_drift(bench_without_average(), T_avg=T_avg).averaged
        for mu in MUS:
            err = np.max(np.abs(avg(XS, mu) - BENCH.drift.averaged(XS, mu)))
            # |(1/T) int_0^T sin / 2| <= 1/T, times |bbar| <= 1.5
            assert err <= 1.5 / T_avg

    def test_average_inherits_bounds(self):
        b = numeric_average_drift(bench_without_average(), T_avg=100.0)
        report = validate_assumptions(b, BENCH.diffusion)
        assert report.passed, report.violations
        assert report.estimates["L_bbar"] <= b.L_bbar * 1.01
        curve = phi_estimate(b, b.averaged, [100.0])
        bound = b.M_b + curve.phi_estimates.max() * (1 + 4 + max(mu.m2 for mu in MUS))
        assert report.estimates["bbar_bound"] <= bound

    def test_domain(self):
        with pytest.raises(DomainError):
            numeric_average_drift(BENCH.drift, T_avg=0.0)
        with pytest.raises(DomainError):
            numeric_average_drift(BENCH.drift, T_avg=10.0, m_nodes=8)


class TestPhi:
    def test_time_free_is_zero(self):
        curve = phi_estimate(TANH.drift, TANH.drift.averaged, [1.0, 10.0, 100.0])
        assert np.all(curve.phi_estimates == 0.0)

    def test_sine_bound(self):
        b = DriftModel(lambda t, x, mu: np.sin(t) * np.cos(x) * np.tanh(mu.mean() + 1), M_b=1,
                       L_b=2)
        T = np.array([1.0, 3.0, 10.0, 30.0, 100.0])
        curve = phi_estimate(b, lambda x, mu: 0 * x, T)
        assert np.all(curve.phi_estimates <= 2 / T)
        assert np.all(curve.phi_estimates >= 0)

    def test_benchmark_decade_drop(self):
        curve = phi_estimate(BENCH.drift, BENCH.drift.averaged, [10.0, 100.0, 1000.0])
        assert np.all(curve.phi_estimates[1:] < curve.phi_estimates[:-1])
        assert np.all(curve.phi_envelope[:-1] / curve.phi_envelope[1:] >= 5)
        assert curve.ordering_holds

    def test_benchmark_envelope_slope(self):
        curve = phi_estimate(BENCH.drift, BENCH.drift.averaged, np.geomspace(10, 1000, 11))
        assert abs(curve.slope(envelope=True) + 1) < 0.1
        assert np.all(np.diff(curve.phi_envelope) <= 0)
        assert np.all(curve.phi_envelope >= curve.phi_estimates)

    def test_benchmark_matches_antiderivative(self):
        # window average of sin(t)/2 from t0 is (cos t0 - cos(t0 + T)) / (2T), times c(x, mu)
        probes = PhiProbes()
        T = 10.0
        curve = phi_estimate(BENCH.drift, BENCH.drift.averaged, [T], probes)
        best = 0.0
        for mu in probes.measures():
            xs = np.asarray(probes.xs)
            c = np.abs(-np.tanh(xs) + 0.5 * np.tanh(mu.mean())) / (1 + np.abs(xs) + mu.m2)
            for t0 in probes.starts:
                best = max(best, np.max(c) * abs(math.cos(t0) - math.cos(t0 + T)) / (2 * T))
        assert curve.phi_estimates[0] == pytest.approx(best, rel=1e-3)

    @given(T=st.floats(0.5, 50.0))
    @settings(max_examples=15, deadline=None)
    def test_ordering_always_holds(self, T):
        probes = PhiProbes(starts=(0.0, 1.3), xs=(-1.0, 0.5), n_measures=2)
        curve = phi_estimate(BENCH.drift, BENCH.drift.averaged, [T], probes)
        assert curve.ordering_holds
        assert curve.phi_estimates[0] <= curve.abs_estimates[0]

    def test_probe_metadata(self):
        curve = phi_estimate(BENCH.drift, BENCH.drift.averaged, [10.0])
        assert curve.probes["n_measures"] == 5
        assert "lower-bound" in curve.note

    def test_rejects_nonpositive_window(self):
        with pytest.raises(DomainError):
            phi_estimate(BENCH.drift, BENCH.drift.averaged, [0.0])


class TestConvergence:
    def test_time_independent_zero(self):
        cfg = SolverConfig(n_particles=32, n_steps=64)
        report = convergence_study(cfg, TANH.drift, TANH.diffusion, [1.0, 0.01], 3)
        assert np.all(report.raw == 0.0)
        assert np.all(report.endpoint_mse == 0.0)

    def test_degenerate_ode_case(self):
        cfg = SolverConfig(x0=1.0, n_particles=16, n_steps=256)
        report = convergence_study(cfg, BENCH.drift, ZERO_SIGMA, [1.0, 0.1, 0.01, 0.001], 2)
        assert report.mean("err_sup_sq")[-1] < 1e-4
        assert report.mean("err_holder_sq")[-1] < 1e-4

    def test_degenerate_ode_against_reference(self):
        # sigma = 0 and x0 identical for all particles: one ODE, solved by solve_ivp
        eps = 0.1
        cfg = SolverConfig(x0=1.0, n_particles=4, n_steps=2048, epsilon=eps)
        out = solve_oscillatory(cfg, BENCH.drift, ZERO_SIGMA, np.zeros((4, 2049)))

        def rhs(t, x):
            return (1 + 0.5 * math.sin(t / eps)) * (-math.tanh(x[0]) + 0.5 * math.tanh(x[0]))

        ref = integrate.solve_ivp(rhs, (0, 1), [1.0], t_eval=cfg.grid.nodes, rtol=1e-10,
                                  atol=1e-12, max_step=eps / 20).y[0]
        assert np.max(np.abs(out.paths[0] - ref)) < 5e-4

    def test_benchmark_small_scale_decreasing(self):
        cfg = SolverConfig(n_particles=64, n_steps=128, seed=3)
        report = convergence_study(cfg, BENCH.drift, BENCH.diffusion, [1.0, 0.1, 0.01], 8)
        for metric in ("err_sup_sq", "err_holder_sq"):
            assert np.all(report.decrease_margins(metric) > 0), metric
        rows = report.rows()
        assert [r["epsilon"] for r in rows] == [1.0, 0.1, 0.01]
        assert set(rows[0]) >= {"err_sup_sq_mean", "err_holder_sq_se", "err_lambda_sq_mean"}

    def test_coupling_consistency(self):
        cfg = SolverConfig(n_particles=64, n_steps=64, seed=1)
        report = convergence_study(cfg, BENCH.drift, BENCH.diffusion, [1.0, 0.1], 4)
        assert np.all(report.endpoint_w2_sq <= report.endpoint_mse * (1 + 1e-12))

    def test_replicates_independent_and_reproducible(self):
        cfg = SolverConfig(n_particles=16, n_steps=32, seed=5)
        a = convergence_study(cfg, BENCH.drift, BENCH.diffusion, [1.0, 0.1], 3)
        b = convergence_study(cfg, BENCH.drift, BENCH.diffusion, [1.0, 0.1], 3)
        assert np.array_equal(a.raw, b.raw)
        assert len(set(a.replicate_seeds)) == 3
        assert a.stderr("err_sup_sq").shape == (2,)

    def test_thread_count_does_not_change_results(self, monkeypatch):
        cfg = SolverConfig(n_particles=16, n_steps=32, seed=5)
        runs = []
        for threads in ("1", "4"):
            monkeypatch.setenv("FBMAVG_THREADS", threads)
            runs.append(convergence_study(cfg, BENCH.drift, BENCH.diffusion, [1.0, 0.1], 5).raw)
        assert np.array_equal(*runs)

    @pytest.mark.parametrize("grid", [[0.1, 1.0], [1.0, 1.0], [1.0, -0.1], []])
    def test_rejects_bad_grid(self, grid):
        with pytest.raises(DomainError):
            convergence_study(SolverConfig(n_particles=4, n_steps=8), BENCH.drift,
                              BENCH.diffusion, grid, 2)

    def test_needs_average(self):
        with pytest.raises(DomainError):
            convergence_study(SolverConfig(n_particles=4, n_steps=8), bench_without_average(),
                              BENCH.diffusion, [1.0], 2)

    def test_estimator(self):
        est = AveragingStudy(drift=BENCH.drift, diffusion=BENCH.diffusion, n_particles=8,
                             n_steps=16, epsilons=(1.0, 0.1), n_replicates=2)
        assert est.get_params()["n_replicates"] == 2
        assert est.fit().report_.raw.shape == (2, 2, 3)


def trajectories(paths, t_end=1.0):
    paths = np.asarray(paths, dtype=float)
    return ParticleTrajectories(TimeGrid(t_end, paths.shape[1] - 1), paths)


class TestBlockDiagnostic:
    def test_one_step_matches_direct_moment(self):
        traj = trajectories(sample_fbm(TimeGrid(1.0, 64), 0.7, 200, 0).paths)
        out = khasminskii_block_diagnostic(traj, 1 / 64, 0.65)
        direct = np.mean(np.diff(traj.paths, axis=1) ** 2, axis=0)
        assert out.max_moment == pytest.approx(direct.max(), rel=1e-14)
        assert out.ratio == pytest.approx(direct.max() / (1 / 64) ** 1.3, rel=1e-14)

    def test_stable_under_halving(self):
        noise = sample_fbm(TimeGrid(1.0, 512), 0.7, 500, 0)
        cfg = SolverConfig(n_particles=500, n_steps=512, epsilon=0.01)
        traj = solve_oscillatory(cfg, BENCH.drift, BENCH.diffusion, noise)
        ratios = [khasminskii_block_diagnostic(traj, k / 512, 0.65).ratio for k in (64, 32, 16, 8)]
        for a, b in zip(ratios, ratios[1:]):
            assert 0.25 <= b / a <= 4

    def test_fbm_moment_bounded(self):
        # for fBm the block moment at offset delta is delta^(2H); ratio delta^(2H - 2 beta)
        traj = trajectories(sample_fbm(TimeGrid(1.0, 256), 0.7, 4000, 1).paths)
        for k in (1, 4, 16, 64):
            d = k / 256
            out = khasminskii_block_diagnostic(traj, d, 0.65)
            assert out.ratio < 1.3 * d ** (2 * 0.7 - 2 * 0.65)

    def test_misaligned(self):
        traj = trajectories(np.zeros((2, 9)))
        with pytest.raises(DomainError):
            khasminskii_block_diagnostic(traj, 0.2, 0.65)


class TestL2Norm:
    def test_constant(self):
        assert l2_path_norm(trajectories(np.full((5, 9), -2.5))) == 2.5

    def test_matches_brute_force(self):
        B = sample_fbm(TimeGrid(1.0, 64), 0.7, 300, 2).paths
        brute = math.sqrt(sum(max(v * v for v in row) for row in B) / len(B))
        assert l2_path_norm(trajectories(B)) == pytest.approx(brute, rel=1e-13)

    def test_monotone_in_horizon(self):
        B = sample_fbm(TimeGrid(2.0, 128), 0.7, 50, 3).paths
        long = trajectories(B, 2.0)
        short = trajectories(B[:, :65], 1.0)
        assert l2_path_norm(short) <= l2_path_norm(long)
