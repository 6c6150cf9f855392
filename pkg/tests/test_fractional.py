import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from fbmavg.exceptions import AdmissibilityError, DomainError
from fbmavg.fbm import TimeGrid, sample_circulant
from fbmavg.fractional import (
    ExponentTriple,
    _left_weyl_cells,
    _left_weyl_pl,
    beta_kernel_integral,
    beta_kernel_quadrature,
    check_admissible,
    rs_sum,
    weyl_left,
    weyl_right_adjusted,
    young_bound_check,
    zahle_integral,
)
from fbmavg.metrics import SamplePath

TRIPLE = ExponentTriple(alpha=0.35, gamma=0.55, beta=0.65)


def path(fn, n=256, t_end=1.0):
    return SamplePath.from_function(fn, t_end, n)


def fbm(n, seed, n_paths=1, h=0.7):
    batch = sample_circulant(TimeGrid(1.0, n), h, n_paths, seed)
    paths = [SamplePath(batch.grid, r) for r in batch.paths]
    return paths if n_paths > 1 else paths[0]


def right_oracle(g, dg, b, alpha, t):
    """Defining integral of the phase-free right derivative, by QUADPACK."""

    def quotient(s):
        return -dg(t) if s == t else (g(t) - g(s)) / (s - t)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        inner, _ = integrate.quad(quotient, t, b, weight="alg", wvar=(alpha - 1, 0.0),
                                  epsabs=1e-13, epsrel=1e-12, limit=200)
    return ((g(t) - g(b)) / (b - t) ** (1 - alpha) + (1 - alpha) * inner) / special.gamma(alpha)


class TestExponentTriple:
    def test_default_is_admissible(self):
        assert ExponentTriple() == TRIPLE

    @pytest.mark.parametrize("args", [(0.6, 0.55, 0.65), (0.35, 0.55, 0.5),
                                      (0.35, 0.3, 0.65), (0.0, 0.5, 0.9), (0.35, 0.55, 1.0)])
    def test_rejects(self, args):
        with pytest.raises(AdmissibilityError):
            ExponentTriple(*args)


class TestWeylLeft:
    @pytest.mark.parametrize("c", [0.0, 1.0, -2.5])
    def test_constant(self, c):
        f = path(lambda t: c + 0 * t)
        for t in (0.1, 0.5, 1.0):
            assert weyl_left(f, 0.0, 0.3, t) == pytest.approx(
                c * t**-0.3 / special.gamma(0.7), rel=1e-13, abs=1e-15)

    def test_identity_power(self):
        f = path(lambda t: t)
        assert weyl_left(f, 0.0, 0.3, 1.0) == pytest.approx(1 / special.gamma(1.7), rel=1e-12)

    def test_shifted_lower_limit(self):
        # f(s) = s - a is linear, so the interpolant is exact
        f = path(lambda t: t - 0.25)
        assert weyl_left(f, 0.25, 0.3, 0.75) == pytest.approx(
            0.5**0.7 / special.gamma(1.7), rel=1e-12)

    def test_square_converges_to_power_formula(self):
        exact = 2 / special.gamma(2.7) * 0.8**1.7
        err = [abs(weyl_left(path(lambda t: t**2, n), 0.0, 0.3, 0.8) - exact) for n in (256, 1024)]
        assert err[1] < err[0]
        assert err[1] < 1e-5

    def test_vectorized_matches_scalar(self):
        f = fbm(256, 1)
        ts = np.array([0.013, 0.3, 0.77, 1.0])
        vec = weyl_left(f, 0.0, 0.35, ts)
        assert np.allclose(vec, [weyl_left(f, 0.0, 0.35, t) for t in ts], rtol=1e-14, atol=0)

    def test_lattice_matches_direct(self):
        f = fbm(300, 2)
        offsets = np.array([0.1, 0.5, 0.93])
        lattice = _left_weyl_cells(f.values, f.grid.dt, 0.35, offsets)
        tau = (np.arange(300)[:, None] + offsets) * f.grid.dt
        direct = _left_weyl_pl(f.values, f.grid.dt, 0.35, tau.ravel()).reshape(tau.shape)
        assert np.max(np.abs(lattice - direct)) < 1e-11 * max(1.0, np.max(np.abs(direct)))

    @given(seed=st.integers(0, 1000), t=st.floats(0.01, 1.0), alpha=st.floats(0.05, 0.95))
    @settings(max_examples=30, deadline=None)
    def test_linearity(self, seed, t, alpha):
        f, g = fbm(128, seed, 2)
        lhs = weyl_left(f + g, 0.0, alpha, t)
        rhs = weyl_left(f, 0.0, alpha, t) + weyl_left(g, 0.0, alpha, t)
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))

    def test_domain(self):
        f = path(lambda t: t)
        with pytest.raises(DomainError):
            weyl_left(f, 0.5, 0.3, 0.5)
        with pytest.raises(DomainError):
            weyl_left(f, 0.0, 1.2, 0.5)
        with pytest.raises(DomainError):
            weyl_left(f, 0.001, 0.3, 0.5)


class TestWeylRight:
    def test_constant_is_zero(self):
        assert weyl_right_adjusted(path(lambda t: 3 + 0 * t), 1.0, 0.4, 0.2) == 0.0

    def test_identity_closed_form(self):
        g = path(lambda t: t)
        for t in (0.0, 0.3, 0.9):
            expected = -(1 - t) ** 0.4 / special.gamma(1.4)
            assert weyl_right_adjusted(g, 1.0, 0.4, t) == pytest.approx(expected, rel=1e-12)

    def test_identity_matches_quadrature(self):
        g = path(lambda t: t)
        oracle = right_oracle(lambda s: s, lambda s: 1.0, 1.0, 0.4, 0.3)
        assert weyl_right_adjusted(g, 1.0, 0.4, 0.3) == pytest.approx(oracle, rel=1e-10)

    def test_smooth_matches_quadrature(self):
        oracle = right_oracle(lambda s: math.sin(3 * s), lambda s: 3 * math.cos(3 * s),
                              1.0, 0.4, 0.3)
        value = weyl_right_adjusted(path(lambda t: np.sin(3 * t), 4096), 1.0, 0.4, 0.3)
        assert abs(value - oracle) < 2e-5

    @given(c=st.floats(-50, 50), seed=st.integers(0, 100))
    @settings(max_examples=20, deadline=None)
    def test_scaling(self, c, seed):
        g = fbm(128, seed)
        assert weyl_right_adjusted(c * g, 1.0, 0.35, 0.4) == pytest.approx(
            c * weyl_right_adjusted(g, 1.0, 0.35, 0.4), rel=1e-12, abs=1e-12)

    def test_domain(self):
        g = path(lambda t: t)
        with pytest.raises(DomainError):
            weyl_right_adjusted(g, 0.5, 0.4, 0.5)
        with pytest.raises(DomainError):
            weyl_right_adjusted(g, 0.5001, 0.4, 0.1)


class TestZahle:
    def test_constant_integrand_telescopes(self):
        g = path(lambda t: t**2, 2048)
        one = path(lambda t: 1 + 0 * t, 2048)
        assert zahle_integral(one, g, 0.4) == pytest.approx(1.0, abs=1e-7)

    def test_constant_integrand_rough_g(self):
        g = fbm(2048, 3)
        one = path(lambda t: 1 + 0 * t, 2048)
        assert abs(zahle_integral(one, g, 0.35) - g.values[-1]) < 1e-5

    @pytest.mark.parametrize("alpha", [0.25, 0.4, 0.55])
    def test_t_against_t_squared(self, alpha):
        f, g = path(lambda t: t, 2048), path(lambda t: t**2, 2048)
        assert abs(zahle_integral(f, g, alpha) - 2 / 3) < 1e-4

    @pytest.mark.parametrize("pair", [(lambda t: t, lambda t: t**2),
                                      (lambda t: 1 - t + t**3, lambda t: 2 * t**2 - t)])
    def test_alpha_independence(self, pair):
        f, g = path(pair[0], 2048), path(pair[1], 2048)
        vals = [zahle_integral(f, g, a) for a in (0.25, 0.4, 0.55)]
        assert max(vals) - min(vals) < 1e-6

    def test_chain_rule_on_fbm(self):
        # the interpolant is absolutely continuous, so int f df = f(1)^2 / 2
        f = fbm(2048, 5)
        assert abs(zahle_integral(f, f, 0.35) - 0.5 * f.values[-1] ** 2) < 1e-4

    def test_additivity_smooth(self):
        f, g = path(np.cos, 4096), path(lambda t: t**3, 4096)
        whole = zahle_integral(f, g, 0.4, 0.0, 1.0)
        parts = zahle_integral(f, g, 0.4, 0.0, 0.5) + zahle_integral(f, g, 0.4, 0.5, 1.0)
        assert abs(whole - parts) < 1e-8

    def test_additivity_rough(self):
        f, g = fbm(2048, 11, 2)
        whole = zahle_integral(f, g, 0.35, 0.0, 1.0, check=False)
        parts = (zahle_integral(f, g, 0.35, 0.0, 0.5, check=False)
                 + zahle_integral(f, g, 0.35, 0.5, 1.0, check=False))
        band = abs(rs_sum(f, g) - rs_sum(*(SamplePath(TimeGrid(1.0, 1024), p.values[::2])
                                            for p in (f, g))))
        assert abs(whole - parts) < band

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_rs_within_richardson_band(self, seed):
        # left-point sums converge like n^(1 - 2H); rho is the per-doubling ratio
        fine = fbm(2048, seed)
        coarse = SamplePath(TimeGrid(1.0, 1024), fine.values[::2])
        rs_n, rs_2n = rs_sum(coarse, coarse), rs_sum(fine, fine)
        rho = 2.0 ** (1 - 2 * 0.7)
        band = 3 * abs(rs_n - rs_2n) * rho / (1 - rho)
        assert abs(zahle_integral(fine, fine, 0.35) - rs_2n) < band

    def test_matches_rs_for_smooth_pair(self):
        f, g = path(np.cos, 2048), path(lambda t: t**3, 2048)
        ref = integrate.quad(lambda t: math.cos(t) * 3 * t**2, 0, 1)[0]
        assert abs(zahle_integral(f, g, 0.4) - ref) < 1e-6
        assert abs(rs_sum(f, g) - ref) < 2e-3

    def test_inadmissible_names_inequality(self):
        f = path(lambda t: t, 512)
        with pytest.raises(AdmissibilityError, match="beta_g"):
            zahle_integral(f, f, 0.4, f_exponent=0.9, g_exponent=0.5)
        with pytest.raises(AdmissibilityError, match="gamma_f=0.3 > alpha"):
            zahle_integral(f, f, 0.4, f_exponent=0.3, g_exponent=0.9)

    def test_rough_pair_rejected(self):
        # H = 0.3 paths violate beta_g > 1 - alpha by a wide margin
        f, g = fbm(1024, 2, 2, h=0.3)
        with pytest.raises(AdmissibilityError):
            zahle_integral(f, g, 0.35)

    def test_check_admissible(self):
        check_admissible(0.35, 0.55, 0.7)
        # the sum condition only fails on its own once the others are relaxed
        with pytest.raises(AdmissibilityError, match=r"failed: gamma_f \+ beta_g=0.9 > 1$"):
            check_admissible(0.35, 0.3, 0.6, tol=0.1)


class TestRsSum:
    def test_telescopes_exactly(self):
        g = fbm(512, 4)
        assert rs_sum(path(lambda t: 1 + 0 * t, 512), g) == pytest.approx(g.values[-1], abs=1e-14)

    def test_classical(self):
        f, g = path(lambda t: t, 1024), path(lambda t: t**2, 1024)
        assert abs(rs_sum(f, g) - 2 / 3) < 1 / 1024

    def test_refinement_decreases(self):
        base = fbm(4096, 8)
        sums = []
        for step in (16, 8, 4, 2, 1):
            p = SamplePath(TimeGrid(1.0, 4096 // step), base.values[::step])
            sums.append(rs_sum(p, p))
        gaps = np.abs(np.diff(sums))
        assert gaps[-1] < gaps[0]


class TestBetaKernel:
    def test_pi(self):
        assert beta_kernel_integral(0.0, 1.0, 0.5, 0.5) == pytest.approx(math.pi, rel=1e-15)

    def test_derived_example(self):
        expected = 2**0.3 * special.beta(0.7, 0.6)
        assert beta_kernel_integral(0.0, 2.0, 0.3, 0.4) == pytest.approx(expected, rel=1e-14)
        assert abs(beta_kernel_quadrature(0.0, 2.0, 0.3, 0.4) - expected) < 1e-8

    def test_zero_exponents(self):
        assert beta_kernel_integral(1.0, 3.5, 0.0, 0.0) == pytest.approx(2.5, rel=1e-15)

    def test_grid_against_quadrature(self):
        levels = np.linspace(0.1, 0.9, 5)
        for a in levels:
            for d in levels:
                closed = beta_kernel_integral(0.0, 1.0, a, d)
                assert abs(beta_kernel_quadrature(0.0, 1.0, a, d) - closed) < 1e-8

    @pytest.mark.parametrize("args", [(0, 1, 1.0, 0.5), (0, 1, -0.1, 0.5), (1, 1, 0.3, 0.3)])
    def test_domain(self, args):
        with pytest.raises(DomainError):
            beta_kernel_integral(*args)


class TestYoungBound:
    def test_zero_integrand(self):
        g = fbm(256, 1)
        out = young_bound_check(path(lambda t: 0 * t), g, TRIPLE, 0.0, 1.0)
        assert out.ratio == 0.0 and out.lhs == 0.0

    @pytest.mark.parametrize("seed", range(4))
    def test_constant_integrand_ratio_at_most_one(self, seed):
        g = fbm(256, seed)
        out = young_bound_check(path(lambda t: 1 + 0 * t), g, TRIPLE, 0.25, 0.75)
        # f = 1 has Hölder norm 1; lhs = |g(t) - g(s)| up to quadrature error
        assert out.ratio <= 1 + 1e-6

    def test_vanishing_rhs_with_nonzero_lhs(self, monkeypatch):
        import fbmavg.fractional as frac

        monkeypatch.setattr(frac, "holder_norm", lambda *a, **k: 0.0)
        g = fbm(64, 0)
        with pytest.raises(ArithmeticError):
            frac.young_bound_check(path(lambda t: 1 + 0 * t, 64), g, TRIPLE, 0.0, 1.0)

    def test_ratio_stable_under_refinement(self):
        # same paths and subintervals at both resolutions; the coarse grid is a subsample
        ends = np.sort(np.random.default_rng(0).integers(0, 257, size=(20, 2)), axis=1)
        ends = ends[ends[:, 0] < ends[:, 1]] / 256
        pairs = [fbm(512, 100 + k, 2) for k in range(len(ends))]
        worst = []
        for step in (2, 1):
            grid = TimeGrid(1.0, 512 // step)
            ratios = [young_bound_check(SamplePath(grid, f.values[::step]),
                                        SamplePath(grid, g.values[::step]), TRIPLE, s, t).ratio
                      for (f, g), (s, t) in zip(pairs, ends)]
            assert np.all(np.isfinite(ratios))
            worst.append(max(ratios))
        assert abs(worst[1] - worst[0]) / worst[0] < 0.25
