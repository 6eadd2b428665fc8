import math

import numpy as np
import pytest

from potential_games.errors import ArgumentError, DomainError, PreconditionError
from potential_games.potential import (
    Potential,
    divided_difference,
    divided_difference_g,
    evaluate,
    exp_final,
    exp_mixture_final,
    gaussian_convolve,
    kolmogorov_residual,
    n_convexity_check,
    parse_final,
    parse_potential,
    partial_r,
    poly_final,
    strict_positivity_report,
    table_final,
)

EXP = Potential.exponential(1.0)
NH = Potential.normal_hedge()


class TestEvaluate:
    def test_exponential_origin(self):
        assert evaluate(EXP, 0.0, 0.0) == 1.0

    def test_normal_hedge_flat_branch(self):
        assert evaluate(NH, 0.0, -1.0) == pytest.approx(1.0, abs=1e-15)

    def test_normal_hedge_positive_branch(self):
        assert evaluate(NH, 0.0, 1.0) == pytest.approx(math.exp(0.5), rel=1e-14)

    def test_normal_hedge_continuous_at_zero(self):
        for t in (0.0, 1.0, 7.5):
            left = evaluate(NH, t, -1e-12)
            right = evaluate(NH, t, 1e-12)
            assert abs(left - right) < 1e-10

    def test_exponential_formula(self):
        for eta in (0.5, 2.0):
            p = Potential.exponential(eta)
            assert evaluate(p, 0.7, -0.3) == pytest.approx(
                math.exp(math.sqrt(2) * eta * -0.3 - eta**2 * 0.7), rel=1e-14)

    def test_vectorized(self):
        out = EXP.value(0.0, np.array([0.0, 1.0]))
        assert out.shape == (2,)

    def test_negative_time_rejected(self):
        with pytest.raises(DomainError):
            evaluate(EXP, -0.1, 0.0)

    def test_gaussian_final_outside_horizon(self):
        p = Potential.gaussian_final(exp_final(), 1.0)
        with pytest.raises(DomainError):
            p.value(1.5, 0.0)

    def test_gaussian_final_matches_exponential(self):
        # E exp(R + sqrt(1 - t) Z) = exp(R + (1 - t) / 2)
        p = Potential.gaussian_final(exp_final(), 1.0)
        assert p.value(0.25, 0.4) == pytest.approx(math.exp(0.4 + 0.375), rel=1e-12)
        assert p.value(1.0, 0.4) == pytest.approx(math.exp(0.4), rel=1e-15)


class TestDerivatives:
    def test_exp_first(self):
        assert partial_r(EXP, 0.0, 0.0, 1) == pytest.approx(math.sqrt(2), rel=1e-14)

    def test_nh_flat_branch(self):
        assert partial_r(NH, 0.0, -2.0, 1) == 0.0

    def test_exp_second(self):
        assert partial_r(EXP, 1.0, 0.0, 2) == pytest.approx(2 * math.exp(-1), rel=1e-14)

    @pytest.mark.parametrize("order", range(1, 7))
    def test_nh_analytic_matches_finite_difference(self, order):
        from potential_games.potential import central_difference

        R = 1.3
        fd = central_difference(lambda x: NH.value(0.5, x), R, order)
        an = partial_r(NH, 0.5, R, order)
        assert an == pytest.approx(fd, rel=5e-4)

    def test_nh_kink_is_domain_error(self):
        with pytest.raises(DomainError):
            partial_r(NH, 0.0, 0.0, 1)

    def test_nh_kink_right_limit(self):
        assert NH.derivative(0.0, 0.0, 1, kink="right") == 0.0
        assert NH.derivative(0.0, 0.0, 2, kink="right") == pytest.approx(1.0)

    def test_order_out_of_range(self):
        with pytest.raises(ArgumentError):
            partial_r(EXP, 0.0, 0.0, 7)

    def test_gaussian_final_derivative(self):
        p = Potential.gaussian_final(exp_final(), 2.0)
        assert partial_r(p, 0.5, 0.0, 2) == pytest.approx(math.exp(0.75), rel=1e-5)


class TestResidual:
    def test_exponential(self):
        assert abs(kolmogorov_residual(EXP, 2.0, 1.0)) < 1e-10

    def test_nh_positive(self):
        assert abs(kolmogorov_residual(NH, 0.0, 1.0)) < 1e-10

    def test_nh_negative_branch(self):
        assert kolmogorov_residual(NH, 0.0, -1.0) == pytest.approx(-0.5, abs=1e-12)

    def test_nh_kink(self):
        with pytest.raises(DomainError):
            kolmogorov_residual(NH, 1.0, 0.0)

    def test_gaussian_final_solves_heat_equation(self):
        p = Potential.gaussian_final(exp_mixture_final([0.5, 0.5], [0.5, 1.0]), 2.0)
        assert abs(kolmogorov_residual(p, 0.7, 0.2)) < 1e-5


class TestPositivity:
    def test_exp_passes(self):
        grid = np.arange(-3, 3.01, 0.5)
        rep = strict_positivity_report(lambda R: np.exp(R), 4, grid)
        assert rep.passed and rep.order_checked == 4

    def test_identity_fails(self):
        assert not strict_positivity_report(lambda R: np.asarray(R, float), 2, [-1, 0, 1]).passed

    def test_positive_combination(self):
        f = exp_mixture_final([0.5, 0.5], [1.0, 2.0])
        assert strict_positivity_report(f, 4, np.linspace(-2, 2, 9)).passed

    def test_potential_needs_time(self):
        with pytest.raises(ArgumentError):
            strict_positivity_report(EXP, 2, [0.0])
        assert strict_positivity_report(EXP, 4, [-1.0, 0.0, 1.0], t=0.5).passed

    def test_poly_final_gate(self):
        with pytest.raises(PreconditionError):
            poly_final([0.0, 1.0])
        f = poly_final([30.0, 10.0, 1.0])
        assert f(0.0) == 30.0

    def test_gaussian_final_gate(self):
        bad = exp_mixture_final([1.0], [1.0])
        Potential.gaussian_final(bad, 1.0)
        with pytest.raises(PreconditionError):
            Potential.gaussian_final(parse_final("polyfinal:coeffs=30;10;1"), 1.0,
                                     grid=np.linspace(-8, 8, 5))


class TestDividedDifferences:
    def test_exp_stencil(self):
        want = (2 * math.cosh(2) - 8 * math.cosh(1) + 6) / 24
        assert divided_difference_g(np.exp, 0.0, 1.0) == pytest.approx(want, rel=1e-13)

    @pytest.mark.parametrize("R", [-3.0, 0.0, 2.5])
    def test_cubic_annihilated(self, R):
        assert abs(divided_difference_g(lambda x: np.asarray(x) ** 3, R, 0.5)) < 1e-12

    def test_quartic(self):
        assert divided_difference_g(lambda x: np.asarray(x) ** 4, 0.0, 1.0) == pytest.approx(1.0)

    def test_bad_spacing(self):
        with pytest.raises(ArgumentError):
            divided_difference_g(np.exp, 0.0, 0.0)

    def test_n_convexity(self):
        assert n_convexity_check(np.exp, 4, (-2, -1, 0, 1, 2))
        assert n_convexity_check(lambda x: x * x, 2, (0.0, 0.3, 2.0))
        assert not n_convexity_check(lambda x: -x * x, 2, (0, 1, 2))

    def test_recursive_matches_stencil(self):
        dd = divided_difference(np.exp, [-2.0, -1.0, 0.0, 1.0, 2.0])
        assert dd == pytest.approx(divided_difference_g(np.exp, 0.0, 1.0), rel=1e-12)

    def test_points_must_increase(self):
        with pytest.raises(ArgumentError):
            n_convexity_check(np.exp, 2, (0, 0, 1))
        with pytest.raises(ArgumentError):
            n_convexity_check(np.exp, 2, (0, 1))


class TestGaussianConvolve:
    def test_zero_variance(self):
        assert gaussian_convolve(np.exp, 1.0, 1.0, 0.3) == pytest.approx(math.exp(0.3), rel=1e-15)

    def test_mgf(self):
        assert gaussian_convolve(np.exp, 1.0, 0.0, 0.0) == pytest.approx(math.exp(0.5), rel=1e-13)

    def test_second_moment(self):
        f = lambda R: np.asarray(R) ** 2 + 1  # noqa: E731
        assert gaussian_convolve(f, 2.0, 0.0, 0.0) == pytest.approx(3.0, rel=1e-13)

    def test_time_out_of_range(self):
        with pytest.raises(DomainError):
            gaussian_convolve(np.exp, 1.0, 2.0, 0.0)

    def test_order_stability(self):
        for T in (1.0, 4.0):
            for R in (-5.0, 0.0, 5.0):
                a = gaussian_convolve(np.exp, T, 0.0, R, 40)
                b = gaussian_convolve(np.exp, T, 0.0, R, 80)
                assert abs(a - b) < 1e-9 * max(1.0, abs(b))


class TestParsing:
    def test_finals(self):
        assert parse_final("expfinal")(1.0) == pytest.approx(math.e)
        assert parse_final("expfinal:rate=0.5")(2.0) == pytest.approx(math.e)
        f = parse_final("expmix:weights=0.3;0.7,rates=1;0.5")
        assert f(0.0) == pytest.approx(1.0)
        assert parse_final("polyfinal:coeffs=30;10;1")(1.0) == pytest.approx(41.0)

    def test_potentials(self):
        assert parse_potential("exp:eta=2").eta == 2.0
        assert parse_potential("normalhedge").kind == "normal_hedge"
        p = parse_potential("gaussfinal:final=expfinal,horizon=2")
        assert p.horizon == 2.0

    @pytest.mark.parametrize("desc", ["nope", "expfinal:rate=x", "expfinal:foo=1",
                                      "expmix:weights=1,rates=1;2"])
    def test_bad_finals(self, desc):
        with pytest.raises(ArgumentError):
            parse_final(desc)

    def test_bad_potential(self):
        with pytest.raises(ArgumentError):
            parse_potential("exp:eta=-1")

    def test_table_final(self, tmp_path):
        path = tmp_path / "f.csv"
        xs = [float(x) for x in np.linspace(-3, 3, 61)]
        path.write_text("R,value\n" + "".join(f"{x!r},{math.exp(x)!r}\n" for x in xs))
        f = table_final(path)
        assert f(0.05) == pytest.approx(math.exp(0.05), rel=1e-12)
        assert f(4.0) == pytest.approx(math.exp(4.0), rel=1e-12)

    def test_table_final_rejects_nonconvex(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("R,value\n0,1\n1,3\n2,4\n")
        with pytest.raises(ArgumentError):
            table_final(path)
