"""Indicial exponents, transport solves, Green's functions and the 2F2 mode solution."""

import math

import mpmath
import numpy as np
import pytest

from spiral_euler.errors import DomainError, PreconditionError
from spiral_euler.logdiff import log_derivative
from spiral_euler.params import RadialGrid
from spiral_euler.singular_ode import (apply_singular_operator, build_fundamental,
                                       fitted_growth_exponent, green_solve,
                                       green_solve_derivform, growth_exponent,
                                       homogeneous_mode_solution, hyp2f2, indicial_roots,
                                       inner_operator_symbol, transport_mode_solve,
                                       weighted_bound_ratio)

MU, ALPHA = 0.75, 0.1


class TestIndicialRoots:
    def test_logarithmic_case(self):
        roots = indicial_roots(2, 0.75)
        assert tuple(roots) == pytest.approx((3.0, 0.0, 0.0))
        assert roots.logarithmic

    def test_generic_case(self):
        roots = indicial_roots(3, 1.0)
        assert tuple(roots) == pytest.approx((5.0, 0.0, -1.0))
        assert not roots.logarithmic

    def test_radial_mode_repeated(self):
        roots = indicial_roots(0, 1.0)
        assert tuple(roots) == pytest.approx((2.0, 0.0, 2.0))
        assert roots.logarithmic

    @pytest.mark.parametrize("n,mu", [(2, 0.75), (3, 1.0), (4, 1.5), (6, 0.6)])
    def test_roots_annihilate_inner_operator(self, n, mu):
        for lam in indicial_roots(n, mu):
            assert inner_operator_symbol(n, mu, lam) == pytest.approx(0.0, abs=1e-12)

    def test_mu_guard(self):
        with pytest.raises(DomainError):
            indicial_roots(2, 0.5)


class TestTransport:
    grid = RadialGrid(1e-3, 1e3, 2049)

    def test_zero_data(self):
        for n in (-4, -2, 0, 1, 2, 4):
            assert not np.any(transport_mode_solve(n, np.zeros(self.grid.count), 1.0, self.grid))

    def test_regular_branch_positive_mode(self):
        beta = self.grid.nodes
        q = transport_mode_solve(2, 1 / beta, 1.0, self.grid)
        assert np.max(np.abs(q * beta - 1)) < 1e-10

    def test_decaying_branch_negative_mode(self):
        # the one-sided closure at the outer edge is the accuracy floor here
        errors = []
        for count in (2049, 4097):
            grid = RadialGrid(1e-3, 1e3, count)
            beta = grid.nodes
            q = transport_mode_solve(-2, beta**-2.0, 1.0, grid)
            errors.append(np.max(np.abs(q * beta**2 + 0.25)) / 0.25)
        assert errors[1] <= 1e-6
        assert errors[0] >= 16 * errors[1]

    def test_excluded_modes_need_zero_data(self):
        with pytest.raises(PreconditionError):
            transport_mode_solve(1, np.ones(self.grid.count), 1.0, self.grid)

    def test_discrete_identity_for_log_polynomials(self):
        rng = np.random.default_rng(4)
        beta = self.grid.nodes
        s = np.log(beta)
        for n in (2, -2, 4, -6):
            coeffs = rng.normal(size=4)
            g = np.polyval(coeffs, s / 7) * beta ** (-0.5) / (1 + beta) ** 0.5
            q = transport_mode_solve(n, g, MU, self.grid)
            applied = log_derivative(q, self.grid.log_step) + MU * n * q
            inner = slice(3, -3)
            assert np.max(np.abs(applied - g)[inner]) <= 1e-10 * np.max(np.abs(g))


class TestFundamentalSystem:
    def test_constant_potential(self):
        q = 1.7
        prob = build_fundamental(q, q)
        x = np.geomspace(0.01, 100, 50)
        assert np.allclose(prob.y1(x), x**q, rtol=1e-9)
        assert np.allclose(prob.y2(x), x**-q, rtol=1e-9)
        assert np.allclose(prob.scaled_wronskian(x), -2 * q, rtol=1e-9)

    def test_wronskian_constant(self):
        prob = build_fundamental(2.0, 3.0)
        w = prob.scaled_wronskian(np.geomspace(0.01, 100, 400))
        assert np.max(np.abs(w / np.median(w) - 1)) < 1e-6

    def test_wronskian_random_pairs(self):
        rng = np.random.default_rng(8)
        x = np.geomspace(0.01, 100, 400)
        for _ in range(5):
            w = build_fundamental(*rng.uniform(0.6, 5.0, 2)).scaled_wronskian(x)
            assert np.max(np.abs(w / np.median(w) - 1)) < 1e-6

    def test_y2_decreasing(self):
        prob = build_fundamental(1.0, 1.0)
        assert np.all(np.diff(prob.y2(np.geomspace(1e-3, 1e3, 2000))) < 0)

    def test_solutions_satisfy_ode_in_transition(self):
        prob = build_fundamental(1.2, 2.8)
        y1, y2 = prob.sampled
        x = prob.grid.nodes
        middle = (x > 0.8) & (x < 2.5)
        for y in (y1, y2):
            residual = apply_singular_operator(prob, y)
            assert np.max(np.abs(residual[middle] / y[middle])) < 1e-6

    def test_nonpositive_exponent_rejected(self):
        with pytest.raises(DomainError):
            build_fundamental(0.0, 1.0)


def step_bump_solution(x):
    """Closed-form solution of x^2 y'' + x y' - 4 y = x^2 [x <= 1]."""
    inner = np.minimum(x, 1.0)
    log_part = np.where(x < 1, x**2 * np.log(1 / np.minimum(x, 1.0)), 0.0)
    return -(log_part + x**-2.0 * inner**4 / 4) / 4


def bump(s, lo=-2.0, hi=2.0):
    t = (s - lo) / (hi - lo)
    inside = (t > 0) & (t < 1)
    out = np.zeros_like(s)
    out[inside] = np.exp(-1 / (t[inside] * (1 - t[inside])))
    return out


class TestGreenSolve:
    def test_zero_data(self):
        prob = build_fundamental(2.0, 2.0)
        assert not np.any(green_solve(prob, np.zeros(prob.grid.count), MU, ALPHA))

    def test_matches_closed_form_for_truncated_power(self):
        prob = build_fundamental(2.0, 2.0)
        x = prob.grid.nodes
        y = green_solve(prob, lambda t: np.where(t <= 1.0, t**2, 0.0), MU, ALPHA)
        exact = step_bump_solution(x)
        assert np.max(np.abs(y - exact)) <= 1e-6 * np.max(np.abs(exact))

    def test_manufactured_compact_solution(self):
        prob = build_fundamental(1.5, 2.5)
        x = prob.grid.nodes
        s = np.log(x)
        target = bump(s) * np.cos(s)
        f = apply_singular_operator(prob, target)
        y = green_solve(prob, f, MU, ALPHA)
        residual = apply_singular_operator(prob, y) - f
        assert np.max(np.abs(residual[6:-6])) <= 1e-8
        assert np.max(np.abs(y - target)) <= 1e-6 * np.max(np.abs(target))

    def test_exponent_conditions_enforced(self):
        prob = build_fundamental(0.4, 2.0)
        with pytest.raises(DomainError):
            green_solve(prob, np.ones(prob.grid.count), MU, ALPHA)

    def test_callable_and_sampled_data_agree(self):
        prob = build_fundamental(1.3, 2.1)
        x = prob.grid.nodes

        def data(t):
            return t ** (1 - 2 * MU) * (1 + t * t) ** (-ALPHA / 2) * np.cos(np.log(t))

        sampled = green_solve(prob, data(x), MU, ALPHA)
        from_callable = green_solve(prob, data, MU, ALPHA)
        assert np.max(np.abs(sampled - from_callable)) <= 1e-6 * np.max(np.abs(sampled))


class TestDerivativeForm:
    def test_zero_data(self):
        prob = build_fundamental(2.0, 3.0)
        assert not np.any(green_solve_derivform(prob, np.zeros(prob.grid.count), MU, ALPHA))

    def test_agrees_with_differentiated_data(self):
        prob = build_fundamental(1.4, 2.6)
        x = prob.grid.nodes
        s = np.log(x)
        f_tilde = bump(s, math.log(0.5), math.log(3.0))
        direct = green_solve(prob, log_derivative(f_tilde, prob.grid.log_step), MU, ALPHA)
        weak = green_solve_derivform(prob, f_tilde, MU, ALPHA)
        assert np.max(np.abs(weak - direct)) <= 1e-5 * np.max(np.abs(direct))

    def test_weighted_bound_for_power_data(self):
        prob = build_fundamental(2.0, 2.0)
        x = prob.grid.nodes
        f_tilde = x ** (1 - 2 * MU) * (1 + x * x) ** (-ALPHA / 2)
        y = green_solve_derivform(prob, f_tilde, MU, ALPHA)
        ratio = weighted_bound_ratio(prob, f_tilde, y, MU, ALPHA)
        assert np.isfinite(ratio) and 0 < ratio < 10


class TestHypergeometric:
    def test_zero_argument(self):
        assert hyp2f2(0.3, 1.2, 2.5, 3.5, 0.0) == 1.0

    def test_collapses_to_exponential(self):
        assert hyp2f2(1.3, 2.7, 1.3, 2.7, 1.0) == pytest.approx(math.e, abs=1e-14)

    def test_against_multiprecision_library(self):
        with mpmath.workdps(40):
            oracle = complex(mpmath.hyp2f2(1, 1, 2, 2, 0.5))
        assert abs(hyp2f2(1, 1, 2, 2, 0.5) - oracle) < 1e-12

    def test_large_imaginary_argument(self):
        with mpmath.workdps(60):
            oracle = complex(mpmath.hyp2f2(2.1, 0.7, 4.5, 5.0, -30j))
        assert abs(hyp2f2(2.1, 0.7, 4.5, 5.0, -30j) - oracle) <= 1e-12 * abs(oracle)

    def test_nonpositive_integer_denominator(self):
        with pytest.raises(DomainError):
            hyp2f2(1, 1, -2, 3, 0.1)


class TestModeSolution:
    def test_leading_power_at_origin(self):
        n, mu = 3, 0.75
        for beta in (1e-4, 1e-6):
            ratio = homogeneous_mode_solution(n, mu, beta) / beta ** (2 * mu + n * mu)
            assert abs(ratio - 1) < 10 * n * beta

    def test_value_against_independent_series(self):
        n, mu, beta = 2, 1.0, 1.0
        root = math.sqrt((n * mu) ** 2 - 2 * mu + 1)
        a1, a2 = n * mu + root, n * mu - root
        with mpmath.workdps(40):
            oracle = complex(mpmath.hyp2f2(a1 + 1, a2 + 1, 2 * mu + n * mu + 1, 2 * n * mu + 1,
                                           -1j * n * beta))
        assert abs(homogeneous_mode_solution(n, mu, beta) - oracle) < 1e-10

    def test_growth_exponent_formula(self):
        assert growth_exponent(2, 0.75) == pytest.approx(0.5 + math.sqrt(1.75), abs=1e-12)
        assert growth_exponent(2, 0.75) == pytest.approx(1.8229, abs=1e-4)

    @pytest.mark.parametrize("mu", [0.75, 1.0, 1.5])
    def test_fitted_growth_exponent(self, mu):
        fitted = fitted_growth_exponent(2, mu)
        assert abs(fitted / growth_exponent(2, mu) - 1) < 0.01

    def test_low_modes_rejected(self):
        with pytest.raises(PreconditionError):
            homogeneous_mode_solution(1, 0.75, 1.0)
