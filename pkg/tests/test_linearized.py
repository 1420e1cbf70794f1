"""The linearized operator, the radial inverse T0 and the per-mode solvers."""

import numpy as np
import pytest
from scipy.integrate import quad

from spiral_euler.errors import PreconditionError, UnsupportedModeError
from spiral_euler.linearized import (RhsDecomposition, StreamSolution, apply_L, apply_T0,
                                     apply_t0_mode, highfreq_transport_solve, interior,
                                     linear_operator_values, rhs_g_mode, solve_linearized,
                                     solve_mode_linearized)
from spiral_euler.logdiff import log_derivative
from spiral_euler.params import RadialGrid, SolverParams
from spiral_euler.spectral import SpectralField

MU, ALPHA = 0.75, 0.1
PARAMS = SolverParams(mu=MU, m=2, alpha=ALPHA, n_modes=8)
GRID = PARAMS.grid
BETA = GRID.nodes
COLS = interior(GRID.count)
# weight under which admissible stream functions are bounded
STREAM_WEIGHT = BETA ** (2 * MU - 1) * (1 + BETA**2) ** (ALPHA / 2)


def weighted_relative(error, reference, weight=STREAM_WEIGHT):
    return np.max(np.abs(error) * weight) / np.max(np.abs(reference) * weight)


def fast_decaying_profile(phase=0.3):
    """Smooth admissible mode profile, negligible at both grid ends."""
    return BETA**2 / (1 + BETA**2) ** 3 * (1 + 1j * phase * BETA)


def rhs_for_mode(n, psi_n):
    """``(f1, f2)`` reproducing ``L_n psi_n`` (``f2`` carries the data for ``n != 0``)."""
    image = linear_operator_values(np.asarray(psi_n)[None], np.array([n]), GRID, MU)[0]
    if n == 0:
        h = psi_n + log_derivative(psi_n, GRID.log_step) / (2 * MU)
        return -log_derivative(h, GRID.log_step) / MU, np.zeros_like(psi_n)
    return np.zeros_like(psi_n), image / (1j * n)


class TestT0:
    def test_constant_is_fixed(self):
        assert np.max(np.abs(apply_t0_mode(np.ones(GRID.count), 0, MU, GRID) - 1)) < 1e-12

    def test_radial_power(self):
        power = BETA ** (1 - 2 * MU)
        image = apply_t0_mode(power, 0, MU, GRID)
        assert np.max(np.abs(image / (2 * MU * power) - 1)) < 1e-10

    def test_zero(self):
        assert not np.any(apply_t0_mode(np.zeros(GRID.count), 2, MU, GRID))

    def test_matches_quadrature(self):
        # the start value at beta_min relies on a power law; its error decays
        # like (beta_min / beta)^(2 mu), so compare away from the left end
        def h(s):
            return s**0.3 / (1 + s * s) * (1 + 0.5 * np.cos(np.log1p(s * s)))

        image = apply_t0_mode(h(BETA), 0, MU, GRID)
        for i in (700, 1000, 1700):
            b = BETA[i]
            integral = quad(lambda s: s ** (2 * MU - 1) * h(s), 0, b, limit=400,
                            epsabs=0, epsrel=1e-13)[0]
            assert image[i].real == pytest.approx(2 * MU * b ** (-2 * MU) * integral, rel=1e-8)

    @pytest.mark.parametrize("n", [0, 2, -4, 8])
    def test_inverse_relation(self, n):
        rng = np.random.default_rng(abs(n) + 10)
        for _ in range(5):
            a, k = rng.uniform(0.1, 0.9), rng.uniform(0.5, 2.0)
            h = rng.normal() * BETA**a / (1 + BETA) ** a * np.cos(k * np.log(BETA)) + 0j
            f = apply_t0_mode(h, n, MU, GRID)
            rebuilt = f + (log_derivative(f, GRID.log_step) + 1j * n * BETA * f) / (2 * MU)
            assert np.max(np.abs(h - rebuilt)[COLS] * STREAM_WEIGHT[COLS]) <= 1e-8

    def test_field_version_acts_per_mode(self):
        h = SpectralField([-2, 0, 2], [BETA**0.3 / (1 + BETA) ** 0.3] * 3, 2, GRID)
        image = apply_T0(h, MU)
        for n in (-2, 0, 2):
            assert np.array_equal(image.mode(n), apply_t0_mode(h.mode(n), n, MU, GRID))


class TestLinearOperator:
    def test_radial_profile_image(self):
        # psi0 = 2 beta^(-1/2): H = (4/3) beta^(-1/2) and (1/mu) beta^-1 D^2 H = (4/9) beta^(-3/2)
        image = apply_L(StreamSolution.radial(PARAMS))
        assert np.max(np.abs(image.mode(0) * BETA**1.5 - 4 / 9)) < 1e-14

    def test_radial_profile_on_grid_matches_exact_direction(self):
        on_grid = StreamSolution(PARAMS, SpectralField([0], [2 * BETA**-0.5], 2, GRID))
        image = apply_L(on_grid).mode(0) * BETA**1.5
        assert np.max(np.abs(image - 4 / 9)[COLS]) < 1e-8

    def test_zero(self):
        assert not np.any(apply_L(StreamSolution.zero(PARAMS)).values)

    def test_auxiliary_field_of_a_power(self):
        sol = StreamSolution(PARAMS, SpectralField([0], [BETA**0.7], 2, GRID))
        assert np.max(np.abs(sol.h.mode(0) / BETA**0.7 - (1 + 0.7 / (2 * MU)))[COLS]) < 1e-8

    def test_per_mode_formula(self):
        n = 4
        psi = fast_decaying_profile()
        sol = StreamSolution(PARAMS, SpectralField([-n, n], [np.conj(psi), psi], 2, GRID))
        h = psi + (log_derivative(psi, GRID.log_step) + 1j * n * BETA * psi) / (2 * MU)
        dd = log_derivative(log_derivative(h, GRID.log_step), GRID.log_step)
        expected = (dd - (MU * n) ** 2 * h + 0.5 * PARAMS.gamma * 1j * n * BETA * psi) / (MU * BETA)
        assert np.max(np.abs(apply_L(sol).mode(n) - expected)) <= 1e-11 * np.max(np.abs(expected))


class TestModeSolve:
    @pytest.mark.parametrize("n", [0, 2, 4, -6])
    def test_zero_rhs(self, n):
        zero = np.zeros(GRID.count)
        psi, h = solve_mode_linearized(n, (zero, zero), PARAMS)
        assert not np.any(psi) and not np.any(h)

    @pytest.mark.parametrize("n", [0, 2, -2, 4, 8])
    def test_manufactured_recovery(self, n):
        target = fast_decaying_profile()
        if n == 0:
            target = target.real + 0j
        psi, _ = solve_mode_linearized(n, rhs_for_mode(n, target), PARAMS)
        assert weighted_relative(psi - target, target) <= 1e-6

    def test_radial_mode_against_quadrature(self):
        def data(s):
            return (1 + s * s) ** (-ALPHA / 2) * s ** (1 - 2 * MU)

        _, h = solve_mode_linearized(0, (data(BETA) + 0j, np.zeros(GRID.count)), PARAMS)
        for i in (100, 700, 1300, 1900):
            b = BETA[i]
            exact = MU * quad(lambda s: data(s) / s, b, np.inf, limit=500,
                              epsabs=0, epsrel=1e-13)[0]
            assert abs(h[i] / exact - 1) <= 1e-8

    @pytest.mark.parametrize("n", [1, -1])
    def test_excluded_modes(self, n):
        zero = np.zeros(GRID.count)
        with pytest.raises(UnsupportedModeError):
            solve_mode_linearized(n, (zero, zero), PARAMS)

    def test_mode_outside_fold(self):
        zero = np.zeros(GRID.count)
        with pytest.raises(PreconditionError):
            solve_mode_linearized(3, (zero, zero), PARAMS)

    def test_slowly_decaying_data_against_extended_domain(self):
        # a grid three decades wider on each side shares the nodes of the base grid
        base, wide = RadialGrid(1e-3, 1e3, 2049), RadialGrid(1e-6, 1e6, 4097)

        def data(b):
            return (b ** (1 - 2 * MU) * b / (1 + b) ** 2 + 0j, b ** (-2 * MU) * b / (1 + b * b) * (1 + 0.5j))

        for n in (8, 32):
            _, reference = solve_mode_linearized(n, data(wide.nodes), PARAMS, grid=wide)
            reference = reference[1024:3073]
            _, h = solve_mode_linearized(n, data(base.nodes), PARAMS, grid=base)
            outer = slice(-200, None)
            assert np.max(np.abs(h - reference)[outer]) <= 1e-6 * np.max(np.abs(reference))


class TestAssembledSolve:
    modes = np.arange(-4, 5, 2)

    def manufactured(self):
        rows = {0: fast_decaying_profile().real + 0j}
        for n in (2, 4):
            rows[n] = fast_decaying_profile(0.1 * n) / n
            rows[-n] = np.conj(rows[n])
        f1, f2 = {}, {}
        for n, psi in rows.items():
            f1[n], f2[n] = rhs_for_mode(n, psi)
        rhs = RhsDecomposition(SpectralField(self.modes, [f1[n] for n in self.modes], 2, GRID),
                               SpectralField(self.modes, [f2[n] for n in self.modes], 2, GRID))
        return rows, rhs

    def test_zero_rhs(self):
        zero = SpectralField.zeros(self.modes, 2, GRID)
        sol = solve_linearized(RhsDecomposition(zero, zero), PARAMS)
        assert not np.any(sol.psi.values) and sol.singular_coeff == 0

    def test_multi_mode_recovery(self):
        rows, rhs = self.manufactured()
        sol = solve_linearized(rhs, PARAMS)
        for n, target in rows.items():
            assert weighted_relative(sol.psi.mode(n) - target, target) <= 1e-6

    def test_residual(self):
        _, rhs = self.manufactured()
        image = apply_L(solve_linearized(rhs, PARAMS))
        target = rhs.g_field()
        weight = BETA ** (2 * MU)
        for n in self.modes:
            error = np.max(np.abs(image.mode(n) - target.mode(n))[COLS] * weight[COLS])
            assert error <= 1e-8 * np.max(np.abs(target.mode(n))[COLS] * weight[COLS])

    def test_radial_only_matches_explicit_path(self):
        f1 = (1 + BETA**2) ** (-ALPHA / 2) * BETA ** (1 - 2 * MU)
        rhs = RhsDecomposition(SpectralField([0], [f1], 2, GRID), SpectralField.zeros([0], 2, GRID))
        sol = solve_linearized(rhs, PARAMS)
        psi, _ = solve_mode_linearized(0, (f1 + 0j, np.zeros(GRID.count)), PARAMS)
        assert np.array_equal(sol.psi.mode(0), psi)

    def test_modes_decouple_bitwise(self):
        _, rhs = self.manufactured()
        joint = solve_linearized(rhs, PARAMS)
        for n in self.modes:
            alone, _ = solve_mode_linearized(int(n), (rhs.f1.mode(n), rhs.f2.mode(n)), PARAMS)
            assert np.array_equal(joint.psi.mode(n), alone)

    def test_inadmissible_modes_rejected(self):
        bad = SpectralField.zeros([-1, 1], 1, GRID)
        with pytest.raises(UnsupportedModeError):
            solve_linearized(RhsDecomposition(bad, bad), PARAMS)

    def test_g_field_definition(self):
        _, rhs = self.manufactured()
        for n in self.modes:
            expected = rhs_g_mode(n, rhs.f1.mode(n), rhs.f2.mode(n), GRID)
            assert np.array_equal(rhs.g_field().mode(n), expected)


def localized_random_rhs(rng):
    """Smooth random data negligible at both grid ends."""
    s = np.log(BETA)
    f1 = np.zeros(GRID.count, dtype=complex)
    f2 = np.zeros(GRID.count, dtype=complex)
    for _ in range(3):
        centre, width = rng.uniform(-1.5, 1.5), rng.uniform(0.5, 1.2)
        envelope = np.exp(-0.5 * ((s - centre) / width) ** 2)
        f1 += (rng.normal() + 1j * rng.normal()) * envelope
        f2 += (rng.normal() + 1j * rng.normal()) * envelope * np.cos(rng.uniform(0, 2) * s)
    return f1, f2


class TestHighFrequency:
    def test_zero_rhs(self):
        zero = np.zeros(GRID.count)
        assert not np.any(highfreq_transport_solve(32, (zero, zero), PARAMS))

    def test_agrees_with_boundary_value_solve(self):
        # the boundary-value solve carries a thin singular-branch layer
        # (decaying like beta^(-mu |n|)) at beta_min; compare one decade inside
        away = BETA >= 10 * BETA[0]
        rng = np.random.default_rng(11)
        for _ in range(6):
            data = localized_random_rhs(rng)
            _, h = solve_mode_linearized(32, data, PARAMS)
            transport = highfreq_transport_solve(32, data, PARAMS)
            assert np.max(np.abs(transport - h)[away]) <= 1e-6 * np.max(np.abs(h))

    def test_boundary_layer_is_confined(self):
        data = localized_random_rhs(np.random.default_rng(11))
        _, h = solve_mode_linearized(32, data, PARAMS)
        transport = highfreq_transport_solve(32, data, PARAMS)
        error = np.abs(transport - h) / np.max(np.abs(h))
        assert np.max(error) <= 1e-4
        assert np.all(np.diff(error[:20]) < 0)

    def test_contraction_improves_with_frequency(self):
        data = localized_random_rhs(np.random.default_rng(12))
        estimates = [highfreq_transport_solve(n, data, PARAMS, return_details=True).contraction_estimate
                     for n in (4, 8, 16, 32, 64)]
        assert all(later < earlier for earlier, later in zip(estimates, estimates[1:]))
        assert estimates[-1] * 64 <= 2 * estimates[0] * 4

    def test_low_modes_rejected(self):
        zero = np.zeros(GRID.count)
        with pytest.raises(UnsupportedModeError):
            highfreq_transport_solve(1, (zero, zero), PARAMS)
