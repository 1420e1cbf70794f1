"""Coordinate maps, physical samplers, self-similar fields, initial data and weak form."""

import math

import numpy as np
import pytest

from spiral_euler.errors import DomainError, OutOfRangeError
from spiral_euler.linearized import StreamSolution
from spiral_euler.measure_io import VorticityProfile
from spiral_euler.nonlinear import solve_nonlinear, solve_with_omega
from spiral_euler.params import RadialGrid, SolverParams
from spiral_euler.physical import (BumpTestField, SolutionSampler, ZeroTestField, coord_forward,
                                   coord_inverse, initial_data, integrability_exponent,
                                   jacobian_scan, polygon_flux, profile_fields, sample_velocity,
                                   sample_vorticity, self_similar_fields, self_similar_sample,
                                   trace_streamline, velocity_bound_constant, weak_residual)
from spiral_euler.spectral import SpectralField

MU = 0.75
GAMMA = 2 / 3
RADIAL_PARAMS = SolverParams(mu=MU, m=2, alpha=0.3, n_modes=8)
RADIAL = SolutionSampler(StreamSolution.radial(RADIAL_PARAMS))
TRUNCATED = SolverParams(mu=MU, m=2, alpha=0.3, n_modes=16, grid=RadialGrid(1e-3, 5.0, 2048))


@pytest.fixture(scope="module")
def perturbed():
    omega = SpectralField.angular({0: GAMMA, 2: GAMMA * 5e-4, -2: GAMMA * 5e-4}, 2)
    sol, report = solve_with_omega(omega, TRUNCATED)
    assert report.converged
    return SolutionSampler(sol)


def annulus_points(rng, count, low, high):
    radius, angle = rng.uniform(low, high, count), rng.uniform(0, 2 * math.pi, count)
    return np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])


class TestCoordinates:
    def test_radius_at_unit_beta(self):
        r, theta = coord_forward(1.0, 0.5, RADIAL)
        assert r == pytest.approx(math.sqrt(4 / 3), abs=1e-14)
        assert theta == pytest.approx(1.5, abs=1e-15)

    def test_radius_power_law(self):
        beta = np.geomspace(1e-2, 1e2, 50)
        r, _ = coord_forward(beta, np.zeros_like(beta), RADIAL)
        slope = np.polyfit(np.log(beta), np.log(r), 1)[0]
        assert abs(slope + MU) <= 1e-3

    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        beta = np.exp(rng.uniform(math.log(1e-2), math.log(1e2), 1000))
        phi = rng.uniform(0, 2 * math.pi, 1000)
        r, theta = coord_forward(beta, phi, RADIAL)
        beta_back, phi_back = coord_inverse(r, theta, RADIAL)
        assert np.max(np.abs(beta_back / beta - 1)) <= 1e-9
        assert np.max(np.abs(np.angle(np.exp(1j * (phi_back - phi))))) <= 1e-9

    def test_roundtrip_perturbed(self, perturbed):
        rng = np.random.default_rng(1)
        beta = np.exp(rng.uniform(math.log(1e-2), math.log(4.0), 300))
        phi = rng.uniform(0, 2 * math.pi, 300)
        r, theta = coord_forward(beta, phi, perturbed)
        beta_back, _ = coord_inverse(r, theta, perturbed)
        assert np.max(np.abs(beta_back / beta - 1)) <= 1e-9

    def test_closed_form_inverse(self):
        r = np.geomspace(0.05, 20, 40)
        beta, _ = coord_inverse(r, np.zeros_like(r), RADIAL)
        assert np.max(np.abs(beta / (MU * r * r) ** (-1 / (2 * MU)) - 1)) <= 1e-10

    def test_radius_outside_grid(self):
        with pytest.raises(OutOfRangeError):
            coord_inverse(1e-6, 0.0, RADIAL)

    def test_nonpositive_radius(self):
        with pytest.raises(DomainError):
            coord_inverse(0.0, 0.0, RADIAL)


class TestFieldSamplers:
    def test_radial_vorticity(self):
        beta = np.geomspace(1e-2, 1e2, 30)
        omega = sample_vorticity(beta, np.zeros_like(beta), RADIAL)
        assert np.allclose(omega, GAMMA * beta, rtol=1e-13)
        assert sample_vorticity(1.5, 0.3, RADIAL) == pytest.approx(1.0, abs=1e-14)

    def test_zero_datum_gives_zero_vorticity(self):
        sol = StreamSolution.radial(RADIAL_PARAMS, omega=SpectralField.angular({0: 0.0}, 2))
        assert sample_vorticity(1.0, 0.0, sol) == 0.0

    def test_radial_velocity(self):
        r = np.geomspace(0.1, 10, 25)
        v_r, v_theta = sample_velocity(r, np.full_like(r, 0.4), RADIAL)
        assert np.max(np.abs(v_r)) == 0.0
        assert np.allclose(v_theta, MU ** (-2 / 3) * r ** (-1 / 3), rtol=1e-9)

    def test_rotation_by_fold(self, perturbed):
        rng = np.random.default_rng(2)
        r, theta = rng.uniform(0.6, 3.0, 20), rng.uniform(0, 2 * math.pi, 20)
        first = sample_velocity(r, theta, perturbed)
        rotated = sample_velocity(r, theta + math.pi, perturbed)
        for a, b in zip(first, rotated):
            assert np.max(np.abs(a - b)) <= 1e-9 * np.max(np.abs(first[1]))

    def test_velocity_bound_is_finite(self, perturbed):
        constant = velocity_bound_constant(perturbed)
        assert math.isfinite(constant) and constant > 0

    def test_jacobian_of_radial_profile(self):
        low, high = jacobian_scan(RADIAL.sol)
        assert high < 0
        beta = RADIAL.grid.nodes
        values = -math.sqrt(MU) * beta ** (-MU - 1)
        assert low == pytest.approx(values.min(), rel=1e-12)
        assert high == pytest.approx(values.max(), rel=1e-12)
        assert -math.sqrt(MU) == pytest.approx(-0.866, abs=1e-3)

    def test_jacobian_negative_for_perturbed(self, perturbed):
        assert jacobian_scan(perturbed.sol)[1] < 0


class TestSelfSimilar:
    def test_unit_time_matches_profile(self, perturbed):
        points = annulus_points(np.random.default_rng(3), 10, 0.8, 2.0)
        fields = self_similar_fields(points, 1.0, perturbed)
        profile = profile_fields(points, perturbed)
        assert np.array_equal(fields["velocity"], profile["velocity"])
        assert np.array_equal(fields["vorticity"], profile["omega"])

    def test_scaling_law(self):
        points = annulus_points(np.random.default_rng(4), 20, 0.5, 3.0)
        lam = 2.0
        for t in (0.5, 1.0):
            scaled = self_similar_fields(lam**MU * points, lam * t, RADIAL)["velocity"]
            base = self_similar_fields(points, t, RADIAL)["velocity"]
            assert np.max(np.abs(scaled - lam ** (MU - 1) * base)) <= 1e-10 * np.max(np.abs(base))

    def test_vorticity_times_time_constant_at_fixed_profile_point(self, perturbed):
        x = annulus_points(np.random.default_rng(5), 8, 0.8, 2.0)
        products = [self_similar_fields(t**MU * x, t, perturbed)["vorticity"] * t
                    for t in (0.5, 1.0, 2.0)]
        for value in products[1:]:
            assert np.max(np.abs(value - products[0])) <= 1e-10 * np.max(np.abs(products[0]))

    def test_nonpositive_time(self):
        with pytest.raises(DomainError):
            self_similar_sample((1.0, 0.0), 0.0, RADIAL)

    def test_sample_record(self):
        sample = self_similar_sample((1.0, 0.0), 1.0, RADIAL)
        assert sample.r == 1.0 and sample.time == 1.0
        assert sample.velocity[0] == pytest.approx(0.0, abs=1e-14)
        assert sample.velocity[1] == pytest.approx(MU ** (-2 / 3), rel=1e-9)


class TestInitialData:
    def test_cosine_profile(self):
        data = initial_data(VorticityProfile.density({2: 0.5}, 2), RADIAL_PARAMS)
        theta = np.linspace(0, 2 * math.pi, 33)
        assert np.allclose(data.b_profile(theta), -(9 / 32) * np.cos(2 * theta), atol=1e-15)
        assert data.b_modes[2] == pytest.approx(-9 / 64, abs=1e-16)

    def test_constant_profile(self):
        data = initial_data(VorticityProfile.density({0: 1.7}, 2), RADIAL_PARAMS)
        assert data.b_modes[0] == pytest.approx(1.7 / GAMMA**2, rel=1e-15)

    def test_spectral_identity(self):
        profile = VorticityProfile.density({0: 1.0, 2: 0.1 - 0.05j, 4: 0.02}, 2)
        data = initial_data(profile, RADIAL_PARAMS)
        assert data.spectral_defect() <= 1e-15
        theta = np.linspace(0, 2 * math.pi, 64, endpoint=False)
        defect = GAMMA**2 * data.b_profile(theta) + data.b_profile(theta, order=2) - \
            data.angular_vorticity(theta)
        assert np.max(np.abs(defect)) <= 1e-14

    def test_exponents(self):
        data = initial_data(VorticityProfile.density({0: 1.0}, 2), RADIAL_PARAMS)
        assert data.psi0_exponent == pytest.approx(2 / 3)
        assert data.omega0_exponent == pytest.approx(-4 / 3)

    def test_velocity_is_perpendicular_gradient(self):
        data = initial_data(VorticityProfile.density({0: 1.0, 2: 0.1}, 2), RADIAL_PARAMS)
        points = annulus_points(np.random.default_rng(6), 10, 0.5, 2.0)
        h = 1e-6
        e1, e2 = np.array([h, 0.0]), np.array([0.0, h])
        d1 = (data.psi0(points + e1) - data.psi0(points - e1)) / (2 * h)
        d2 = (data.psi0(points + e2) - data.psi0(points - e2)) / (2 * h)
        assert np.allclose(data.velocity0(points), np.column_stack([-d2, d1]), rtol=1e-7, atol=1e-9)

    def test_radial_flow_is_exactly_self_similar(self):
        profile = VorticityProfile.density({0: 1.0}, 2)
        sol, _ = solve_nonlinear(profile, RADIAL_PARAMS)
        data = initial_data(profile, RADIAL_PARAMS)
        points = annulus_points(np.random.default_rng(7), 10, 0.3, 1.0)
        for t in (1e-1, 1e-2, 1e-3):
            omega = self_similar_fields(points, t, sol)["vorticity"]
            assert np.max(np.abs(omega / data.omega0(points) - 1)) <= 1e-12

    def test_small_time_limit(self):
        profile = VorticityProfile.density({0: 1.0, 2: 1e-3}, 2)
        sol, _ = solve_nonlinear(profile, TRUNCATED)
        data = initial_data(profile, TRUNCATED)
        points = annulus_points(np.random.default_rng(7), 10, 0.3, 1.0)
        errors = []
        for t in (1e-1, 1e-2, 1e-3):
            omega = self_similar_fields(points, t, sol)["vorticity"]
            errors.append(np.max(np.abs(omega / data.omega0(points) - 1)))
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] < 0.1 * errors[0]


class TestStreamlines:
    def test_algebraic_spiral(self):
        sol, _ = solve_nonlinear(VorticityProfile.density({0: 1.0}, 1),
                                 SolverParams(mu=MU, m=2, alpha=0.3, n_modes=8))
        line = trace_streamline(0.0, sol, (0.05, 20.0), 2001)
        assert np.max(np.abs(line.theta - 1.5 * line.r ** (-4 / 3))) <= 1e-12 * np.max(line.theta)

    def test_shift_by_fold_is_rotation(self, perturbed):
        first = trace_streamline(0.3, perturbed, (0.05, 4.0), 200)
        shifted = trace_streamline(0.3 + math.pi, perturbed, (0.05, 4.0), 200)
        assert np.allclose(shifted.r, first.r, rtol=1e-10)
        assert np.allclose(shifted.theta - first.theta, math.pi, atol=1e-14)

    def test_monotone_winding(self, perturbed):
        line = trace_streamline(1.0, perturbed, (0.01, 4.0), 300)
        assert np.all(np.diff(line.theta - 1.0) > 0)
        assert np.all(np.diff(line.r) < 0)

    def test_bad_range(self):
        with pytest.raises(DomainError):
            trace_streamline(0.0, RADIAL, (2.0, 1.0))


class TestIntegralDiagnostics:
    def test_integrability_exponent(self):
        assert abs(integrability_exponent(RADIAL.sol) / (2 - 1 / MU) - 1) <= 0.01

    def test_flux_through_random_polygons(self, perturbed):
        rng = np.random.default_rng(8)
        for _ in range(20):
            centre = annulus_points(rng, 1, 1.0, 2.0)[0]
            sides = int(rng.integers(3, 8))
            angles = np.sort(rng.uniform(0, 2 * math.pi, sides))
            radii = rng.uniform(0.15, 0.4, sides)
            vertices = centre + np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
            flux, scale = polygon_flux(perturbed, vertices)
            assert abs(flux) <= 1e-6 * scale

    def test_weak_form_radial(self):
        for centre, radius in (((1.0, 0.5), 0.6), ((-0.8, 0.9), 0.5), ((0.3, -1.7), 0.8)):
            value, scale = weak_residual(RADIAL.sol, BumpTestField(centre, radius), return_scale=True)
            assert abs(value) <= 1e-6 * scale

    def test_weak_form_zero_test(self):
        assert weak_residual(RADIAL.sol, ZeroTestField()) == 0.0

    def test_weak_form_perturbed_fine_quadrature(self, perturbed):
        test = BumpTestField((1.0, 0.5), 0.6)
        value, scale = weak_residual(perturbed.sol, test, start=512, max_points=512,
                                     return_scale=True)
        assert abs(value) <= 1e-4 * scale

    def test_weak_form_detects_a_non_solution(self, perturbed):
        # amplifying the non-radial part breaks the equation
        test = BumpTestField((1.0, 0.5), 0.6)
        tampered = perturbed.sol.replace(psi=perturbed.sol.psi.scale(20.0))
        good = weak_residual(perturbed.sol, test, start=256, max_points=256, return_scale=True)
        bad = weak_residual(tampered, test, start=256, max_points=256, return_scale=True)
        assert abs(bad[0]) / bad[1] > 1e3 * abs(good[0]) / good[1]
