"""Acceptance self-check: eleven end-to-end checks of the solver stack.

Each check returns ``(passed, detail)``; :func:`run_check` adds the wall
time and fails a check that exceeds its time budget.  The same functions
back the ``selfcheck`` command and the acceptance test module.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from .params import RadialGrid, SolverParams, auto_alpha
from .spectral import SpectralField


@dataclass(frozen=True)
class CheckResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    budget: float

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} [{self.number:2d}] {self.title}: {self.detail} "
                f"({self.seconds:.2f} s / {self.budget:g} s)")


def _relative_spread(values):
    values = np.asarray(values, dtype=float)
    return float(np.max(np.abs(values - values[0])) / abs(values[0]))


# ---------------------------------------------------------------------------
# individual checks


def check_radial_exactness():
    """Omega = gamma reproduces beta^(1-2mu)/(2mu-1) in every mode."""
    from .nonlinear import solve_with_omega

    details, ok = [], True
    for mu in (0.6, 0.75, 1.0, 1.5):
        start = time.perf_counter()
        params = SolverParams(mu=mu, m=2, alpha=auto_alpha(mu), n_modes=8)
        sol, report = solve_with_omega(params.gamma, params)
        beta = sol.grid.nodes
        weight = beta ** (2 * mu - 1)
        exact = beta ** (1 - 2 * mu) / (2 * mu - 1)
        full = sol.full_psi()
        error = max(float(np.max(np.abs(full.mode(n) - (exact if n == 0 else 0.0)) * weight))
                    for n in full.modes)
        elapsed = time.perf_counter() - start
        ok &= report.converged and error <= 1e-10 and elapsed < 5.0
        details.append(f"mu={mu}: err {error:.1e}, {elapsed:.2f}s")
    return ok, "; ".join(details)


def check_spiral_streamline():
    """Radial streamline for c0 = 1, mu = 3/4 is theta = 1.5 r^(-4/3)."""
    from .measure_io import VorticityProfile
    from .nonlinear import solve_nonlinear
    from .physical import trace_streamline

    params = SolverParams(mu=0.75, m=2, alpha=0.1, n_modes=8)
    sol, _ = solve_nonlinear(VorticityProfile.density({0: 1.0}, 1), params)
    line = trace_streamline(0.0, sol, beta_range=(0.05, 20.0), count=2001)
    inside = (line.r >= 0.3) & (line.r <= 3.0)
    covered = line.r.min() <= 0.3 and line.r.max() >= 3.0
    error = float(np.max(np.abs(line.theta[inside] - 1.5 * line.r[inside] ** (-4.0 / 3.0))))
    return covered and error <= 1e-9, f"max |theta - 1.5 r^(-4/3)| = {error:.2e} on {inside.sum()} points"


def check_wronskian():
    """x W(x) is constant for ten random exponent pairs."""
    from .singular_ode import build_fundamental

    rng = np.random.default_rng(3)
    x = np.geomspace(0.01, 100.0, 401)
    worst = 0.0
    for _ in range(10):
        q1, q2 = rng.uniform(0.6, 5.0, 2)
        worst = max(worst, _relative_spread(build_fundamental(q1, q2).scaled_wronskian(x)))
    return worst <= 1e-6, f"worst relative variation {worst:.1e}"


def check_green_residual():
    """Green's-function solutions satisfy L y = f for admissible random data."""
    from .singular_ode import apply_singular_operator, build_fundamental, green_solve

    mu, alpha = 0.75, 0.1
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        q1 = rng.uniform(2 * mu - 1 + 0.1, 4.0)
        q2 = rng.uniform(2 * mu - 1 + alpha + 0.1, 4.0)
        prob = build_fundamental(q1, q2)
        amps, freqs, phases = rng.normal(size=4), rng.uniform(0.2, 1.5, 4), rng.uniform(0, 6, 4)

        def data(x, amps=amps, freqs=freqs, phases=phases):
            s = np.log(x)
            wave = sum(a * np.cos(k * s + p) for a, k, p in zip(amps, freqs, phases))
            return x ** (1 - 2 * mu) * (1 + x * x) ** (-alpha / 2) * wave

        x = prob.grid.nodes
        y = green_solve(prob, data, mu, alpha)
        residual = apply_singular_operator(prob, y) - data(x)
        weight = x ** (2 * mu - 1) * (1 + x * x) ** (alpha / 2)
        inner = slice(6, -6)
        rel = np.max(np.abs(residual * weight)[inner]) / np.max(np.abs(data(x) * weight))
        worst = max(worst, float(rel))
    return worst <= 1e-6, f"worst weighted relative residual {worst:.1e}"


def check_growth_exponent():
    """Fitted large-beta growth of the hypergeometric mode solution."""
    from .singular_ode import fitted_growth_exponent

    worst = 0.0
    for n in (2, 3):
        for mu in (0.75, 1.0, 1.5):
            expected = 2 * mu - 1 + math.sqrt(n * n * mu * mu - 2 * mu + 1)
            fitted = fitted_growth_exponent(n, mu, 5.0, 15.0)
            worst = max(worst, abs(fitted - expected) / expected)
    return worst <= 0.01, f"worst relative deviation {worst:.1e}"


def check_linearization():
    """Difference quotients of F converge to apply_L at first order."""
    from .linearized import StreamSolution, apply_L
    from .nonlinear import residual_F, weighted_residual

    params = SolverParams(mu=0.75, m=2, alpha=0.1, n_modes=16)
    grid, mu = params.grid, params.mu
    beta = grid.nodes
    s = np.log(beta)
    rng = np.random.default_rng(0)
    coeffs = {0: 0.1 * beta ** (1 - 2 * mu) * np.exp(-(s / 2) ** 2)}
    for n in params.modes[params.modes > 0]:
        amp = 0.1 * (rng.normal() + 1j * rng.normal())
        coeffs[int(n)] = amp * beta ** (1 - 2 * mu) * np.exp(-((s - 0.5) / 2) ** 2)
        coeffs[-int(n)] = np.conj(coeffs[int(n)])
    direction = SpectralField.from_dict(coeffs, params.m, grid)
    base = StreamSolution.radial(params)
    omega = params.gamma
    linear = apply_L(StreamSolution(params, direction))
    f_base = residual_F(base, omega)
    steps = (1e-2, 1e-3, 1e-4, 1e-5)
    errors = []
    for t in steps:
        shifted = residual_F(base.replace(psi=base.psi + direction.scale(t)), omega)
        diff = (shifted - f_base).scale(1.0 / t) - linear
        errors.append(weighted_residual(diff.values, diff.modes, grid, params))
    orders = np.log10(np.array(errors[:-1]) / np.array(errors[1:]))
    return bool(np.all(orders >= 0.9)), "orders " + ", ".join(f"{o:.3f}" for o in orders)


def check_linear_solver():
    """apply_L inverts solve_linearized on random admissible right-hand sides."""
    from .linearized import RhsDecomposition, apply_L, interior, solve_linearized, solve_mode_linearized

    params = SolverParams(mu=0.75, m=2, alpha=0.1, n_modes=8)
    grid, mu = params.grid, params.mu
    beta = grid.nodes
    cols = interior(grid.count)
    weight = beta ** (2 * mu)
    decay = (1 + beta * beta) ** (-params.alpha / 2)
    modes = np.arange(-8, 9, 2)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        f1, f2 = {}, {}
        for n in modes[modes >= 0]:
            a, b = rng.uniform(0.5, 2.0, 2)
            c1, c2 = rng.normal(size=2) + 1j * rng.normal(size=2)
            k = rng.uniform(0.0, 2.0)
            shape = beta**a / (1 + beta ** (a + b)) * decay
            f1[n] = c1 * beta ** (1 - 2 * mu) * shape * np.exp(1j * k * np.log(beta))
            f2[n] = c2 * beta ** (-2 * mu) * shape * np.cos(k * beta / (1 + beta))
            if n == 0:
                f1[n], f2[n] = f1[n].real + 0j, 0.0 * beta + 0j
            else:
                f1[-n], f2[-n] = np.conj(f1[n]), np.conj(f2[n])
        rhs = RhsDecomposition(SpectralField(modes, [f1[n] for n in modes], 2, grid),
                               SpectralField(modes, [f2[n] for n in modes], 2, grid))
        image = apply_L(solve_linearized(rhs, params))
        target = rhs.g_field()
        num = max(np.max(np.abs(image.mode(n) - target.mode(n))[cols] * weight[cols]) for n in modes)
        den = max(np.max(np.abs(target.mode(n))[cols] * weight[cols]) for n in modes)
        worst = max(worst, float(num / den))
    zero = np.zeros(grid.count)
    homogeneous = max(float(np.max(np.abs(solve_mode_linearized(n, (zero, zero), params)[0])))
                      for n in (0, 2, 4, 8))
    return (worst <= 1e-8 and homogeneous == 0.0,
            f"worst relative residual {worst:.1e}; homogeneous max {homogeneous:.1e}")


def check_perturbative_solve():
    """Perturbed constant profiles converge, stay monotone and survive grid doubling."""
    from .nonlinear import (derivative_samples, grid_doubling_check, sign_condition_report,
                            solve_with_omega)

    details, ok = [], True
    for m, n_modes in ((2, 16), (3, 18)):
        start = time.perf_counter()
        params = SolverParams(mu=0.75, m=m, alpha=0.1, n_modes=n_modes,
                              grid=RadialGrid(1e-3, 5.0, 2048))
        gamma = params.gamma
        omega = SpectralField.angular({0: gamma, m: 5e-4 * gamma, -m: 5e-4 * gamma}, m)
        sol, report = solve_with_omega(omega, params)
        signs = sign_condition_report(derivative_samples(sol), params.mu)
        doubling = grid_doubling_check(omega, params, sol, report)
        elapsed = time.perf_counter() - start
        case_ok = (report.converged and report.final_residual <= 1e-10
                   and report.iterations <= 12 and report.jacobian_max < 0
                   and all(signs.values())
                   and doubling.residual_change < 10 * params.tol_residual and elapsed < 60)
        ok &= case_ok
        details.append(f"m={m}: res {report.final_residual:.1e} in {report.iterations} it, "
                       f"jac max {report.jacobian_max:.3f}, doubling change "
                       f"{doubling.residual_change:.1e}, {elapsed:.1f}s")
    return ok, "; ".join(details)


def check_physical_consistency():
    """Coordinate roundtrip, vorticity integrability exponent and weak form."""
    from .linearized import StreamSolution
    from .physical import (BumpTestField, SolutionSampler, coord_forward, coord_inverse,
                           integrability_exponent, weak_residual)

    mu = 0.75
    params = SolverParams(mu=mu, m=2, alpha=0.3, n_modes=8)
    sol = StreamSolution.radial(params)
    sampler = SolutionSampler(sol)
    rng = np.random.default_rng(0)
    beta = np.exp(rng.uniform(math.log(1e-2), math.log(1e2), 1000))
    phi = rng.uniform(0, 2 * math.pi, 1000)
    r, theta = coord_forward(beta, phi, sampler)
    beta_back, phi_back = coord_inverse(r, theta, sampler)
    roundtrip = max(float(np.max(np.abs(beta_back / beta - 1))),
                    float(np.max(np.abs(np.angle(np.exp(1j * (phi_back - phi)))))))
    exponent = integrability_exponent(sol)
    expected = 2 - 1 / mu
    exponent_error = abs(exponent - expected) / expected
    weak = 0.0
    for center, radius in (((1.0, 0.5), 0.6), ((-0.8, 0.9), 0.5), ((0.3, -1.7), 0.8)):
        value, scale = weak_residual(sol, BumpTestField(center, radius), return_scale=True)
        weak = max(weak, abs(value) / scale)
    ok = roundtrip <= 1e-9 and exponent_error <= 0.01 and weak <= 1e-6
    return ok, (f"roundtrip {roundtrip:.1e}, exponent {exponent:.5f} vs {expected:.5f}, "
                f"weak residual {weak:.1e} of scale")


def check_initial_data():
    """Spectral identity of B and small-time convergence to the initial vorticity."""
    from .measure_io import VorticityProfile
    from .nonlinear import solve_nonlinear
    from .physical import initial_data, self_similar_sample

    params = SolverParams(mu=0.75, m=2, alpha=0.3, n_modes=16, grid=RadialGrid(1e-3, 5.0, 2048))
    profile = VorticityProfile.density({0: 1.0, 2: 1e-3}, 2)
    data = initial_data(profile, params)
    theta = np.linspace(0, 2 * math.pi, 64, endpoint=False)
    pointwise = float(np.max(np.abs(params.gamma**2 * data.b_profile(theta)
                                    + data.b_profile(theta, order=2)
                                    - data.angular_vorticity(theta))))
    defect = max(data.spectral_defect(), pointwise)
    sol, _ = solve_nonlinear(profile, params)
    rng = np.random.default_rng(1)
    angles, radii = rng.uniform(0, 2 * math.pi, 10), rng.uniform(0.3, 1.0, 10)
    points = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    errors = []
    for t in (1e-1, 1e-2, 1e-3):
        errors.append(max(abs(self_similar_sample(y, t, sol).vorticity - data.omega0(y))
                          / abs(data.omega0(y)) for y in points))
    monotone = all(a > b for a, b in zip(errors, errors[1:]))
    return (defect <= 1e-14 and monotone,
            f"spectral defect {defect:.1e}; errors " + ", ".join(f"{e:.1e}" for e in errors))


def check_measure_pipeline():
    """Mollified two-atom measures keep the mean, the dominant bound and solve."""
    from .measure_io import VorticityProfile, mollify
    from .nonlinear import check_dominant, solve_nonlinear

    params = SolverParams(mu=0.75, m=2, alpha=0.1, n_modes=16,
                          grid=RadialGrid(1e-3, 5.0, 2048), tol_residual=1e-9)
    measure = VorticityProfile.measure([(0.0, 1e-3), (math.pi, 1e-3)], fold=2, background=1.0)
    ok = check_dominant(measure, 2, params.eps_dominant)
    details = []
    for count in (4, 8, 16):
        smooth = mollify(measure, count)
        same_mean = smooth.mean() == measure.mean()
        transfer = (smooth.perturbation_l1() <= measure.perturbation_l1() + 1e-15
                    and check_dominant(smooth, 2, params.eps_dominant))
        _, report = solve_nonlinear(smooth, params)
        ok &= same_mean and transfer and report.converged and report.final_residual <= 1e-9
        details.append(f"N={count}: mean kept {same_mean}, dominant {transfer}, "
                       f"res {report.final_residual:.1e}")
    return ok, "; ".join(details)


CHECKS = {
    1: ("radial exactness", 20.0, check_radial_exactness),
    2: ("spiral streamline", 10.0, check_spiral_streamline),
    3: ("Wronskian law", 1.0, check_wronskian),
    4: ("Green residual", 5.0, check_green_residual),
    5: ("hypergeometric growth exponent", 2.0, check_growth_exponent),
    6: ("linearization consistency", 10.0, check_linearization),
    7: ("linear solver correctness", 30.0, check_linear_solver),
    8: ("perturbative solve", 120.0, check_perturbative_solve),
    9: ("physical consistency", 30.0, check_physical_consistency),
    10: ("initial data", 10.0, check_initial_data),
    11: ("measure pipeline", 180.0, check_measure_pipeline),
}


def run_check(number):
    title, budget, func = CHECKS[number]
    start = time.perf_counter()
    passed, detail = func()
    elapsed = time.perf_counter() - start
    if elapsed > budget:
        passed, detail = False, f"{detail}; over time budget"
    return CheckResult(number, title, bool(passed), detail, elapsed, budget)


def run_all(numbers=None):
    return [run_check(n) for n in (numbers or sorted(CHECKS))]
