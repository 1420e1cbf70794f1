"""Nonlinear residual ``F(psi, Omega)`` and the frozen-Jacobian fixed-point solver.

With subscripts denoting derivatives in the ``(beta, phi)`` coordinates and
``d_varphi = d_phi - d_beta``::

    N2 = (psi_bv psi_f - psi_bf psi_v) / (2 psi_b)
    N1 = 2 psi_b psi_v / psi_bv - (psi_bf / psi_bv) N2
    N3 = psi_bv psi_v^(-1/(2mu)) / (2mu)
    F  = d_varphi N1 + d_phi N2 + N3 Omega(phi)

(``b = beta``, ``f = phi``, ``v = varphi``).  The products are formed on a
collocation grid with a two-fold dealiasing margin and analysed back into
theta-modes.  The radial part ``c beta^(1-2mu)`` is handled in closed form so
that the radial family is an exact discrete root.

The mean mode is iterated in its integrated form ``E0 = N1_0 + I[(N3 Omega)_0]``
where ``I`` inverts ``d_varphi`` with decay at infinity; all other modes use
the pointwise residual.  The radial mode is only ever corrected through the
grid part, so ``singular_coeff`` stays at its initial value.
"""

import functools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import DegenerateStateError, NonConvergenceError, PreconditionError
from .linearized import (INTERIOR_MARGIN, ModeSystem, RadialModeSystem, StreamSolution,
                         interior)
from .logdiff import integrate_from_right, log_derivative, tail_log_integral
from .spectral import Collocation, SpectralField

# iterations stop early when the residual exceeds this multiple of the initial one
DIVERGENCE_FACTOR = 1e3


@functools.lru_cache(maxsize=16)
def collocation_for(fold, n_modes, grid):
    return Collocation(fold, n_modes, grid)


# ---------------------------------------------------------------------------
# derivatives and nonlinear terms


@dataclass(frozen=True)
class DerivativeSamples:
    """Physical samples (shape ``(angles, nodes)``) of the first derivatives of psi."""

    phi: np.ndarray
    beta: np.ndarray
    d_beta: np.ndarray
    d_phi: np.ndarray
    d_varphi: np.ndarray
    d_beta_phi: np.ndarray
    d_beta_varphi: np.ndarray


def derivative_coefficients(psi_values, modes, grid):
    """Theta-coefficients of psi_b, psi_f, psi_v, psi_bf, psi_bv for the grid part."""
    beta = grid.nodes
    step = grid.log_step
    n = 1j * np.asarray(modes)[:, None]
    d1 = log_derivative(psi_values, step)
    d2 = log_derivative(d1, step)
    d_beta = d1 / beta + n * psi_values
    d_varphi = -d1 / beta
    return {
        "d_beta": d_beta,
        "d_phi": n * psi_values,
        "d_varphi": d_varphi,
        "d_beta_phi": n * d_beta,
        "d_beta_varphi": -(d2 - d1) / beta**2 + n * d_varphi,
    }


def singular_derivatives(coefficient, mu, beta):
    """Derivatives of the radial power ``c beta^(1-2mu)`` (same keys as above)."""
    c = coefficient
    d_beta = c * (1 - 2 * mu) * beta ** (-2 * mu)
    zero = np.zeros_like(beta)
    return {
        "d_beta": d_beta,
        "d_phi": zero,
        "d_varphi": -d_beta,
        "d_beta_phi": zero,
        "d_beta_varphi": -2 * mu * c * (2 * mu - 1) * beta ** (-2 * mu - 1),
    }


def derivative_samples(sol, colloc=None):
    """Synthesize every derivative of the full stream function on the collocation grid."""
    params = sol.params
    colloc = colloc or collocation_for(params.m, params.n_modes, sol.grid)
    values = colloc.field_values(sol.psi)
    grid_part = derivative_coefficients(values, colloc.modes, sol.grid)
    radial = singular_derivatives(complex(sol.singular_coeff).real, params.mu, sol.grid.nodes)
    samples = {}
    for key, coeff in grid_part.items():
        samples[key] = colloc.synthesize(coeff).real + radial[key][None, :]
    return DerivativeSamples(colloc.phi, sol.grid.nodes, **samples)


def sign_condition_report(deriv, mu, margin=0):
    """Which of the three coordinate sign conditions hold at every sample.

    ``beta^(2mu) psi_v > 0``, ``beta^(2mu) psi_b < 0`` and
    ``beta^(2mu+1) psi_bv < 0``.
    """
    cols = slice(margin, deriv.beta.size - margin) if margin else slice(None)
    return {
        "psi_varphi_positive": bool(np.all(deriv.d_varphi[:, cols] > 0)),
        "psi_beta_negative": bool(np.all(deriv.d_beta[:, cols] < 0)),
        "psi_beta_varphi_negative": bool(np.all(deriv.d_beta_varphi[:, cols] < 0)),
    }


def jacobian_extrema(deriv, mu):
    """Extrema of ``psi_bv / (2 mu r)`` with ``r = sqrt(-psi_b / mu)``."""
    r = np.sqrt(np.maximum(-deriv.d_beta / mu, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        det = deriv.d_beta_varphi / (2 * mu * r)
    return float(np.nanmin(det)), float(np.nanmax(det))


def _require_signs(deriv, mu):
    report = sign_condition_report(deriv, mu)
    if not all(report.values()):
        failed = [k for k, ok in report.items() if not ok]
        raise DegenerateStateError(
            f"coordinate sign conditions violated: {', '.join(failed)}")


@dataclass(frozen=True)
class NonlinearTerms:
    n1: SpectralField
    n2: SpectralField
    n3: SpectralField


def _pointwise_terms(deriv, mu):
    b, f, v = deriv.d_beta, deriv.d_phi, deriv.d_varphi
    bf, bv = deriv.d_beta_phi, deriv.d_beta_varphi
    n2 = (bv * f - bf * v) / (2.0 * b)
    n1 = 2.0 * b * v / bv - (bf / bv) * n2
    n3 = bv * v ** (-1.0 / (2.0 * mu)) / (2.0 * mu)
    return n1, n2, n3


def nonlinear_terms(sol):
    """``(N1, N2, N3)`` of the full stream function as theta-mode fields."""
    params = sol.params
    colloc = collocation_for(params.m, params.n_modes, sol.grid)
    deriv = derivative_samples(sol, colloc)
    _require_signs(deriv, params.mu)
    fields = [SpectralField(colloc.modes, colloc.analyze(t), params.m, sol.grid)
              for t in _pointwise_terms(deriv, params.mu)]
    return NonlinearTerms(*fields)


# ---------------------------------------------------------------------------
# residual


@dataclass(frozen=True)
class ResidualParts:
    """Residual in pointwise form (all modes) plus the integrated mean mode."""

    modes: np.ndarray
    values: np.ndarray      # theta-coefficients of F on the grid
    mean_integrated: np.ndarray  # E0 with d_varphi E0 = F_0
    deriv: DerivativeSamples


def _omega_field(omega, params):
    if isinstance(omega, SpectralField):
        return omega
    return SpectralField.angular({0: float(omega)}, params.m)


def _radial_constants(coefficient, mu, omega_mean):
    """Closed-form radial parts: N1 coefficient, N3 Omega_0 coefficient."""
    c = coefficient
    n1_coeff = c * (2 * mu - 1) / mu
    n3_coeff = -((c * (2 * mu - 1)) ** (1 - 1 / (2 * mu))) * omega_mean
    return n1_coeff, n3_coeff


def residual_parts(sol, omega, params=None):
    params = params or sol.params
    mu = params.mu
    grid = sol.grid
    beta = grid.nodes
    step = grid.log_step
    omega = _omega_field(omega, params)
    colloc = collocation_for(params.m, params.n_modes, grid)
    deriv = derivative_samples(sol, colloc)
    _require_signs(deriv, mu)
    n1, n2, n3 = _pointwise_terms(deriv, mu)
    c = complex(sol.singular_coeff).real
    omega_mean = omega.coefficient(0).real
    n1_coeff, n3_coeff = _radial_constants(c, mu, omega_mean)
    radial_n1 = n1_coeff * beta ** (1 - 2 * mu)
    source = n3 * colloc.angular_samples(omega).real
    n1_hat = colloc.analyze(n1 - radial_n1[None, :])
    n2_hat = colloc.analyze(n2)
    source_hat = colloc.analyze(source)
    modes = colloc.modes
    values = (-log_derivative(n1_hat, step) / beta[None, :]
              + 1j * modes[:, None] * n2_hat + source_hat)
    zero = int(np.flatnonzero(modes == 0)[0])
    radial_source = n3_coeff * beta ** (-2 * mu)
    values[zero] += n1_coeff * (2 * mu - 1) * beta ** (-2 * mu)
    # integrated mean mode: E0 = N1_0 + I[g] with d_varphi I[g] = g (decay at infinity)
    deviation = source_hat[zero] - radial_source
    integrand = beta * deviation
    # a deviation at round-off level of the radial source is treated as zero
    scale = np.max(np.abs(beta * radial_source)) if n3_coeff else 1.0
    if np.max(np.abs(integrand)) <= 1e-14 * scale:
        integrand = np.zeros_like(integrand)
    tail = tail_log_integral(integrand, step, max_exponent=1.0 - 2.0 * mu) if np.any(integrand) else 0.0
    integrated = integrate_from_right(integrand, step, tail)
    mean = n1_hat[zero] + integrated + (n1_coeff + n3_coeff / (2 * mu - 1)) * beta ** (1 - 2 * mu)
    return ResidualParts(modes, values, mean, deriv)


def residual_F(sol, omega, params=None):
    """``F(psi, Omega)`` as theta-mode field on the solution grid."""
    params = params or sol.params
    parts = residual_parts(sol, omega, params)
    return SpectralField(parts.modes, parts.values, params.m, sol.grid)


def weighted_residual(values, modes, grid, params, margin=INTERIOR_MARGIN):
    """``max beta^(2mu) |F|`` over the collocation angles and interior nodes."""
    colloc = collocation_for(params.m, params.n_modes, grid)
    aligned = np.zeros((colloc.modes.size, grid.count), dtype=complex)
    lookup = {int(n): k for k, n in enumerate(colloc.modes)}
    for k, n in enumerate(modes):
        if int(n) in lookup:
            aligned[lookup[int(n)]] = values[k]
    samples = colloc.synthesize(aligned)
    weighted = np.abs(samples) * grid.nodes[None, :] ** (2 * params.mu)
    return float(np.max(weighted[:, interior(grid.count, margin)]))


def residual_norm(sol, omega, params=None):
    params = params or sol.params
    parts = residual_parts(sol, omega, params)
    return weighted_residual(parts.values, parts.modes, sol.grid, params)


# ---------------------------------------------------------------------------
# frozen Jacobian


class FrozenJacobian:
    """Per-mode factorizations of the linearized operator at the radial profile.

    Left boundary rows use the exponent ``1 - 2mu`` of the generic small-beta
    behaviour of the residual (``beta^(-2mu)``), so corrections follow the
    particular power ``beta^(1-2mu)`` near ``beta_min``.
    """

    def __init__(self, params, grid=None):
        self.params = params
        self.grid = grid or params.grid
        exponent = 1.0 - 2.0 * params.mu
        self.systems = {}
        for n in params.modes:
            n = int(n)
            if n == 0:
                self.systems[n] = RadialModeSystem(params, self.grid, left_exponent=exponent)
            else:
                self.systems[n] = ModeSystem(n, params, self.grid, left_exponent=exponent)

    def correction(self, parts):
        """Solve ``L dpsi = F`` mode by mode (ascending ``|n|``)."""
        rows = {}
        lookup = {int(n): k for k, n in enumerate(parts.modes)}
        for n in sorted(self.systems, key=lambda k: (abs(k), k)):
            if n == 0:
                rows[n] = self.systems[n].solve_f1(parts.mean_integrated)
            else:
                rows[n] = self.systems[n].solve_g(parts.values[lookup[n]])
        modes = self.params.modes
        return SpectralField(modes, [rows[int(n)] for n in modes], self.params.m, self.grid)


# ---------------------------------------------------------------------------
# reports and the solver


@dataclass
class SolveReport:
    iterations: int
    residual_history: list
    converged: bool
    dominant_ok: bool
    truncation_estimate: float = float("nan")
    jacobian_max: float = float("nan")
    sign_conditions_ok: bool = True
    message: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def final_residual(self):
        return self.residual_history[-1]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def truncation_estimate(sol):
    """Weighted size of the top quarter of retained modes relative to the whole field."""
    psi = sol.psi
    modes = psi.modes
    top = np.max(np.abs(modes)) if modes.size else 0
    weight = sol.grid.nodes ** (2 * sol.params.mu - 1)
    scale = abs(sol.singular_coeff) + np.max(np.abs(psi.values * weight)) if psi.values.size else 1.0
    high = np.abs(modes) > 0.75 * top
    if not np.any(high) or top == 0:
        return 0.0
    return float(np.max(np.abs(psi.values[high] * weight)) / max(scale, 1e-300))


def check_dominant(profile, m, eps):
    """Dominant condition ``|P_neq w|_L1 <= eps m^(1/2) |P_0 w|``."""
    mean = profile.mean()
    perturbation = profile.perturbation_l1()
    if mean == 0:
        if perturbation > 0:
            import warnings
            warnings.warn("profile has zero mean; the dominant condition cannot hold")
            return False
        return True
    return bool(perturbation <= eps * math.sqrt(m) * abs(mean))


def normalize_profile(profile, mu, n_max=None):
    """Rescale the profile to unit-normalized data; returns ``(Omega, time_rescale)``.

    ``w1 = (c0 / A) w`` with ``A`` the mean and ``c0 = gamma mu^(-1/(2mu))``;
    ``Omega = mu^(1/(2mu)) w1``; physical fields of the original data follow
    from ``v(y, t) = (A / c0) v1(y, (A / c0) t)``.
    """
    gamma = 2.0 - 1.0 / mu
    mean = profile.mean()
    if mean == 0:
        raise PreconditionError("normalization impossible: the profile has zero mean")
    if mean < 0:
        raise PreconditionError("normalization needs a positive mean vorticity")
    c0 = gamma * mu ** (-1.0 / (2.0 * mu))
    factor = mu ** (1.0 / (2.0 * mu)) * c0 / mean
    coeffs = {n: factor * a for n, a in profile.coefficients(n_max).items()}
    coeffs[0] = gamma
    return SpectralField.angular(coeffs, profile.fold), mean / c0


def _report(history, converged, dominant_ok, sol=None, message=""):
    report = SolveReport(len(history), list(history), converged, dominant_ok, message=message)
    if sol is not None:
        report.truncation_estimate = truncation_estimate(sol)
    return report


def _finalize(report, sol, parts):
    mu = sol.params.mu
    signs = sign_condition_report(parts.deriv, mu)
    report.sign_conditions_ok = all(signs.values())
    report.extras["sign_conditions"] = signs
    report.jacobian_max = jacobian_extrema(parts.deriv, mu)[1]


def solve_with_omega(omega, params, *, dominant_ok=True, newton=False, time_rescale=1.0,
                     profile=None, jacobian=None, callback=None):
    """Frozen-Jacobian iteration ``psi <- psi - L^(-1) F(psi, Omega)`` from the radial profile."""
    omega = _omega_field(omega, params)
    grid = params.grid
    sol = StreamSolution.radial(params, omega=omega).replace(
        time_rescale=time_rescale, profile=profile)
    history = []
    frozen = jacobian
    newton_state = None
    for _ in range(params.max_iter + 1):
        try:
            parts = residual_parts(sol, omega, params)
        except DegenerateStateError as exc:
            report = _report(history or [float("inf")], False, dominant_ok, sol, str(exc))
            report.sign_conditions_ok = False
            exc.report = report
            raise
        residual = weighted_residual(parts.values, parts.modes, grid, params)
        history.append(residual)
        if callback:
            callback(len(history), residual)
        if residual <= params.tol_residual:
            report = _report(history, True, dominant_ok, sol, "converged")
            _finalize(report, sol, parts)
            return sol, report
        if not math.isfinite(residual) or residual > DIVERGENCE_FACTOR * history[0]:
            break
        if len(history) > params.max_iter:
            break
        frozen = frozen or FrozenJacobian(params, grid)
        if newton:
            newton_state = newton_state or _NewtonStep(frozen, omega, params)
            delta = newton_state.step(sol, parts)
        else:
            delta = frozen.correction(parts)
        sol = sol.replace(psi=sol.psi - delta)
    report = _report(history, False, dominant_ok, sol,
                     f"no convergence: residual {history[-1]:.3e} after {len(history)} evaluations")
    raise NonConvergenceError(report.message, report)


def solve_nonlinear(omega_profile, params, *, newton=False, callback=None):
    """Solve for the stream function generated by a vorticity profile.

    The profile is normalized (see :func:`normalize_profile`); the dominant
    condition is evaluated and reported but does not block the attempt.
    Returns ``(StreamSolution, SolveReport)``; raises
    :class:`NonConvergenceError` or :class:`DegenerateStateError`, each
    carrying the report.
    """
    if isinstance(omega_profile, SpectralField):
        omega, rescale, profile = omega_profile, 1.0, None
        dominant = _omega_dominant(omega, params)
    else:
        profile = omega_profile
        if profile.fold % params.m and params.m % profile.fold:
            raise PreconditionError(
                f"profile fold {profile.fold} incompatible with solver fold {params.m}")
        omega, rescale = normalize_profile(profile, params.mu, params.n_modes)
        omega = SpectralField.angular(
            {int(n): omega.coefficient(n) for n in omega.modes if n % params.m == 0
             and abs(n) <= params.n_modes}, params.m)
        dominant = check_dominant(profile, params.m, params.eps_dominant)
    return solve_with_omega(omega, params, dominant_ok=dominant, newton=newton,
                            time_rescale=rescale, profile=profile, callback=callback)


def _omega_dominant(omega, params, samples=4096):
    angles = np.linspace(0, 2 * math.pi, samples, endpoint=False)
    values = omega.evaluate(angles).real
    mean = omega.coefficient(0).real
    l1 = float(np.mean(np.abs(values - mean)) * 2 * math.pi)
    return bool(l1 <= params.eps_dominant * math.sqrt(params.m) * abs(mean))


class _NewtonStep:
    """GMRES on the frozen-preconditioned Jacobian ``S J`` (directional differences)."""

    def __init__(self, frozen, omega, params, epsilon=1e-7):
        self.frozen = frozen
        self.omega = omega
        self.params = params
        self.epsilon = epsilon

    def step(self, sol, parts):
        base = self.frozen.correction(parts).values
        shape = base.shape
        scale = max(np.max(np.abs(sol.psi.values)), abs(sol.singular_coeff))

        def apply(vector):
            direction = vector.reshape(shape)
            norm = np.max(np.abs(direction))
            if norm == 0:
                return np.zeros_like(vector)
            t = self.epsilon * scale / norm
            shifted = sol.replace(psi=sol.psi + sol.psi.with_values(t * direction))
            moved = self.frozen.correction(residual_parts(shifted, self.omega, self.params)).values
            return ((moved - base) / t).ravel()

        size = base.size
        operator = spla.LinearOperator((size, size), matvec=apply, dtype=complex)
        solution, _ = spla.gmres(operator, base.ravel(), x0=base.ravel(), rtol=1e-10,
                                 restart=20, maxiter=5)
        return sol.psi.with_values(solution.reshape(shape))


# ---------------------------------------------------------------------------
# grid refinement check


@dataclass(frozen=True)
class GridDoublingResult:
    coarse_residual: float
    fine_residual: float
    residual_change: float
    solution_difference: float     # weighted max difference on the shared nodes
    fine_solution: StreamSolution
    fine_report: SolveReport


def grid_doubling_check(omega, params, coarse, coarse_report):
    """Re-solve on the grid with twice as many intervals and compare.

    The shared nodes of the two grids are every second fine node; the
    solution difference is ``max beta^(2mu-1) |psi_fine - psi_coarse|`` there.
    """
    fine_params = params.with_grid(params.grid.refined(2))
    fine, report = solve_with_omega(omega, fine_params)
    weight = params.grid.nodes ** (2 * params.mu - 1)
    cols = interior(params.grid.count)
    diff = max((float(np.max(np.abs((fine.psi.mode(n)[::2] - coarse.psi.mode(n)) * weight)[cols]))
                for n in params.modes), default=0.0)
    coarse_residual = coarse_report.final_residual
    return GridDoublingResult(coarse_residual, report.final_residual,
                              abs(report.final_residual - coarse_residual), diff, fine, report)
