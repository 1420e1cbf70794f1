"""The linearized operator about the radial profile and its inversion.

Stream functions are split as ``psi = c beta^(1 - 2mu) + psi_grid``: the
power ``beta^(1-2mu)`` (the radial profile direction) is carried exactly in
``singular_coeff`` while ``psi_grid`` lives on the radial grid as
theta-Fourier coefficients.  With ``D = beta d/dbeta`` and
``H = psi + (beta / 2mu) psi_beta`` one mode of the linearized operator reads

    L_n psi_n = [ (D^2 - mu^2 n^2) H_n + (gamma / 2) i n beta psi_n ] / (mu beta),
    H_n       = psi_n + (D psi_n + i n beta psi_n) / (2 mu).

Right-hand sides come as pairs ``(f1, f2)`` with
``G = d_varphi f1 + d_phi f2``; per mode ``G_n = -(D f1_n) / beta + i n f2_n``.

Mode ``n = 0`` is solved in its integrated form ``-(1/mu) D H_0 = f1_0``
(``H_0 = mu int_beta^inf f1_0(s) ds / s``) followed by the operator ``T_0``.
Modes ``|n| >= 2`` are solved as one banded two-point boundary-value problem
for the composed third-order operator, with three stencil rows replaced by
boundary conditions that remove the inadmissible power laws.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import NonConvergenceError, PreconditionError, UnsupportedModeError
from .logdiff import (FirstOrderSolver, factorize, local_exponent, log_derivative,
                      log_derivative_matrix, replace_rows, tail_log_integral)
from .singular_ode import TransportSolver
from .spectral import SpectralField

# nodes at each end excluded from residual and consistency checks (boundary rows
# and the stencils that touch them)
INTERIOR_MARGIN = 6


def interior(count, margin=INTERIOR_MARGIN):
    return slice(margin, count - margin)


# ---------------------------------------------------------------------------
# data types


def auxiliary_h_values(psi_values, modes, grid, mu):
    """``H = psi + (beta / 2mu)(psi_beta)`` for theta-coefficients (rows = modes)."""
    beta = grid.nodes
    d = log_derivative(psi_values, grid.log_step)
    return psi_values + (d + 1j * modes[:, None] * beta[None, :] * psi_values) / (2.0 * mu)


@dataclass(frozen=True)
class StreamSolution:
    """Stream function ``c beta^(1-2mu) + psi`` with its auxiliary field ``H``.

    ``psi`` and ``h`` hold the grid part only; the exact power carried by
    ``singular_coeff`` contributes ``c beta^(1-2mu) / (2 mu)`` to ``H``.
    ``omega`` is the angular datum Omega(phi); ``time_rescale`` is the Euler
    scaling factor applied when sampling physical fields.
    """

    params: object
    psi: SpectralField
    singular_coeff: complex = 0.0
    omega: SpectralField = None
    profile: object = None
    time_rescale: float = 1.0
    h: SpectralField = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.psi.grid is None:
            raise PreconditionError("stream solutions need a radial grid")
        h = auxiliary_h_values(self.psi.values, self.psi.modes, self.psi.grid, self.params.mu)
        object.__setattr__(self, "h", self.psi.with_values(h))

    @property
    def grid(self):
        return self.psi.grid

    @property
    def singular_h_coeff(self):
        return self.singular_coeff / (2.0 * self.params.mu)

    @classmethod
    def zero(cls, params, grid=None, omega=None):
        grid = grid or params.grid
        return cls(params, SpectralField.zeros(params.modes, params.m, grid), 0.0, omega)

    @classmethod
    def radial(cls, params, coefficient=None, omega=None, grid=None):
        """The radial profile ``coefficient * beta^(1-2mu)`` (default ``1/(2mu-1)``)."""
        mu = params.mu
        coefficient = 1.0 / (2 * mu - 1) if coefficient is None else coefficient
        if omega is None:
            omega = SpectralField.angular({0: params.gamma}, params.m)
        sol = cls.zero(params, grid, omega)
        return sol.replace(singular_coeff=coefficient)

    def replace(self, **changes):
        data = dict(params=self.params, psi=self.psi, singular_coeff=self.singular_coeff,
                    omega=self.omega, profile=self.profile, time_rescale=self.time_rescale)
        data.update(changes)
        return StreamSolution(**data)

    def full_psi(self):
        """``psi`` including the singular power, sampled on the grid."""
        beta = self.grid.nodes
        mu = self.params.mu
        extra = SpectralField([0], [self.singular_coeff * beta ** (1 - 2 * mu)],
                              self.psi.fold, self.grid)
        return self.psi + extra

    def full_h(self):
        beta = self.grid.nodes
        mu = self.params.mu
        extra = SpectralField([0], [self.singular_h_coeff * beta ** (1 - 2 * mu)],
                              self.psi.fold, self.grid)
        return self.h + extra


@dataclass(frozen=True)
class RhsDecomposition:
    """Right-hand side ``G = d_varphi F1 + d_phi F2`` given by the pair ``(F1, F2)``."""

    f1: SpectralField
    f2: SpectralField

    def bounded(self, mu):
        """Whether ``beta^(2mu-1) F1`` and ``beta^(2mu) F2`` are finite on the grid."""
        beta = self.f1.grid.nodes
        return bool(np.all(np.isfinite(self.f1.values * beta ** (2 * mu - 1)))
                    and np.all(np.isfinite(self.f2.values * beta ** (2 * mu))))

    def g_mode(self, n):
        return rhs_g_mode(n, self.f1.mode(n), self.f2.mode(n), self.f1.grid)

    def g_field(self):
        modes = np.union1d(self.f1.modes, self.f2.modes)
        return SpectralField(modes, [self.g_mode(n) for n in modes], self.f1.fold, self.f1.grid)


def rhs_g_mode(n, f1_n, f2_n, grid):
    """``G_n = -(D f1_n)/beta + i n f2_n``."""
    beta = grid.nodes
    return -log_derivative(np.asarray(f1_n, dtype=complex), grid.log_step) / beta + 1j * n * np.asarray(f2_n)


# ---------------------------------------------------------------------------
# T0 and the linear operator


def apply_t0_mode(h_n, n, mu, grid):
    """Solve ``F + (beta/2mu)(F_beta) = H`` (theta-mode ``n``) for the branch regular at 0.

    This is ``F = 2mu beta^(-2mu) int_0^beta s^(2mu-1) H ds`` at fixed phi;
    discretely the inverse of ``2mu + D + i n beta`` with the first stencil row
    replaced by the power-law value ``F = 2mu H / (2mu + p + i n beta)``.
    """
    h_n = np.asarray(h_n, dtype=complex)
    if not np.any(h_n):
        return np.zeros_like(h_n)
    beta = grid.nodes
    rate = 2.0 * mu + 1j * n * beta
    p = local_exponent(h_n, grid.log_step, "left") or 0.0
    p = max(p, 0.5 - 2.0 * mu)
    solver = FirstOrderSolver(rate, grid.count, grid.log_step, "left")
    return solver.solve(2.0 * mu * h_n, 2.0 * mu * h_n[0] / (2.0 * mu + p + 1j * n * beta[0]))


def apply_T0(h, mu):
    """Apply ``T0`` to every mode of the field ``h``."""
    values = [apply_t0_mode(h.mode(n), n, mu, h.grid) for n in h.modes]
    return h.with_values(values)


def linear_operator_values(psi_values, modes, grid, mu):
    """Mode-wise ``L psi`` for theta-coefficients (rows = modes), grid part only."""
    beta = grid.nodes
    gamma = 2.0 - 1.0 / mu
    step = grid.log_step
    n = modes[:, None]
    h = auxiliary_h_values(psi_values, modes, grid, mu)
    dd = log_derivative(log_derivative(h, step), step)
    return (dd - (mu * n) ** 2 * h + 0.5 * gamma * 1j * n * beta * psi_values) / (mu * beta)


def radial_direction_image(mu, beta):
    """``L(beta^(1-2mu)) = (2mu-1)^2 / (2 mu^2) beta^(-2mu)``."""
    return (2 * mu - 1) ** 2 / (2 * mu * mu) * beta ** (-2 * mu)


def apply_L(sol, params=None):
    """Linearized operator applied to a stream solution (singular part exact)."""
    params = params or sol.params
    mu = params.mu
    psi = sol.psi
    values = linear_operator_values(psi.values, psi.modes, psi.grid, mu)
    if sol.singular_coeff:
        zero = np.flatnonzero(psi.modes == 0)
        if zero.size:
            values[zero[0]] += sol.singular_coeff * radial_direction_image(mu, psi.grid.nodes)
        else:
            psi = psi.restrict(np.union1d(psi.modes, [0]))
            return apply_L(sol.replace(psi=psi), params)
    return psi.with_values(values)


# ---------------------------------------------------------------------------
# per-mode solvers


def _robin_row(d_matrix, exponent, node, count):
    """Row of ``(D - exponent)`` evaluated at ``node``."""
    row = d_matrix.getrow(node).toarray().ravel().astype(complex)
    row[node] -= exponent
    return row


class ModeSystem:
    """Factorized boundary-value problem for one mode ``|n| >= 2``.

    Rows ``2 .. N-2`` carry ``(D^2 - mu^2 n^2) A_n psi + (gamma/2) i n beta psi
    = mu beta G`` with ``A_n = 1 + (D + i n beta)/(2mu)``.  Row 0 and row 1
    impose ``(D - p) H = 0`` and ``(D - p) psi = 0`` at ``beta_min``, which
    remove the ``beta^(-mu|n|)`` and ``beta^(-2mu)`` branches (``p`` defaults
    to ``mu |n|``, the admissible power).  Row ``N-1`` imposes
    ``(D - q) H = 0`` at ``beta_max``, removing the growing branch (``q``
    defaults to ``-sqrt(n^2 mu^2 - 2mu + 1)``).
    """

    def __init__(self, n, params, grid=None, left_exponent=None, right_exponent=None):
        if abs(n) == 1:
            raise UnsupportedModeError("modes n = +-1 are excluded (no uniqueness)")
        if n == 0 or n % params.m:
            raise PreconditionError(f"mode {n} is not a nonzero multiple of m={params.m}")
        self.n = n
        self.params = params
        self.grid = grid or params.grid
        mu = params.mu
        count, step = self.grid.count, self.grid.log_step
        beta = self.grid.nodes
        d = log_derivative_matrix(count, step).astype(complex)
        eye = sp.identity(count, dtype=complex, format="csr")
        b = sp.diags(beta.astype(complex))
        a_n = eye + (d + 1j * n * b) / (2 * mu)
        self.a_matrix = a_n.tocsr()
        operator = d @ (d @ a_n) - (mu * n) ** 2 * a_n + 0.5 * params.gamma * 1j * n * b
        self.left_exponent = mu * abs(n) if left_exponent is None else left_exponent
        kappa = math.sqrt((n * mu) ** 2 - 2 * mu + 1)
        self.right_exponent = -kappa if right_exponent is None else right_exponent
        rows = {
            0: _robin_row(d, self.left_exponent, 0, count) @ a_n,
            1: _robin_row(d, self.left_exponent, 0, count),
            count - 1: _robin_row(d, self.right_exponent, count - 1, count) @ a_n,
        }
        rows = {k: np.asarray(v).ravel() for k, v in rows.items()}
        self._lu = factorize(replace_rows(operator, rows), f"mode n={n}")
        self._scale = mu * beta

    def solve_g(self, g_n):
        """Mode ``psi_n`` with ``L_n psi_n = G_n`` on rows ``2..N-2``."""
        rhs = self._scale * np.asarray(g_n, dtype=complex)
        rhs[[0, 1, -1]] = 0.0
        return self._lu.solve(rhs)

    def h_of(self, psi_n):
        return self.a_matrix @ psi_n


class RadialModeSystem:
    """Integrated mode-0 problem ``-(1/mu) D(A_0 psi) = f1`` with two boundary rows.

    Row ``N-1`` sets ``H(beta_max) = mu int_{beta_max}^inf f1 ds/s`` from a
    power-law extrapolation of ``f1``; row 0 selects ``psi = T0 H`` through
    ``psi = 2mu H / (2mu + p)`` with ``p`` the local exponent of ``H`` at
    ``beta_min`` (defaulting to the radial power ``1 - 2mu``).
    """

    def __init__(self, params, grid=None, left_exponent=None):
        self.params = params
        self.grid = grid or params.grid
        mu = params.mu
        count, step = self.grid.count, self.grid.log_step
        d = log_derivative_matrix(count, step).astype(complex)
        a_0 = sp.identity(count, dtype=complex, format="csr") + d / (2 * mu)
        self.a_matrix = a_0.tocsr()
        operator = -(d @ a_0) / mu
        p = 1.0 - 2.0 * mu if left_exponent is None else left_exponent
        self.left_exponent = p
        first = -(2 * mu / (2 * mu + p)) * a_0.getrow(0).toarray().ravel()
        first[0] += 1.0
        last = a_0.getrow(count - 1).toarray().ravel()
        self._lu = factorize(replace_rows(operator, {0: first, count - 1: last}), "mode n=0")

    def tail_h(self, f1_0):
        """``mu int_{beta_max}^inf f1 ds / s`` from the power-law tail of ``f1``."""
        mu = self.params.mu
        return mu * tail_log_integral(f1_0, self.grid.log_step, max_exponent=1.0 - 2.0 * mu)

    def solve_f1(self, f1_0):
        f1_0 = np.asarray(f1_0, dtype=complex)
        rhs = f1_0.copy()
        rhs[0] = 0.0
        rhs[-1] = self.tail_h(f1_0)
        return self._lu.solve(rhs)

    def h_of(self, psi_0):
        return self.a_matrix @ psi_0


def _left_exponent_from_data(values, step, shift, fallback):
    if values[0] == 0 or values[1] == 0:
        return fallback
    return local_exponent(values, step, "left") + shift


def _right_exponent_from_data(g_n, step, n, mu):
    """Far-field power of the particular solution when the data still matter at ``beta_max``.

    ``G ~ beta^q`` forces ``H ~ beta^(q+1)``; when that decays more slowly than
    the homogeneous branch ``beta^(-kappa)`` it dominates the tail and the
    boundary row must follow it.  Otherwise the homogeneous power is kept.
    """
    if g_n[-1] == 0 or g_n[-2] == 0:
        return None
    power = local_exponent(g_n, step, "right") + 1.0
    kappa = math.sqrt((n * mu) ** 2 - 2 * mu + 1)
    return power if -kappa < power < 0.0 else None


def solve_mode_linearized(n, rhs_mode, params, grid=None):
    """Solve one mode of ``L psi = d_varphi f1 + d_phi f2``; returns ``(psi_n, H_n)``.

    Boundary exponents follow the data: where the right-hand side is nonzero
    at an end its local power law fixes the boundary relation, otherwise the
    admissible homogeneous power is used.
    """
    grid = grid or params.grid
    f1_n, f2_n = (np.asarray(v, dtype=complex) for v in rhs_mode)
    mu = params.mu
    if abs(n) == 1:
        raise UnsupportedModeError("modes n = +-1 are excluded (no uniqueness)")
    if n % params.m:
        raise PreconditionError(f"mode {n} is not a multiple of m={params.m}")
    if n == 0:
        if not np.any(f1_n):
            zero = np.zeros(grid.count, dtype=complex)
            return zero, zero.copy()
        p_f1 = _left_exponent_from_data(f1_n, grid.log_step, 0.0, 1.0 - 2.0 * mu)
        system = RadialModeSystem(params, grid, left_exponent=min(p_f1, 0.0))
        psi = system.solve_f1(f1_n)
        return psi, system.h_of(psi)
    g_n = rhs_g_mode(n, f1_n, f2_n, grid)
    if not np.any(g_n):
        zero = np.zeros(grid.count, dtype=complex)
        return zero, zero.copy()
    left = _left_exponent_from_data(g_n, grid.log_step, 1.0, None)
    right = _right_exponent_from_data(g_n, grid.log_step, n, mu)
    system = ModeSystem(n, params, grid, left_exponent=left, right_exponent=right)
    psi = system.solve_g(g_n)
    return psi, system.h_of(psi)


def solve_linearized(rhs, params, grid=None):
    """Assemble the mode solves of ``L psi = G`` into a stream solution.

    Modes are solved independently in ascending ``|n|`` order.
    """
    grid = grid or rhs.f1.grid
    modes = np.union1d(rhs.f1.modes, rhs.f2.modes)
    bad = modes[(modes % params.m != 0) | (np.abs(modes) == 1)]
    if bad.size:
        raise UnsupportedModeError(f"right-hand side has inadmissible modes {bad.tolist()}")
    psi_rows = {}
    for n in sorted(modes, key=lambda k: (abs(k), k)):
        psi_rows[int(n)], _ = solve_mode_linearized(int(n), (rhs.f1.mode(n), rhs.f2.mode(n)), params, grid)
    all_modes = np.union1d(modes, params.modes) if grid == params.grid else modes
    values = [psi_rows.get(int(n), np.zeros(grid.count, dtype=complex)) for n in all_modes]
    psi = SpectralField(all_modes, values, params.m, grid)
    return StreamSolution(params, psi, 0.0)


# ---------------------------------------------------------------------------
# high-frequency cross-check


@dataclass
class HighFrequencyResult:
    h: np.ndarray
    iterations: int
    update_ratios: list

    @property
    def contraction_estimate(self):
        return max(self.update_ratios) if self.update_ratios else 0.0


def _simplified_solve(n, f1_n, f2_n, mu, grid, solvers):
    """``H`` solving ``(D^2 - mu^2 n^2) H = -mu D f1 + i mu n beta f2`` via two transports.

    ``(D + mu n) Q1 = -(mu f1 + i beta f2)``, ``(D - mu n) Q2 = -(mu f1 - i beta f2)``
    and ``H = (Q1 + Q2) / 2``.
    """
    beta = grid.nodes
    plus, minus = solvers
    q1 = plus.solve(-(mu * f1_n + 1j * beta * f2_n))
    q2 = minus.solve(-(mu * f1_n - 1j * beta * f2_n))
    return 0.5 * (q1 + q2)


def highfreq_transport_solve(n, rhs_mode, params, grid=None, tol=1e-10, max_iter=None,
                             return_details=False):
    """Mode ``H_n`` from the transport splitting plus a fixed point for the coupling.

    With ``S`` the simplified (transport) solve, the mode equation is
    ``H = S(f1, f2) - (gamma / 2mu) S(0, T0 H)``; the correction
    ``Q = H - S(f1, f2)`` is iterated until its update falls below ``tol``
    relative to ``H``.  The contraction factor behaves like ``C / |n|``.
    """
    grid = grid or params.grid
    if abs(n) < 2:
        raise UnsupportedModeError(f"high-frequency path needs |n| >= 2, got {n}")
    max_iter = max_iter or params.max_iter
    mu, gamma = params.mu, params.gamma
    f1_n, f2_n = (np.asarray(v, dtype=complex) for v in rhs_mode)
    zero = np.zeros(grid.count, dtype=complex)
    if not (np.any(f1_n) or np.any(f2_n)):
        result = HighFrequencyResult(zero, 0, [])
        return result if return_details else zero
    solvers = (TransportSolver(n, mu, grid), TransportSolver(-n, mu, grid))
    base = _simplified_solve(n, f1_n, f2_n, mu, grid, solvers)
    correction = zero
    ratios = []
    previous = None
    for it in range(1, max_iter + 1):
        psi = apply_t0_mode(base + correction, n, mu, grid)
        new = -(gamma / (2 * mu)) * _simplified_solve(n, zero, psi, mu, grid, solvers)
        update = np.max(np.abs(new - correction))
        if previous:
            ratios.append(update / previous)
        previous = update
        correction = new
        if update <= tol * max(np.max(np.abs(base + correction)), 1e-300):
            h = base + correction
            result = HighFrequencyResult(h, it, ratios)
            return result if return_details else h
    raise NonConvergenceError(
        f"high-frequency iteration for n={n} did not contract within {max_iter} steps "
        f"(last update ratio {ratios[-1] if ratios else float('nan'):.3g})")
