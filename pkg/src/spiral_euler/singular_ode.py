"""Regular-singular ODE machinery for the per-mode problems.

Contents:

* power-law exponents of the third-order mode operator near ``beta = 0``;
* the transport solve ``(beta d/dbeta + mu n) Q = G``;
* a fundamental system of ``x^2 y'' + x y' - q(x) y = 0`` whose potential
  switches smoothly from ``q1^2`` (``x <= 1``) to ``q2^2`` (``x >= 2``), and
  the variation-of-constants solvers built on it;
* the confluent series ``2F2`` and the homogeneous mode solution regular at
  the origin.

In ``s = ln x`` the second-order operator reads ``y_ss - q(e^s) y``.  The
fundamental solutions are known in closed form outside ``[1, 2]``, so only
that interval is integrated numerically.
"""

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.integrate import solve_ivp, trapezoid

from .errors import DomainError, NumericalError, OutOfRangeError, PreconditionError
from .logdiff import FirstOrderSolver, interval_integrals, local_exponent, log_derivative
from .params import RadialGrid

# ---------------------------------------------------------------------------
# indicial analysis


class RootTriple(tuple):
    """Triple of indicial roots carrying a ``logarithmic`` (repeated root) flag."""

    def __new__(cls, roots, logarithmic):
        obj = super().__new__(cls, roots)
        obj.logarithmic = logarithmic
        return obj


def indicial_roots(n, mu):
    """Exponents ``lambda`` with ``beta^(2 mu) psi ~ beta^lambda`` near the origin.

    Returns ``(2mu + n mu, 0, 2mu - n mu)``; for ``n >= 2`` this order is
    already descending.  ``.logarithmic`` flags a repeated root, where one
    solution picks up a ``ln(beta)`` factor.
    """
    if not mu > 0.5:
        raise DomainError(f"mu={mu} must exceed 1/2")
    roots = (2 * mu + n * mu, 0.0, 2 * mu - n * mu)
    repeated = any(math.isclose(roots[i], roots[j], abs_tol=1e-12)
                   for i, j in ((0, 1), (1, 2), (0, 2)))
    return RootTriple(roots, repeated)


def inner_operator_symbol(n, mu, lam):
    """Value of the constant-coefficient inner mode operator on ``beta^(lam - 2 mu)``.

    Near the origin the mode operator reduces to ``(D^2 - mu^2 n^2)(1 + D / 2mu)``
    with ``D = beta d/dbeta``; on a power ``beta^p`` it multiplies by
    ``(p^2 - mu^2 n^2)(1 + p / 2mu)``.
    """
    p = lam - 2 * mu
    return (p * p - (mu * n) ** 2) * (1 + p / (2 * mu))


@dataclass(frozen=True)
class ModeOdeSystem:
    """Exponent data of the third-order ODE satisfied by one Fourier mode."""

    n: int
    mu: float
    indicial_roots: tuple
    hyp_params: tuple
    logarithmic: bool

    def indicial_polynomial(self, lam):
        return lam * (lam - (2 * self.mu + self.n * self.mu)) * (lam - (2 * self.mu - self.n * self.mu))


def mode_ode_system(n, mu):
    roots = indicial_roots(n, mu)
    disc = (n * mu) ** 2 - 2 * mu + 1
    root = math.sqrt(disc)
    return ModeOdeSystem(n, mu, tuple(roots), (n * mu + root, n * mu - root), roots.logarithmic)


# ---------------------------------------------------------------------------
# transport solve


def transport_mode_solve(n, g_hat, mu, grid):
    """Solve ``(beta d/dbeta + mu n) Q = G`` for one mode on ``grid``.

    For ``n >= 1`` the solution regular at the origin is selected, for
    ``n <= 0`` the one decaying at infinity (formulas with integrals from 0
    and to infinity respectively).  The solve is the exact discrete inverse
    of the fourth-order log-derivative with the stencil row at the
    integration start replaced by the power-law boundary value
    ``Q = G / (mu n + p)`` (exact when ``G ~ beta^p`` there).
    """
    g_hat = np.asarray(g_hat, dtype=complex)
    if n in (0, 1, -1):
        if np.any(g_hat != 0):
            raise PreconditionError(f"transport solve is undefined for mode n={n} with nonzero data")
        return np.zeros_like(g_hat)
    if not np.any(g_hat):
        return np.zeros_like(g_hat)
    return TransportSolver(n, mu, grid).solve(g_hat)


class TransportSolver:
    """Factorized transport operator for repeated solves of one mode."""

    def __init__(self, n, mu, grid, shift=0.0):
        self.n, self.mu, self.grid = n, mu, grid
        self.rate = mu * n + shift
        self.end = "left" if n >= 1 else "right"
        self._solver = FirstOrderSolver(self.rate, grid.count, grid.log_step, self.end)

    def boundary_value(self, g_hat):
        idx = 0 if self.end == "left" else -1
        if g_hat[idx] == 0:
            return 0.0
        p = local_exponent(g_hat, self.grid.log_step, self.end) or 0.0
        return g_hat[idx] / (self.rate + p)

    def solve(self, g_hat):
        g_hat = np.asarray(g_hat, dtype=complex)
        return self._solver.solve(g_hat, self.boundary_value(g_hat))


# ---------------------------------------------------------------------------
# fundamental system of x^2 y'' + x y' - q(x) y


def smoothstep(t):
    """Degree-9 smoothstep clipped to [0, 1]: C^4 at both ends.

    ``t^5 (126 - 420 t + 540 t^2 - 315 t^3 + 70 t^4)``; four continuous
    derivatives keep the composed fourth-order stencils accurate across the
    ends of the transition.
    """
    t = np.clip(t, 0.0, 1.0)
    return t**5 * (126.0 + t * (-420.0 + t * (540.0 + t * (-315.0 + 70.0 * t))))


def ode_grid():
    """Default radial grid for ODE work; its odd node count puts a node at x = 1."""
    return RadialGrid(1e-3, 1e3, 4097)


@dataclass(frozen=True)
class SingularOdeProblem:
    """Fundamental system ``{y1, y2}`` of ``x^2 y'' + x y' - q y = 0``.

    ``y1 = x^q1`` on ``(0, 1]`` and ``y2 = x^-q2`` on ``[2, inf)``; both are
    continued across the transition by a high-accuracy Runge-Kutta solve of
    the system for ``(y, x y')``.  ``wronskian_c`` is the constant value of
    ``x (y1 y2' - y2 y1')``.
    """

    q1: float
    q2: float
    grid: RadialGrid
    wronskian_c: float
    outer_coeffs: tuple  # y1 = c1 x^q2 + c2 x^-q2 for x >= 2
    inner_coeffs: tuple  # y2 = c3 x^-q1 + c4 x^q1 for x <= 1
    _y1_dense: object = field(repr=False, compare=False)
    _y2_dense: object = field(repr=False, compare=False)

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        return self.q1 ** 2 + (self.q2 ** 2 - self.q1 ** 2) * smoothstep(x - 1.0)

    def _evaluate(self, which, x):
        """Return ``(y, x y')`` of fundamental solution ``which`` at ``x``."""
        x = np.asarray(x, dtype=float)
        y = np.empty_like(x)
        z = np.empty_like(x)
        inner = x <= 1.0
        outer = x >= 2.0
        middle = ~(inner | outer)
        q1, q2 = self.q1, self.q2
        if which == 1:
            y[inner] = x[inner] ** q1
            z[inner] = q1 * y[inner]
            c1, c2 = self.outer_coeffs
            up, down = c1 * x[outer] ** q2, c2 * x[outer] ** -q2
            y[outer], z[outer] = up + down, q2 * (up - down)
            dense = self._y1_dense
        else:
            y[outer] = x[outer] ** -q2
            z[outer] = -q2 * y[outer]
            c3, c4 = self.inner_coeffs
            down, up = c3 * x[inner] ** -q1, c4 * x[inner] ** q1
            y[inner], z[inner] = down + up, q1 * (up - down)
            dense = self._y2_dense
        if np.any(middle):
            yz = dense(np.log(x[middle]))
            y[middle], z[middle] = yz[0], yz[1]
        return y, z

    def y1(self, x):
        return self._evaluate(1, x)[0]

    def y2(self, x):
        return self._evaluate(2, x)[0]

    def y1_log_derivative(self, x):
        """``x y1'(x)``."""
        return self._evaluate(1, x)[1]

    def y2_log_derivative(self, x):
        return self._evaluate(2, x)[1]

    def scaled_wronskian(self, x):
        """``x W(x) = y1 (x y2') - y2 (x y1')``; constant for exact solutions."""
        y1, z1 = self._evaluate(1, x)
        y2, z2 = self._evaluate(2, x)
        return y1 * z2 - y2 * z1

    @property
    def sampled(self):
        """``(y1, y2)`` sampled on the problem grid."""
        x = self.grid.nodes
        return self.y1(x), self.y2(x)


def build_fundamental(q1, q2, grid=None, rtol=1e-12):
    """Construct the fundamental system for inner/outer exponents ``q1, q2``."""
    if not (q1 > 0 and q2 > 0):
        raise DomainError(f"exponents must be positive, got q1={q1}, q2={q2}")
    grid = grid or ode_grid()
    q1, q2 = float(q1), float(q2)

    def potential(s):
        return q1 ** 2 + (q2 ** 2 - q1 ** 2) * float(smoothstep(math.exp(s) - 1.0))

    def rhs(s, yz):
        return (yz[1], potential(s) * yz[0])

    span = math.log(2.0)

    def integrate(start, stop, initial, label):
        sol = solve_ivp(rhs, (start, stop), initial, method="DOP853", rtol=rtol,
                        atol=1e-14 * max(abs(initial[0]), abs(initial[1])), dense_output=True)
        if not sol.success:
            raise NumericalError(f"integration of {label} over the transition failed: {sol.message}")
        return sol

    first = integrate(0.0, span, [1.0, q1], "y1")
    y_end, z_end = first.y[:, -1]
    scale = 2.0 ** q2
    c1 = (y_end + z_end / q2) / (2.0 * scale)
    c2 = (y_end - z_end / q2) * scale / 2.0

    y_start = 2.0 ** -q2
    second = integrate(span, 0.0, [y_start, -q2 * y_start], "y2")
    y_one, z_one = second.y[:, -1]
    c3 = (y_one - z_one / q1) / 2.0
    c4 = (y_one + z_one / q1) / 2.0
    wronskian = -2.0 * q1 * c3
    if not wronskian < 0:
        raise NumericalError(f"Wronskian constant {wronskian} is not negative")
    return SingularOdeProblem(q1, q2, grid, wronskian, (c1, c2), (c3, c4),
                              first.sol, second.sol)


# ---------------------------------------------------------------------------
# variation of constants

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _check_exponents(prob, mu, alpha):
    if not prob.q1 - 2 * mu + 1 > 0:
        raise DomainError(f"exponent condition q1 - 2mu + 1 > 0 fails "
                          f"(q1={prob.q1}, mu={mu})")
    if not prob.q2 - 2 * mu - alpha + 1 > 0:
        raise DomainError(f"exponent condition q2 - 2mu - alpha + 1 > 0 fails "
                          f"(q2={prob.q2}, mu={mu}, alpha={alpha})")


def _cumulative_from_right(pieces, tail):
    """``I_i = sum of interval integrals right of node i, plus the tail``."""
    return np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]]) + tail


def _cumulative_from_left(pieces, tail):
    return np.concatenate([[0.0], np.cumsum(pieces)]) + tail


def _power_tail(values, step, end, bound):
    """Integral in ``s`` of a power law through the two end values beyond the grid.

    ``bound`` is the decay requirement: the exponent must be negative at the
    right end and positive at the left end; otherwise the tail is dropped.
    """
    idx = -1 if end == "right" else 0
    if values[idx] == 0:
        return 0.0
    p = local_exponent(values, step, end)
    if p is None:
        return 0.0
    if end == "right":
        p = min(p, -bound)
        return -values[idx] / p
    p = max(p, bound)
    return values[idx] / p


def _tail_bounds(prob, mu, alpha):
    """Decay rates guaranteed by the exponent conditions for admissible data.

    ``y2 f`` decays at least like ``x^-(q2 + 2mu - 1 + alpha)`` at infinity
    and ``y1 f`` vanishes at least like ``x^(q1 + 1 - 2mu)`` at zero.
    """
    return prob.q2 + 2 * mu - 1 + alpha, prob.q1 + 1 - 2 * mu


def _interval_quadrature(func, grid):
    """Per-interval 8-point Gauss-Legendre integrals in ``s`` of ``func(x)``."""
    s = grid.log_nodes
    half = 0.5 * grid.log_step
    mids = 0.5 * (s[1:] + s[:-1])
    pts = mids[:, None] + half * _GAUSS_NODES[None, :]
    vals = func(np.exp(pts))
    return half * (vals @ _GAUSS_WEIGHTS)


def green_solve(prob, f, mu, alpha):
    """Solve ``x^2 y'' + x y' - q y = f`` by variation of constants.

    ``f`` is either an array sampled on ``prob.grid`` or a callable.  Returns
    ``y = u1 y1 + u2 y2`` with ``u1 = (1/C) int_x^inf y2 f dt/t`` and
    ``u2 = (1/C) int_0^x y1 f dt/t`` sampled on the grid.  Callables are
    integrated with Gauss-Legendre rules on every grid interval (exact to
    rounding for data that are smooth between nodes); arrays use the local
    fourth-order interval rule.  Both are local, so the coefficient
    multiplying a growing fundamental solution is exactly zero beyond the
    support of the data.  Contributions
    beyond the grid are extrapolated as power laws.
    """
    _check_exponents(prob, mu, alpha)
    right_bound, left_bound = _tail_bounds(prob, mu, alpha)
    grid = prob.grid
    x = grid.nodes
    y1, y2 = prob.sampled
    c = prob.wronskian_c
    if callable(f):
        fx = np.asarray(f(x), dtype=complex)
        if not np.any(fx) and not np.any(_interval_quadrature(lambda t: np.asarray(f(t), dtype=complex), grid)):
            return np.zeros(grid.count, dtype=complex)
        pieces1 = _interval_quadrature(lambda t: prob.y2(t) * f(t), grid)
        pieces2 = _interval_quadrature(lambda t: prob.y1(t) * f(t), grid)
        tail1 = _power_tail(y2 * fx, grid.log_step, "right", right_bound)
        tail2 = _power_tail(y1 * fx, grid.log_step, "left", left_bound)
        right = _cumulative_from_right(pieces1, tail1)
        left = _cumulative_from_left(pieces2, tail2)
    else:
        fx = np.asarray(f, dtype=complex)
        if not np.any(fx):
            return np.zeros(grid.count, dtype=complex)
        g1, g2 = y2 * fx, y1 * fx
        right = _cumulative_from_right(interval_integrals(g1, grid.log_step),
                                       _power_tail(g1, grid.log_step, "right", right_bound))
        left = _cumulative_from_left(interval_integrals(g2, grid.log_step),
                                     _power_tail(g2, grid.log_step, "left", left_bound))
    return (right * y1 + left * y2) / c


def green_solve_derivform(prob, f_tilde, mu, alpha):
    """Weak solution of ``x^2 y'' + x y' - q y = x (d/dx) f_tilde``.

    Uses ``u1 = -(1/C) int_x^inf y2' f_tilde dt`` and
    ``u2 = -(1/C) int_0^x y1' f_tilde dt``, which never differentiate the
    data.  ``f_tilde`` is sampled on ``prob.grid``.
    """
    _check_exponents(prob, mu, alpha)
    right_bound, left_bound = _tail_bounds(prob, mu, alpha)
    grid = prob.grid
    x = grid.nodes
    ft = np.asarray(f_tilde, dtype=complex)
    if not np.any(ft):
        return np.zeros(grid.count, dtype=complex)
    y1, y2 = prob.sampled
    z1, z2 = prob.y1_log_derivative(x), prob.y2_log_derivative(x)
    g1, g2 = z2 * ft, z1 * ft
    right = _cumulative_from_right(interval_integrals(g1, grid.log_step),
                                   _power_tail(g1, grid.log_step, "right", right_bound))
    left = _cumulative_from_left(interval_integrals(g2, grid.log_step),
                                 _power_tail(g2, grid.log_step, "left", left_bound))
    return -(right * y1 + left * y2) / prob.wronskian_c


def apply_singular_operator(prob, y):
    """Discrete ``x^2 y'' + x y' - q y = D(D y) - q y`` on the problem grid."""
    step = prob.grid.log_step
    return log_derivative(log_derivative(y, step), step) - prob.potential(prob.grid.nodes) * y


def weighted_bound_ratio(prob, f, y, mu, alpha):
    """Ratio of the weighted sup of ``(y, x y')`` to that of ``f``.

    The weights are ``<x>^alpha x^(2mu-1)`` for ``y`` and ``f`` and
    ``<x>^alpha x^(2mu)`` for ``y'``; the ratio stays bounded for admissible
    data.
    """
    x = prob.grid.nodes
    weight = np.sqrt(1 + x * x) ** alpha * x ** (2 * mu - 1)
    dy = log_derivative(np.asarray(y), prob.grid.log_step)
    lhs = np.max(np.abs(weight * dy)) + np.max(np.abs(weight * y))
    rhs = np.max(np.abs(weight * np.asarray(f)))
    return lhs / rhs if rhs else 0.0


def weak_residual(prob, y, f_tilde, test, test_log_derivative):
    """Weak residual of ``L y = x f_tilde'`` against a compactly supported test.

    In ``s = ln x`` the weak form is
    ``int y (chi_ss - q chi) ds + int f_tilde chi_s ds = 0``; the integrals are
    evaluated with the trapezoid rule on the grid (tests vanish at the ends).
    ``test_log_derivative`` returns ``(chi_s, chi_ss)``.
    """
    x = prob.grid.nodes
    chi = test(x)
    chi_s, chi_ss = test_log_derivative(x)
    integrand = np.asarray(y) * (chi_ss - prob.potential(x) * chi) + np.asarray(f_tilde) * chi_s
    return complex(trapezoid(integrand, dx=prob.grid.log_step))


# ---------------------------------------------------------------------------
# confluent hypergeometric series

MAX_SERIES_TERMS = 100_000


def hyp2f2(a1, a2, b1, b2, z):
    """Power series of ``2F2(a1, a2; b1, b2; z)``.

    The terms of a confluent series first grow like ``|z|^k / k!`` and then
    cancel, losing about ``|z| / ln 10`` digits in double precision.  The
    sum is therefore accumulated in multiprecision arithmetic whose working
    precision covers that loss, and stopped once a term falls below
    ``1e-16`` of the partial sum past the largest term.
    """
    for b in (b1, b2):
        if float(b) <= 0 and float(b) == int(b):
            raise DomainError(f"lower parameter {b} is a non-positive integer")
    z = complex(z)
    if z == 0:
        return 1.0 + 0.0j
    digits = 20 + int(abs(z) / math.log(10)) + 5
    with mpmath.workdps(digits):
        a1m, a2m, b1m, b2m = (mpmath.mpf(float(v)) for v in (a1, a2, b1, b2))
        zm = mpmath.mpc(z.real, z.imag)
        term = mpmath.mpc(1)
        total = mpmath.mpc(1)
        threshold = mpmath.mpf(10) ** -17
        for k in range(MAX_SERIES_TERMS):
            term *= (a1m + k) * (a2m + k) / ((b1m + k) * (b2m + k) * (k + 1)) * zm
            total += term
            if k > abs(z) and abs(term) <= threshold * abs(total):
                return complex(total)
    raise NumericalError(f"2F2 series did not converge within {MAX_SERIES_TERMS} terms (|z|={abs(z):.3g})")


MAX_MODE_ARGUMENT = 1000.0


def homogeneous_mode_solution(n, mu, beta):
    """Mode solution regular at the origin, ``~ beta^(2mu + n mu)`` as ``beta -> 0``.

    ``Psi_1(beta) = beta^(2mu + n mu) 2F2(a1 + 1, a2 + 1; 2mu + n mu + 1,
    2 n mu + 1; -i n beta)`` with ``a1, a2`` the roots of
    ``t^2 - 2 n mu t + 2 mu - 1``.
    """
    if n < 2:
        raise PreconditionError(f"mode solution is defined for n >= 2, got n={n}")
    if not mu > 0.5:
        raise DomainError(f"mu={mu} must exceed 1/2")
    if not (beta > 0 and n * beta <= MAX_MODE_ARGUMENT):
        raise OutOfRangeError(f"beta={beta} outside the series range (0, {MAX_MODE_ARGUMENT / n:g}]")
    a1, a2 = mode_ode_system(n, mu).hyp_params
    lead = 2 * mu + n * mu
    return beta ** lead * hyp2f2(a1 + 1, a2 + 1, lead + 1, 2 * n * mu + 1, -1j * n * beta)


def growth_exponent(n, mu):
    """Predicted large-``beta`` growth rate ``2mu - 1 + sqrt(n^2 mu^2 - 2mu + 1)``."""
    return 2 * mu - 1 + math.sqrt((n * mu) ** 2 - 2 * mu + 1)


def fitted_growth_exponent(n, mu, beta_lo=5.0, beta_hi=15.0, samples=41, sweeps=20):
    """Least-squares growth exponent of ``|Psi_1|`` on ``[beta_lo, beta_hi]``.

    For the imaginary argument ``-i n beta`` the series splits at large
    ``beta`` into an algebraic branch ``A beta^e (1 + a_1 / beta + ...)``,
    whose ``1/beta`` correction is purely imaginary and so changes the
    modulus only at order ``beta^-2``, and an oscillatory branch of bounded
    modulus carrying ``exp(-i n beta)``.  The model

        ln|Psi_1| = e ln(beta) + c + d beta^-2 + beta^-e (u cos(n beta) + v sin(n beta))

    is fitted by linear least squares, re-using the current ``e`` in the
    envelope of the oscillatory term until it settles.
    """
    beta = np.linspace(beta_lo, beta_hi, samples)
    values = np.log([abs(homogeneous_mode_solution(n, mu, b)) for b in beta])
    log_beta = np.log(beta)
    exponent = np.polyfit(log_beta, values, 1)[0]
    for _ in range(sweeps):
        envelope = beta ** -exponent
        design = np.vstack([log_beta, np.ones_like(beta), beta ** -2.0,
                            envelope * np.cos(n * beta), envelope * np.sin(n * beta)]).T
        coeffs, *_ = np.linalg.lstsq(design, values, rcond=None)
        converged = abs(coeffs[0] - exponent) < 1e-12
        exponent = coeffs[0]
        if converged:
            break
    return float(exponent)
