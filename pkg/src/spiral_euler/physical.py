"""Physical-space fields of a spiral solution.

A solution lives in spiral coordinates ``(beta, phi)``; the profile plane
``x = r (cos theta, sin theta)`` is reached through

    theta = beta + phi,        r = (-psi_beta / mu)^(1/2),

and polar derivatives follow from

    r d_r = (2 psi_b / psi_bv) d_varphi,   d_theta = d_phi - (psi_bf / psi_bv) d_varphi.

Samplers named ``sample_*`` and ``coord_*`` work in the profile plane of the
normalized solution.  Space-time quantities (:func:`self_similar_sample`,
:func:`trace_streamline`) include the time rescaling stored on the solution,
so they describe the flow generated by the original, unnormalized data.
The velocity is ``v = grad_perp Psi = (-d_2 Psi, d_1 Psi)``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import DegenerateStateError, DomainError, OutOfRangeError, PreconditionError
from .logdiff import local_exponent
from .nonlinear import derivative_coefficients, derivative_samples, jacobian_extrema
from .spectral import SpectralField

BISECTION_STEPS = 60
DERIVATIVE_KEYS = ("psi", "d_beta", "d_phi", "d_varphi", "d_beta_phi", "d_beta_varphi")


# ---------------------------------------------------------------------------
# pointwise evaluation in spiral coordinates


class SolutionSampler:
    """Evaluate psi and its first derivatives at arbitrary ``(beta, phi)``.

    The grid part of every theta-coefficient is interpolated by a quintic
    spline in ``ln beta``; the radial power ``c beta^(1-2mu)`` is added in
    closed form, so the radial family is sampled exactly.
    """

    def __init__(self, sol):
        self.sol = sol
        self.mu = sol.params.mu
        self.grid = sol.grid
        self.modes = np.asarray(sol.psi.modes)
        self.coefficient = complex(sol.singular_coeff).real
        values = np.asarray(sol.psi.values)
        self.has_grid_part = bool(np.any(values))
        self._splines = {}
        if self.has_grid_part:
            coeffs = derivative_coefficients(values, self.modes, self.grid)
            coeffs["psi"] = values
            s = self.grid.log_nodes
            for key in DERIVATIVE_KEYS:
                self._splines[key] = make_interp_spline(s, coeffs[key].T, k=5)

    def _radial(self, key, beta):
        c, mu = self.coefficient, self.mu
        if key == "psi":
            return c * beta ** (1 - 2 * mu)
        if key == "d_beta":
            return c * (1 - 2 * mu) * beta ** (-2 * mu)
        if key == "d_varphi":
            return -c * (1 - 2 * mu) * beta ** (-2 * mu)
        if key == "d_beta_varphi":
            return -2 * mu * c * (2 * mu - 1) * beta ** (-2 * mu - 1)
        return np.zeros_like(beta)

    def check_range(self, beta):
        beta = np.asarray(beta, dtype=float)
        if not np.all(self.grid.contains(beta)):
            raise OutOfRangeError(
                f"beta outside the resolved range [{self.grid.beta_min}, {self.grid.beta_max}]")

    def evaluate(self, beta, phi, keys=DERIVATIVE_KEYS):
        """``{key: values}`` for broadcast arrays ``beta``, ``phi``."""
        beta, phi = np.broadcast_arrays(np.asarray(beta, dtype=float),
                                        np.asarray(phi, dtype=float))
        self.check_range(beta)
        out = {key: self._radial(key, beta) for key in keys}
        if self.has_grid_part:
            flat_beta = beta.ravel()
            phase = np.exp(1j * np.multiply.outer(flat_beta + phi.ravel(), self.modes))
            s = np.clip(np.log(flat_beta), self.grid.log_nodes[0], self.grid.log_nodes[-1])
            for key in keys:
                part = np.sum(self._splines[key](s) * phase, axis=1).real
                out[key] = out[key] + part.reshape(beta.shape)
        return out

    def radius(self, beta, phi):
        d_beta = self.evaluate(beta, phi, ("d_beta",))["d_beta"]
        if np.any(d_beta >= 0):
            raise DegenerateStateError("psi_beta >= 0: the radius is undefined")
        return np.sqrt(-d_beta / self.mu)


def _sampler(sol):
    return sol if isinstance(sol, SolutionSampler) else SolutionSampler(sol)


def _omega_values(sol, phi):
    omega = sol.omega
    if omega is None:
        return np.full(np.shape(phi), sol.params.gamma)
    return omega.evaluate(np.ravel(phi)).real.reshape(np.shape(phi))


# ---------------------------------------------------------------------------
# coordinate maps


def coord_forward(beta, phi, sol):
    """``(r, theta)`` of spiral coordinates; ``theta`` reduced to ``[0, 2 pi)``."""
    sampler = _sampler(sol)
    r = sampler.radius(beta, phi)
    theta = np.mod(np.asarray(beta) + np.asarray(phi), 2 * math.pi)
    return r, theta


def coord_inverse(r, theta, sol):
    """``(beta, phi)`` with ``coord_forward(beta, phi) == (r, theta)``.

    Along a fixed ``theta`` the radius decreases strictly in ``beta`` (its
    derivative is ``psi_bv / (2 mu r) < 0``), so the root is bracketed from
    the radial asymptotic ``r ~ (mu)^(-1/2) beta^(-mu)``, the bracket grows
    geometrically up to the grid range and is then bisected in ``ln beta``.
    """
    sampler = _sampler(sol)
    grid, mu = sampler.grid, sampler.mu
    r, theta = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(theta, dtype=float))
    if np.any(~(r > 0)):
        raise DomainError("the radius must be positive")
    shape = r.shape
    r, theta = r.ravel(), np.mod(theta.ravel(), 2 * math.pi)
    s_min, s_max = math.log(grid.beta_min), math.log(grid.beta_max)
    guess = np.clip(-np.log(mu * r * r) / (2 * mu), s_min, s_max)

    def excess(s):
        beta = np.exp(s)
        return sampler.radius(beta, theta - beta) - r

    lo = np.maximum(guess - math.log(4.0), s_min)
    hi = np.minimum(guess + math.log(4.0), s_max)
    for _ in range(64):
        f_lo, f_hi = excess(lo), excess(hi)
        low_bad = f_lo < 0     # radius too small already: move toward smaller beta
        high_bad = f_hi > 0
        if not np.any(low_bad | high_bad):
            break
        at_min = low_bad & (lo <= s_min)
        at_max = high_bad & (hi >= s_max)
        if np.any(at_min | at_max):
            raise OutOfRangeError("radius outside the range resolved by the radial grid")
        width = hi - lo
        lo = np.where(low_bad, np.maximum(lo - width, s_min), lo)
        hi = np.where(high_bad, np.minimum(hi + width, s_max), hi)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        above = excess(mid) > 0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    beta = np.exp(0.5 * (lo + hi))
    phi = np.mod(theta - beta, 2 * math.pi)
    return beta.reshape(shape), phi.reshape(shape)


# ---------------------------------------------------------------------------
# field samplers


def sample_stream(beta, phi, sol):
    return _sampler(sol).evaluate(beta, phi, ("psi",))["psi"]


def sample_vorticity(beta, phi, sol):
    """``omega = psi_varphi^(-1/(2mu)) Omega(phi)``."""
    sampler = _sampler(sol)
    d_varphi = sampler.evaluate(beta, phi, ("d_varphi",))["d_varphi"]
    if np.any(d_varphi <= 0):
        raise DegenerateStateError("psi_varphi <= 0: the vorticity is undefined")
    return d_varphi ** (-1.0 / (2.0 * sampler.mu)) * _omega_values(sampler.sol, phi)


def polar_derivatives(beta, phi, sol):
    """``(psi, d_theta psi, r d_r psi, r)`` at spiral coordinates."""
    sampler = _sampler(sol)
    d = sampler.evaluate(beta, phi)
    if np.any(d["d_beta"] >= 0) or np.any(d["d_beta_varphi"] >= 0):
        raise DegenerateStateError("coordinate sign conditions fail at a query point")
    r = np.sqrt(-d["d_beta"] / sampler.mu)
    d_theta = d["d_phi"] - d["d_beta_phi"] * d["d_varphi"] / d["d_beta_varphi"]
    r_d_r = 2.0 * d["d_beta"] * d["d_varphi"] / d["d_beta_varphi"]
    return d["psi"], d_theta, r_d_r, r


def velocity_from_spiral(beta, phi, sol):
    """``(v_r, v_theta)`` at spiral coordinates."""
    _, d_theta, r_d_r, r = polar_derivatives(beta, phi, sol)
    return -d_theta / r, r_d_r / r


def sample_velocity(r, theta, sol):
    """Polar velocity components ``(v_r, v_theta)`` at a profile-plane point."""
    sampler = _sampler(sol)
    beta, phi = coord_inverse(r, theta, sampler)
    return velocity_from_spiral(beta, phi, sampler)


def velocity_bound_constant(sol, samples=64):
    """``max |v| r^(1/mu - 1)`` over grid nodes and a period of angles."""
    sampler = _sampler(sol)
    beta = sampler.grid.nodes
    phi = np.linspace(0.0, 2 * math.pi / sampler.sol.params.m, samples, endpoint=False)
    bb, pp = np.meshgrid(beta, phi)
    v_r, v_t = velocity_from_spiral(bb, pp, sampler)
    r = sampler.radius(bb, pp)
    return float(np.max(np.hypot(v_r, v_t) * r ** (1.0 / sampler.mu - 1.0)))


def profile_fields(x, sol):
    """Profile-plane fields at Cartesian points ``x`` (shape ``(..., 2)``)."""
    sampler = _sampler(sol)
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1])
    theta = np.arctan2(x[..., 1], x[..., 0])
    beta, phi = coord_inverse(r, theta, sampler)
    psi, d_theta, r_d_r, radius = polar_derivatives(beta, phi, sampler)
    v_r, v_t = -d_theta / radius, r_d_r / radius
    c, s = np.cos(theta), np.sin(theta)
    velocity = np.stack([v_r * c - v_t * s, v_r * s + v_t * c], axis=-1)
    return {"beta": beta, "phi": phi, "r": r, "theta": np.mod(theta, 2 * math.pi),
            "psi": psi, "omega": sample_vorticity(beta, phi, sampler),
            "v_r": v_r, "v_theta": v_t, "velocity": velocity}


# ---------------------------------------------------------------------------
# self-similar space-time fields


@dataclass(frozen=True)
class PhysicalSample:
    position: tuple       # Cartesian y
    r: float
    theta: float
    time: float
    velocity: tuple       # Cartesian components
    vorticity: float
    stream: float


def self_similar_fields(y, t, sol):
    """Vectorized space-time fields at Cartesian points ``y`` (shape ``(..., 2)``).

    With ``lam = time_rescale`` and ``tau = lam t``: ``x = tau^(-mu) y``,
    ``v = lam tau^(mu-1) v(x)``, ``omega = t^(-1) omega(x)``,
    ``Psi = lam tau^(2mu-1) psi(x)``.  Returns a dict with ``r``, ``theta``,
    ``velocity`` (Cartesian), ``vorticity`` and ``stream``.
    """
    if not t > 0:
        raise DomainError(f"time must be positive, got {t}")
    sampler = _sampler(sol)
    mu = sampler.mu
    lam = float(sampler.sol.time_rescale)
    tau = lam * t
    y = np.asarray(y, dtype=float)
    fields = profile_fields(y * tau ** (-mu), sampler)
    return {
        "r": np.hypot(y[..., 0], y[..., 1]),
        "theta": np.mod(np.arctan2(y[..., 1], y[..., 0]), 2 * math.pi),
        "velocity": lam * tau ** (mu - 1) * fields["velocity"],
        "vorticity": fields["omega"] / t,
        "stream": lam * tau ** (2 * mu - 1) * fields["psi"],
    }


def self_similar_sample(y, t, sol):
    """Space-time fields of the flow at one point ``y`` and time ``t > 0``."""
    y = np.asarray(y, dtype=float)
    fields = self_similar_fields(y, t, sol)
    velocity = fields["velocity"]
    return PhysicalSample(
        position=(float(y[0]), float(y[1])), r=float(fields["r"]),
        theta=float(fields["theta"]), time=float(t),
        velocity=(float(velocity[0]), float(velocity[1])),
        vorticity=float(fields["vorticity"]), stream=float(fields["stream"]))


@dataclass(frozen=True)
class Streamline:
    phi0: float
    beta: np.ndarray
    r: np.ndarray
    theta: np.ndarray       # unwrapped: theta = beta + phi0


def trace_streamline(phi0, sol, beta_range=None, count=512):
    """The pseudo-streamline ``beta -> (r(beta, phi0), beta + phi0)`` at ``t = 1``.

    Radii are in the physical plane of the original data (``lam^mu r``).
    """
    sampler = _sampler(sol)
    lo, hi = beta_range or (sampler.grid.beta_min, sampler.grid.beta_max)
    if not 0 < lo < hi:
        raise DomainError("beta_range must be increasing and positive")
    beta = np.geomspace(lo, hi, count)
    phi = np.full_like(beta, float(phi0))
    scale = float(sampler.sol.time_rescale) ** sampler.mu
    r = scale * sampler.radius(beta, phi)
    return Streamline(float(phi0), beta, r, beta + float(phi0))


# ---------------------------------------------------------------------------
# diagnostics


def jacobian_scan(sol):
    """Extrema of ``det(da/db) = psi_bv / (2 mu r)`` over nodes and collocation angles."""
    return jacobian_extrema(derivative_samples(sol), sol.params.mu)


def integrated_vorticity(sol, radius, angles=256, nodes=400):
    """``int_{|x| <= R} |omega| dx`` in the profile plane.

    In ``(beta, theta)`` the area element is ``|psi_bv| / (2 mu) dbeta dtheta``
    and the disc is ``beta >= beta_R(theta)``; the part beyond the grid is a
    power-law tail.
    """
    sampler = _sampler(sol)
    mu, m = sampler.mu, sampler.sol.params.m
    theta = (np.arange(angles) + 0.5) * (2 * math.pi / (m * angles))
    beta_r, _ = coord_inverse(np.full_like(theta, radius), theta, sampler)
    s_top = math.log(sampler.grid.beta_max)
    x, w = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for t0, b0 in zip(theta, beta_r):
        s0 = math.log(b0)
        s = s0 + 0.5 * (x + 1.0) * (s_top - s0)
        s_tail = np.array([s_top - 1e-3, s_top])
        s_all = np.concatenate([s, s_tail])
        beta = np.exp(s_all)
        phi = t0 - beta
        d = sampler.evaluate(beta, phi, ("d_varphi", "d_beta_varphi"))
        integrand = (np.abs(sample_vorticity(beta, phi, sampler))
                     * np.abs(d["d_beta_varphi"]) / (2 * mu) * beta)
        body = 0.5 * (s_top - s0) * np.dot(w, integrand[:nodes])
        exponent = local_exponent(integrand[nodes:], 1e-3, "right")
        tail = -integrand[-1] / exponent if exponent and exponent < 0 else 0.0
        total += body + tail
    return total * (2 * math.pi / (m * angles)) * m


def integrability_exponent(sol, radii=(0.5, 1.0, 2.0, 4.0)):
    """Least-squares log-log slope of :func:`integrated_vorticity` against ``R``."""
    values = [integrated_vorticity(sol, r) for r in radii]
    slope, _ = np.polyfit(np.log(radii), np.log(values), 1)
    return float(slope)


def polygon_flux(sol, vertices, points_per_edge=32):
    """``(flux, scale)``: outward flux of v through a closed polygon and ``int |v| ds``."""
    sampler = _sampler(sol)
    vertices = np.asarray(vertices, dtype=float)
    x, w = np.polynomial.legendre.leggauss(points_per_edge)
    flux = scale = 0.0
    for a, b in zip(vertices, np.roll(vertices, -1, axis=0)):
        edge = b - a
        points = a[None, :] + 0.5 * (x[:, None] + 1.0) * edge[None, :]
        v = profile_fields(points, sampler)["velocity"]
        normal = np.array([edge[1], -edge[0]])
        flux += 0.5 * np.dot(w, v @ normal)
        scale += 0.5 * np.linalg.norm(edge) * np.dot(w, np.linalg.norm(v, axis=1))
    return float(flux), float(scale)


class BumpTestField:
    """Divergence-free test field ``w = grad_perp chi`` with a smooth bump ``chi``.

    ``chi(x) = exp(-1 / (1 - q))``, ``q = |x - center|^2 / radius^2`` inside
    the disc and 0 outside.  ``gradient`` returns ``G[..., i, j] = d_i w^j``.
    """

    def __init__(self, center, radius, amplitude=1.0):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.amplitude = float(amplitude)

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def _profile(self, x):
        d = x - self.center
        q = np.sum(d * d, axis=-1) / self.radius**2
        inside = q < 1
        u = np.where(inside, 1.0 / np.where(inside, 1.0 - q, 1.0), 0.0)
        g = np.where(inside, np.exp(-u), 0.0) * self.amplitude
        g1 = -g * u * u                       # dg/dq
        g2 = g * (u**4 - 2.0 * u**3)          # d2g/dq2
        return d, g1, g2

    def value(self, x):
        d, g1, _ = self._profile(x)
        grad_chi = 2.0 * g1[..., None] * d / self.radius**2
        return np.stack([-grad_chi[..., 1], grad_chi[..., 0]], axis=-1)

    def gradient(self, x):
        d, g1, g2 = self._profile(x)
        rr = self.radius**2
        hess = (4.0 * g2[..., None, None] * d[..., :, None] * d[..., None, :] / rr**2
                + 2.0 * g1[..., None, None] * np.eye(2) / rr)
        # w^1 = -d_2 chi, w^2 = d_1 chi
        return np.stack([-hess[..., :, 1], hess[..., :, 0]], axis=-1)

    def avoids_origin(self):
        return float(np.linalg.norm(self.center)) > self.radius


class ZeroTestField(BumpTestField):
    def __init__(self, center=(1.0, 0.0), radius=0.5):
        super().__init__(center, radius, amplitude=0.0)


def _weak_integrand(x, sampler, test, mu):
    x = np.asarray(x, dtype=float)
    w = test.value(x)
    grad = test.gradient(x)
    active = np.any(w != 0, axis=-1) | np.any(grad != 0, axis=(-2, -1))
    terms = np.zeros(x.shape[:-1] + (3,))
    if np.any(active):
        v = profile_fields(x[active], sampler)["velocity"]
        g = grad[active]
        first = (3 * mu - 1) * np.sum(v * w[active], axis=-1)
        second = -np.einsum("ki,kj,kij->k", v, v, g)
        advect = np.einsum("ki,kij->kj", x[active], g)
        third = mu * np.sum(v * advect, axis=-1)
        terms[active] = np.stack([first, second, third], axis=-1)
    return terms


def weak_residual(sol, test, params=None, start=32, max_points=512, scale_tol=1e-9,
                  return_scale=False):
    """Quadrature of ``int (3mu-1) v.w - (v (x) v):grad w + mu v.(x.grad w) dx``.

    Tensor midpoint rule on the test field's bounding box, doubled until two
    successive levels agree to 10%, or differ by at most ``scale_tol`` times
    the field scale (the value itself tends to zero for exact solutions).
    ``scale`` is the same quadrature of the absolute values of the terms.
    """
    params = params or sol.params
    if not params.supports_weak_form():
        raise PreconditionError("alpha must exceed max(0, 1 - mu) for the weak form")
    sampler = _sampler(sol)
    mu = params.mu
    low, high = test.bounding_box()
    previous = None
    n = start
    while True:
        h = (high - low) / n
        ax = low[0] + (np.arange(n) + 0.5) * h[0]
        ay = low[1] + (np.arange(n) + 0.5) * h[1]
        xx, yy = np.meshgrid(ax, ay, indexing="ij")
        terms = _weak_integrand(np.stack([xx, yy], axis=-1), sampler, test, mu)
        area = h[0] * h[1]
        value = float(np.sum(terms) * area)
        scale = float(np.sum(np.abs(terms)) * area)
        if previous is not None:
            change = abs(value - previous)
            if change <= max(0.1 * abs(value), scale_tol * scale):
                break
        if 2 * n > max_points:
            break
        previous = value
        n *= 2
    return (value, scale) if return_scale else value


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class InitialData:
    """Initial stream function ``Psi0 = |y|^(2 - 1/mu) B(theta)``.

    ``b_modes`` solve ``gamma^2 B + B'' = w`` mode by mode.
    """

    b_modes: dict
    omega_modes: dict
    mu: float
    fold: int

    @property
    def gamma(self):
        return 2.0 - 1.0 / self.mu

    @property
    def psi0_exponent(self):
        return 2.0 - 1.0 / self.mu

    @property
    def omega0_exponent(self):
        return -1.0 / self.mu

    def _series(self, coeffs, theta, order=0):
        theta = np.asarray(theta, dtype=float)
        modes = np.array(list(coeffs), dtype=float)
        values = np.array(list(coeffs.values()), dtype=complex) * (1j * modes) ** order
        return (np.exp(1j * np.multiply.outer(theta, modes)) @ values).real

    def b_profile(self, theta, order=0):
        return self._series(self.b_modes, theta, order)

    def angular_vorticity(self, theta):
        return self._series(self.omega_modes, theta)

    def spectral_defect(self):
        """``max |gamma^2 B_n - n^2 B_n - w_n|`` over the stored modes."""
        g2 = self.gamma**2
        return max((abs(g2 * b - n * n * b - self.omega_modes[n])
                    for n, b in self.b_modes.items()), default=0.0)

    def b_field(self):
        return SpectralField.angular(self.b_modes, self.fold)

    def _polar(self, y):
        y = np.asarray(y, dtype=float)
        return np.hypot(y[..., 0], y[..., 1]), np.arctan2(y[..., 1], y[..., 0])

    def omega0(self, y):
        rho, theta = self._polar(y)
        return rho ** self.omega0_exponent * self.angular_vorticity(theta)

    def psi0(self, y):
        rho, theta = self._polar(y)
        return rho ** self.psi0_exponent * self.b_profile(theta)

    def velocity0(self, y):
        """Cartesian ``v0 = grad_perp Psi0``."""
        rho, theta = self._polar(y)
        k = self.psi0_exponent
        v_r = -rho ** (k - 1) * self.b_profile(theta, order=1)
        v_t = k * rho ** (k - 1) * self.b_profile(theta)
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([v_r * c - v_t * s, v_r * s + v_t * c], axis=-1)


def initial_data(profile, params):
    """Initial data of the flow started by ``|y|^(-1/mu) w(theta)``."""
    if profile.fold % params.m and params.m % profile.fold:
        raise PreconditionError("profile symmetry incompatible with the solver fold")
    gamma = params.gamma
    omega_modes = {int(n): complex(c) for n, c in profile.coefficients(params.n_modes).items()
                   if n % params.m == 0}
    b_modes = {n: c / (gamma**2 - n * n) for n, c in omega_modes.items()}
    return InitialData(b_modes, omega_modes, params.mu, params.m)
