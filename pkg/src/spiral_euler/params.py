"""Solver parameters, derived constants and the logarithmic radial grid."""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError


def derive_constants(mu):
    """Return ``(gamma, alpha_mu)`` for the self-similar exponent ``mu``.

    ``gamma = 2 - 1/mu`` is the vorticity of the radial profile per unit
    ``beta``; ``alpha_mu`` is the upper limit of admissible decay rates.
    """
    mu = float(mu)
    if not mu > 0.5:
        raise DomainError(f"self-similar exponent mu={mu} must exceed 1/2")
    gamma = 2.0 - 1.0 / mu
    alpha_mu = math.sqrt(4.0 * mu * mu - 2.0 * mu + 1.0) - (2.0 * mu - 1.0)
    return gamma, alpha_mu


def auto_alpha(mu):
    """Default decay rate: min(0.5, 0.95 alpha_mu), kept above 1 - mu."""
    _, alpha_mu = derive_constants(mu)
    alpha = min(0.5, 0.95 * alpha_mu)
    floor = max(0.0, 1.0 - mu)
    if alpha <= floor:
        alpha = 0.5 * (floor + alpha_mu)
    return alpha


@dataclass(frozen=True)
class RadialGrid:
    """Logarithmically spaced nodes ``beta_min = beta_0 < ... < beta_{N-1} = beta_max``."""

    beta_min: float = 1e-3
    beta_max: float = 1e3
    count: int = 2048
    spacing: str = "logarithmic"

    def __post_init__(self):
        if not 0.0 < self.beta_min < 1.0 < self.beta_max:
            raise DomainError(
                f"grid range must satisfy 0 < beta_min < 1 < beta_max, got "
                f"[{self.beta_min}, {self.beta_max}]")
        if int(self.count) != self.count or self.count < 64:
            raise DomainError(f"grid needs at least 64 nodes, got {self.count}")
        if self.spacing != "logarithmic":
            raise DomainError(f"unsupported grid spacing {self.spacing!r}")
        object.__setattr__(self, "count", int(self.count))

    @property
    def log_step(self):
        """Uniform spacing ``h`` of the nodes in ``s = ln(beta)``."""
        return math.log(self.beta_max / self.beta_min) / (self.count - 1)

    @property
    def log_nodes(self):
        s = np.linspace(math.log(self.beta_min), math.log(self.beta_max), self.count)
        s.flags.writeable = False
        return s

    @property
    def nodes(self):
        beta = np.exp(self.log_nodes)
        beta[0], beta[-1] = self.beta_min, self.beta_max
        beta.flags.writeable = False
        return beta

    def refined(self, factor=2):
        """Same range with ``factor`` times the number of intervals."""
        return replace(self, count=factor * (self.count - 1) + 1)

    def contains(self, beta):
        beta = np.asarray(beta, dtype=float)
        tol = 1e-12
        return (beta >= self.beta_min * (1 - tol)) & (beta <= self.beta_max * (1 + tol))


@dataclass(frozen=True)
class SolverParams:
    """Physical and discretization constants of one solve."""

    mu: float
    m: int
    alpha: float
    n_modes: int = 64
    grid: RadialGrid = field(default_factory=RadialGrid)
    tol_residual: float = 1e-10
    max_iter: int = 30
    eps_dominant: float = 0.3

    def __post_init__(self):
        gamma, alpha_mu = derive_constants(self.mu)
        if int(self.m) != self.m or self.m < 2:
            raise DomainError(f"fold symmetry m={self.m} must be an integer >= 2")
        if not 0.0 < self.alpha < alpha_mu:
            raise DomainError(
                f"decay rate alpha={self.alpha} must lie in (0, alpha_mu={alpha_mu:.6g})")
        if int(self.n_modes) != self.n_modes or self.n_modes < self.m or self.n_modes % self.m:
            raise DomainError(
                f"n_modes={self.n_modes} must be a positive multiple of m={self.m}")
        if not self.tol_residual > 0.0:
            raise DomainError("tol_residual must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise DomainError("max_iter must be a positive integer")
        if not self.eps_dominant > 0.0:
            raise DomainError("eps_dominant must be positive")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "n_modes", int(self.n_modes))
        object.__setattr__(self, "max_iter", int(self.max_iter))
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def gamma(self):
        return 2.0 - 1.0 / self.mu

    @property
    def alpha_mu(self):
        return derive_constants(self.mu)[1]

    @property
    def modes(self):
        """Retained Fourier modes: multiples of m with |n| <= n_modes, ascending."""
        k = self.n_modes // self.m
        return np.arange(-k, k + 1) * self.m

    def supports_weak_form(self):
        """Whether alpha also meets the extra bound needed for weak-form sampling."""
        return self.alpha > max(0.0, 1.0 - self.mu)

    def with_grid(self, grid):
        return replace(self, grid=grid)
