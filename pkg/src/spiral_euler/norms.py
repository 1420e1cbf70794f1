"""Grid diagnostics mirroring the weighted Hoelder norms of the construction.

All norms are evaluated on the radial nodes and on an angular sample of one
symmetry period; they are diagnostics, not certified bounds.
"""

import enum

import numpy as np

from .logdiff import log_derivative
from .spectral import Collocation, project_p0, project_pneq


class NormKind(enum.Enum):
    WEIGHTED_SUP = "WeightedSup"
    WEIGHTED_HOLDER = "WeightedHolder"
    X0 = "X0"
    Y0 = "Y0"


def japanese_bracket(beta):
    """``<beta> = sqrt(1 + beta^2)``."""
    beta = np.asarray(beta, dtype=float)
    return np.sqrt(1.0 + beta * beta)


def physical_samples(f):
    """Values of ``f`` on ``(phi, beta)`` over one symmetry period."""
    top = max(int(np.max(np.abs(f.modes))), f.fold)
    colloc = Collocation(f.fold, top, f.grid)
    return colloc.synthesize(colloc.field_values(f))


def sup_norm(f):
    """Plain maximum of ``|f|`` over the grid and the angle."""
    return float(np.max(np.abs(physical_samples(f))))


def _weighted_sup(samples, beta, alpha):
    return float(np.max(japanese_bracket(beta)[None, :] ** alpha * np.abs(samples)))


def _holder_quotient(samples, beta, alpha):
    """Sup over adjacent nodes with beta_2 < beta_1 < 2 beta_2 and gap below 1."""
    b1, b2 = beta[1:], beta[:-1]
    usable = (b1 < 2.0 * b2) & (b1 - b2 < 1.0)
    if not np.any(usable):
        return 0.0
    diff = np.abs(samples[:, 1:] - samples[:, :-1])[:, usable]
    weight = ((b1 + b2) ** alpha / (b1 - b2) ** alpha)[usable]
    return float(np.max(diff * weight[None, :]))


def holder_norm_samples(samples, beta, alpha):
    return _weighted_sup(samples, beta, alpha) + _holder_quotient(samples, beta, alpha)


def _kind_norm(f, kind, params):
    beta = f.grid.nodes
    alpha, mu = params.alpha, params.mu
    if kind is NormKind.WEIGHTED_SUP:
        return _weighted_sup(physical_samples(f), beta, alpha)
    if kind is NormKind.WEIGHTED_HOLDER:
        return holder_norm_samples(physical_samples(f), beta, alpha)
    if kind is NormKind.X0:
        return _x0_norm(f, params)
    if kind is NormKind.Y0:
        h = auxiliary_h(f, mu)
        psi_part = np.max(np.abs(physical_samples(f.scale(beta ** (2 * mu - 1)))))
        return _x0_norm(h, params) + float(psi_part)
    raise ValueError(f"unknown norm kind {kind!r}")


def auxiliary_h(psi, mu):
    """``H = psi + (beta / 2 mu) psi_beta`` on theta-coefficients."""
    step = psi.grid.log_step
    beta = psi.grid.nodes
    d = log_derivative(psi.values, step) + 1j * psi.modes[:, None] * beta[None, :] * psi.values
    return psi.with_values(psi.values + d / (2.0 * mu))


def _x0_norm(h, params):
    beta = h.grid.nodes
    mu, alpha = params.mu, params.alpha
    # theta-coefficients: d/dvarphi = -(1/beta) D_s, d/dphi = i n
    h_varphi = h.with_values(-log_derivative(h.values, h.grid.log_step) / beta[None, :])
    h_phi = h.with_values(1j * h.modes[:, None] * h.values)
    total = 0.0
    for part, power in ((h_varphi, 2 * mu), (h_phi, 2 * mu - 1), (h, 2 * mu - 1)):
        total += holder_norm_samples(physical_samples(part.scale(beta ** power)), beta, alpha)
    return total


def weighted_norm(f, kind, params, m_weighted=False):
    """Discrete analogue of the norm ``kind`` of the field ``f``.

    With ``m_weighted`` the non-constant modes are weighted by ``m^(1/2)``
    (the fold-adapted norm) and added to the norm of the mean.
    """
    if not np.any(f.values):
        return 0.0
    if not m_weighted:
        return _kind_norm(f, kind, params)
    mean, rest = project_p0(f), project_pneq(f)
    total = _kind_norm(mean, kind, params) if np.any(mean.values) else 0.0
    if np.any(rest.values):
        total += np.sqrt(f.fold) * _kind_norm(rest, kind, params)
    return total
