"""Fourth-order finite differences in ``s = ln(beta)`` on a uniform log grid.

The derivative operator ``D = beta d/dbeta`` uses the centered five-point
stencil in the interior and one-sided five-point closures on the two nodes
next to each end.  First-order problems ``(D + rate) y = rhs`` are solved as
the exact discrete inverse of the same operator, with one stencil row
replaced by a boundary condition; this keeps every quadrature consistent
with the derivative used to check it.
"""

import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError

_INTERIOR = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def log_derivative(values, step):
    """Apply ``beta d/dbeta`` along the last axis of ``values``."""
    f = np.asarray(values)
    if f.shape[-1] < 5:
        raise ValueError("log_derivative needs at least five nodes")
    out = np.empty(np.broadcast_shapes(f.shape), dtype=np.result_type(f, float))
    out[..., 2:-2] = (f[..., :-4] - 8.0 * f[..., 1:-3] + 8.0 * f[..., 3:-1] - f[..., 4:]) / 12.0
    head = f[..., :5]
    tail = f[..., -5:]
    out[..., 0] = head @ _EDGE0
    out[..., 1] = head @ _EDGE1
    out[..., -1] = -(tail[..., ::-1] @ _EDGE0)
    out[..., -2] = -(tail[..., ::-1] @ _EDGE1)
    return out / step


def log_derivative_matrix(count, step):
    """Sparse matrix of :func:`log_derivative` for ``count`` nodes."""
    rows, cols, vals = [], [], []

    def put(i, start, weights):
        rows.extend([i] * 5)
        cols.extend(range(start, start + 5))
        vals.extend(weights)

    put(0, 0, _EDGE0)
    put(1, 0, _EDGE1)
    for i in range(2, count - 2):
        put(i, i - 2, _INTERIOR)
    put(count - 2, count - 5, -_EDGE1[::-1])
    put(count - 1, count - 5, -_EDGE0[::-1])
    return sp.csr_matrix((np.array(vals) / step, (rows, cols)), shape=(count, count))


def interval_integrals(values, step):
    """Integrals over each grid interval of the cubic through the four nearest nodes.

    Fourth-order accurate and local: an interval farther than one node from
    the support of ``values`` gets exactly zero.
    """
    g = np.asarray(values)
    out = np.empty(g.shape[:-1] + (g.shape[-1] - 1,), dtype=np.result_type(g, float))
    out[..., 1:-1] = (-g[..., :-3] + 13.0 * g[..., 1:-2] + 13.0 * g[..., 2:-1] - g[..., 3:]) / 24.0
    out[..., 0] = (9.0 * g[..., 0] + 19.0 * g[..., 1] - 5.0 * g[..., 2] + g[..., 3]) / 24.0
    out[..., -1] = (g[..., -4] - 5.0 * g[..., -3] + 19.0 * g[..., -2] + 9.0 * g[..., -1]) / 24.0
    return out * step


def integrate_from_right(integrand, step, tail):
    """``y(s) = tail + int_s^{s_max} integrand ds'`` by local per-interval quadrature."""
    pieces = interval_integrals(integrand, step)
    out = np.empty(np.shape(integrand), dtype=np.result_type(pieces, complex))
    out[-1] = tail
    out[:-1] = tail + np.cumsum(pieces[::-1])[::-1]
    return out


def local_exponent(values, step, end):
    """Power-law exponent of ``values`` estimated from the two nodes at ``end``.

    Returns ``None`` when the data vanish there (no exponent is defined).
    """
    v = np.asarray(values)
    a, b = (v[0], v[1]) if end == "left" else (v[-2], v[-1])
    if a == 0 or b == 0:
        return None
    return math.log(abs(b) / abs(a)) / step


def tail_log_integral(values, step, max_exponent=None):
    """``int_{beta_max}^inf f(s) ds / s`` from a corrected power law through the last nodes.

    The tail is modelled as ``A beta^p (1 + eps (beta / beta_max)^(-k))``;
    ``p``, ``eps`` and ``k`` follow from the local exponents of the last four
    nodes and the model is integrated exactly.  Without a measurable
    correction this reduces to ``-f / p``.  ``max_exponent`` caps ``p``.
    Returns 0 for data vanishing at the last node.
    """
    v = np.asarray(values)
    if v[-1] == 0:
        return 0.0
    tail = np.abs(v[-4:])
    if np.any(tail == 0):
        raise NumericalError("power-law tail needs nonzero data on the last four nodes")
    slopes = np.diff(np.log(tail)) / step          # exponents at the three midpoints
    exponent = slopes[-1] + 0.5 * (slopes[-1] - slopes[-2])
    first = (slopes[-1] - slopes[-2]) / step
    second = (slopes[-1] - 2.0 * slopes[-2] + slopes[-3]) / step**2
    eps, rate = 0.0, 1.0
    if abs(first) > 1e-9 * max(abs(exponent), 1.0) and first * second < 0:
        rate = min(max(-second / first, 0.5), 8.0)
        eps = first / rate**2
        exponent += first / rate
    if max_exponent is not None and exponent > max_exponent:
        return -v[-1] / max_exponent
    return v[-1] / (1.0 + eps) * (-1.0 / exponent + eps / (rate - exponent))


def replace_rows(matrix, rows):
    """Return ``matrix`` (sparse) with ``rows`` replaced: ``{index: dense row}``."""
    count = matrix.shape[0]
    keep = np.ones(count)
    keep[list(rows)] = 0.0
    r, c, v = [], [], []
    for i, row in rows.items():
        nz = np.flatnonzero(row)
        r.extend([i] * nz.size)
        c.extend(nz)
        v.extend(np.asarray(row)[nz])
    extra = sp.csr_matrix((np.array(v, dtype=complex), (r, c)), shape=matrix.shape)
    return (sp.diags(keep) @ sp.csr_matrix(matrix, dtype=complex) + extra).tocsc()


def factorize(matrix, label):
    """Sparse LU factorization with a readable error for singular systems."""
    try:
        return spla.splu(sp.csc_matrix(matrix, dtype=complex))
    except RuntimeError as exc:  # scipy reports exact singularity this way
        raise NumericalError(f"singular linear system for {label}: {exc}") from exc


class FirstOrderSolver:
    """Discrete inverse of ``D + diag(rate)`` with one boundary row.

    ``boundary`` is ``"left"`` or ``"right"``; the stencil row at that end is
    replaced by ``y[end] = value`` where the value is supplied per solve.
    """

    def __init__(self, rate, count, step, boundary):
        self.count = count
        self.step = step
        self.boundary = boundary
        rate = np.broadcast_to(np.asarray(rate, dtype=complex), (count,))
        self.rate = rate
        matrix = log_derivative_matrix(count, step) + sp.diags(rate)
        end = 0 if boundary == "left" else count - 1
        row = np.zeros(count, dtype=complex)
        row[end] = 1.0
        self.end = end
        self._lu = factorize(replace_rows(matrix, {end: row}), f"first-order solve ({boundary})")

    def solve(self, rhs, boundary_value):
        b = np.array(rhs, dtype=complex)
        b[self.end] = boundary_value
        return self._lu.solve(b)
