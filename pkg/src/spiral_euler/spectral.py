"""Fourier-mode representation of functions of ``(beta, phi)``.

A :class:`SpectralField` stores coefficients ``f_n(beta)`` with respect to the
angle ``theta = beta + phi``::

    f(beta, phi) = sum_n f_n(beta) exp(i n (beta + phi)).

Only modes that are multiples of the fold ``m`` may be stored.  Angular
functions (no ``beta`` dependence) are fields with a single radial sample and
no grid.  Values are immutable after construction.
"""

import math

import numpy as np

from .errors import PreconditionError
from .params import RadialGrid

SYMMETRY_TOLERANCE = 1e-12


def _frozen(array):
    array = np.array(array, dtype=complex)
    array.flags.writeable = False
    return array


class SpectralField:
    """Immutable collection of Fourier coefficients on a radial grid.

    ``modes`` is an ascending integer array; ``values[k]`` is the radial
    profile of mode ``modes[k]``.  ``grid`` is ``None`` for angular functions.
    """

    __slots__ = ("modes", "values", "fold", "grid")

    def __init__(self, modes, values, fold, grid=None):
        modes = np.asarray(modes, dtype=int)
        values = np.atleast_2d(np.asarray(values, dtype=complex))
        if modes.ndim != 1 or values.shape[0] != modes.size:
            raise ValueError("one coefficient row is required per mode")
        if np.any(np.diff(modes) <= 0):
            order = np.argsort(modes)
            modes, values = modes[order], values[order]
            if np.any(np.diff(modes) == 0):
                raise ValueError("duplicate Fourier modes")
        if np.any(modes % fold):
            bad = modes[modes % fold != 0]
            raise PreconditionError(f"modes {bad.tolist()} are not multiples of fold {fold}")
        if grid is not None and values.shape[1] != grid.count:
            raise ValueError("coefficient length does not match the grid")
        modes = np.array(modes)
        modes.flags.writeable = False
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "fold", int(fold))
        object.__setattr__(self, "grid", grid)

    def __setattr__(self, name, value):
        raise AttributeError("SpectralField is immutable")

    # construction -----------------------------------------------------
    @classmethod
    def from_dict(cls, coeffs, fold, grid=None):
        """Build from a mapping ``n -> radial array`` (or scalar for angular data)."""
        if not coeffs:
            length = grid.count if grid is not None else 1
            return cls(np.array([0]), np.zeros((1, length)), fold, grid)
        modes = sorted(int(n) for n in coeffs)
        length = grid.count if grid is not None else 1
        rows = [np.broadcast_to(np.asarray(coeffs[n], dtype=complex), (length,)) for n in modes]
        return cls(modes, np.array(rows), fold, grid)

    @classmethod
    def zeros(cls, modes, fold, grid=None):
        length = grid.count if grid is not None else 1
        return cls(modes, np.zeros((len(modes), length)), fold, grid)

    @classmethod
    def angular(cls, coeffs, fold):
        """Angular function ``sum_n c_n exp(i n angle)`` from ``{n: c_n}``."""
        return cls.from_dict({n: complex(c) for n, c in coeffs.items()}, fold)

    def with_values(self, values, modes=None):
        return SpectralField(self.modes if modes is None else modes, values, self.fold, self.grid)

    # access -----------------------------------------------------------
    @property
    def coeffs(self):
        """Read-only mapping ``n -> coefficient array``."""
        return {int(n): self.values[k] for k, n in enumerate(self.modes)}

    @property
    def is_angular(self):
        return self.grid is None

    def mode(self, n):
        """Coefficient array of mode ``n`` (zeros when not stored)."""
        hit = np.flatnonzero(self.modes == n)
        if hit.size:
            return self.values[hit[0]]
        return np.zeros(self.values.shape[1], dtype=complex)

    def coefficient(self, n):
        """Scalar coefficient of an angular field."""
        return complex(self.mode(n)[0])

    def max_abs(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def is_real(self, tol=1e-12):
        scale = max(self.max_abs(), 1e-300)
        for n in self.modes:
            if np.max(np.abs(self.mode(n) - np.conj(self.mode(-n)))) > tol * scale:
                return False
        return True

    # algebra ----------------------------------------------------------
    def _aligned(self, other):
        if self.fold != other.fold:
            raise PreconditionError("fields have different fold symmetry")
        modes = np.union1d(self.modes, other.modes)
        a = np.array([self.mode(n) for n in modes])
        b = np.array([other.mode(n) for n in modes])
        return modes, a, b

    def __add__(self, other):
        modes, a, b = self._aligned(other)
        return SpectralField(modes, a + b, self.fold, self.grid or other.grid)

    def __sub__(self, other):
        modes, a, b = self._aligned(other)
        return SpectralField(modes, a - b, self.fold, self.grid or other.grid)

    def __neg__(self):
        return self.with_values(-self.values)

    def __mul__(self, other):
        """Pointwise product by convolution of the coefficient rows."""
        if self.fold != other.fold:
            raise PreconditionError("fields have different fold symmetry")
        products = {}
        for j, a in zip(self.modes, self.values):
            for k, b in zip(other.modes, other.values):
                n = int(j + k)
                products[n] = products.get(n, 0.0) + a * b
        modes = sorted(products)
        return SpectralField(modes, [products[n] for n in modes], self.fold,
                             self.grid or other.grid)

    def scale(self, factor):
        """Multiply by a scalar or by a radial array broadcast over modes."""
        return self.with_values(self.values * np.asarray(factor))

    def restrict(self, modes):
        """Keep only the listed modes (missing ones become zero rows)."""
        modes = np.asarray(sorted(modes), dtype=int)
        return self.with_values(np.array([self.mode(n) for n in modes]), modes)

    # sampling ---------------------------------------------------------
    def evaluate(self, phi, beta_index=None):
        """Values at angles ``phi``.

        For angular fields ``phi`` is the angle itself.  For radial fields the
        result has shape ``(len(phi), grid.count)`` unless ``beta_index``
        selects nodes.
        """
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        if self.is_angular:
            return np.exp(1j * np.outer(phi, self.modes)) @ self.values[:, 0]
        beta = self.grid.nodes if beta_index is None else self.grid.nodes[beta_index]
        coeff = self.values if beta_index is None else self.values[:, beta_index]
        phase = np.exp(1j * self.modes[:, None] * np.asarray(beta)[None, :]) * coeff
        return np.exp(1j * np.outer(phi, self.modes)) @ phase


def project_p0(f):
    """Keep only the mode ``n = 0`` (the angular mean)."""
    return f.with_values(np.where((f.modes == 0)[:, None], f.values, 0.0))


def project_pneq(f):
    """Remove the mode ``n = 0``; ``project_p0(f) + project_pneq(f) == f``."""
    return f.with_values(np.where((f.modes == 0)[:, None], 0.0, f.values))


def check_m_fold(f, m):
    """True when every coefficient outside multiples of ``m`` is negligible."""
    bad = f.modes % m != 0
    if not np.any(bad):
        return True
    threshold = SYMMETRY_TOLERANCE * max(f.max_abs(), 1e-300)
    return bool(np.max(np.abs(f.values[bad])) <= threshold)


def l1_norm_angular(samples):
    """Riemann sum of ``|f|`` over one full turn from uniform samples."""
    samples = np.asarray(samples)
    return float(np.mean(np.abs(samples), axis=0).max() * 2.0 * math.pi)


def antiderivative_m(f):
    """Zero-mean angular primitive: ``g_n = f_n / (i n)``.

    Requires ``f`` to have zero mean (mode 0 absent or zero).  Returns
    ``(g, bound_ok)`` where ``bound_ok`` reports whether the sup-norm bound
    ``|g| <= (2/m) |f|_{L1}`` holds at every radial node, measured on a fine
    angular sample.
    """
    zero = f.mode(0)
    if np.max(np.abs(zero)) > 1e-14 * max(f.max_abs(), 1.0):
        raise PreconditionError("antiderivative_m needs a zero-mean field (mode 0 present)")
    nonzero = f.modes != 0
    values = np.zeros_like(f.values)
    values[nonzero] = f.values[nonzero] / (1j * f.modes[nonzero, None])
    g = f.with_values(values)
    return g, antiderivative_bound_holds(f, g)


def antiderivative_bound_holds(f, g, samples=None):
    top = int(np.max(np.abs(f.modes))) if f.modes.size else 1
    samples = samples or max(256, 32 * top)
    phi = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)
    if f.is_angular:
        fs, gs = f.evaluate(phi)[:, None], g.evaluate(phi)[:, None]
    else:
        # theta-coefficients: the shift by beta does not change norms over a turn
        fs = np.exp(1j * np.outer(phi, f.modes)) @ f.values
        gs = np.exp(1j * np.outer(phi, g.modes)) @ g.values
    l1 = np.mean(np.abs(fs), axis=0) * 2.0 * math.pi
    sup = np.max(np.abs(gs), axis=0)
    return bool(np.all(sup <= (2.0 / f.fold) * l1 * (1 + 1e-12) + 1e-300))


class Collocation:
    """Pseudo-spectral transform between modes and a ``(phi, beta)`` grid.

    Because fields are m-fold, one period ``[0, 2 pi / m)`` suffices; it is
    sampled with ``4 n_modes / m`` points, i.e. ``4 n_modes`` per full turn.
    Physical arrays have shape ``(points, grid.count)``.
    """

    def __init__(self, fold, n_modes, grid, points_per_turn=None):
        self.fold = fold
        self.grid = grid
        self.top = n_modes // fold
        per_turn = points_per_turn or 4 * n_modes
        self.points = max(per_turn // fold, 2 * self.top + 1)
        self.modes = np.arange(-self.top, self.top + 1) * fold
        self.phi = np.arange(self.points) * (2.0 * math.pi / (fold * self.points))
        self._slots = (self.modes // fold) % self.points
        beta = grid.nodes
        self._phase = np.exp(1j * np.outer(self.modes, beta))

    def synthesize(self, values):
        """Mode array (aligned with ``self.modes``) to physical samples."""
        spectrum = np.zeros((self.points, self.grid.count), dtype=complex)
        spectrum[self._slots] = values * self._phase
        return np.fft.ifft(spectrum, axis=0) * self.points

    def analyze(self, samples):
        """Physical samples to the mode array aligned with ``self.modes``."""
        spectrum = np.fft.fft(samples, axis=0) / self.points
        return spectrum[self._slots] * np.conj(self._phase)

    def field_values(self, field):
        """Coefficient array of ``field`` aligned with this transform's modes."""
        return np.array([field.mode(n) for n in self.modes])

    def angular_samples(self, field):
        """Samples of an angular field at the collocation angles, shape (points, 1)."""
        return field.evaluate(self.phi)[:, None]
