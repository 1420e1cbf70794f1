"""Vorticity profiles, their box-kernel mollification, configuration documents
and solution persistence.

An angular vorticity profile is either an ``L1`` density, given by Fourier
coefficients ``w(theta) = sum_n c_n exp(i n theta)``, a measure
``p0 + sum_j w_j delta(theta - theta_j)`` (atoms on a constant background),
or the box mollification of such a measure (a piecewise-constant density
kept in closed form).  Fourier
coefficients of measures are ``(1 / 2 pi) sum_j w_j exp(-i n theta_j)``, so
the mean ``P0`` is always coefficient 0.
"""

import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigError, CorruptionError, PreconditionError, SolutionIOError,
                     SymmetryError, VersionError)
from .linearized import StreamSolution
from .nonlinear import SolveReport
from .params import RadialGrid, SolverParams, auto_alpha
from .spectral import SpectralField

SYMMETRY_TOLERANCE = 1e-12
FORMAT_NAME = "spiral-euler-solution"
FORMAT_VERSION = 1
CSV_DIGITS = 17
TWO_PI = 2.0 * math.pi

DENSITY = "density"
MEASURE = "measure"


# ---------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class VorticityProfile:
    """Angular vorticity profile with ``fold``-fold rotation symmetry.

    ``density_modes`` maps stored modes to coefficients.  A mode ``n`` whose
    partner ``-n`` is absent stands for the real pair ``c e^{in} + conj``.
    Measures may carry only the background mode 0 besides their atoms.
    ``box_width`` is set for mollified measures: the density is then
    ``p0 + sum_j (w_j / width) 1[theta - theta_j in [0, width))``.
    """

    kind: str
    fold: int
    density_modes: dict = field(default_factory=dict)
    atoms: tuple = ()
    box_width: float = None

    def __post_init__(self):
        if self.kind not in (DENSITY, MEASURE):
            raise ConfigError(f"unknown profile kind {self.kind!r}", "profile.kind")
        if int(self.fold) != self.fold or self.fold < 1:
            raise ConfigError(f"fold must be a positive integer, got {self.fold}", "m")
        modes = {int(n): complex(c) for n, c in self.density_modes.items()}
        atoms = tuple((float(t) % TWO_PI, float(w)) for t, w in self.atoms)
        object.__setattr__(self, "density_modes", modes)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "fold", int(self.fold))
        _validate_profile(self)

    # construction -----------------------------------------------------
    @classmethod
    def density(cls, modes, fold):
        return cls(DENSITY, fold, density_modes=dict(modes))

    @classmethod
    def measure(cls, atoms, fold, background=0.0):
        modes = {0: background} if background else {}
        return cls(MEASURE, fold, density_modes=modes, atoms=tuple(atoms))

    @property
    def background(self):
        return float(self.density_modes.get(0, 0.0).real)

    @property
    def is_mollified(self):
        return self.box_width is not None

    # Fourier data ----------------------------------------------------
    def coefficients(self, n_max=None):
        """Two-sided coefficients ``{n: c_n}`` for multiples of the fold, ``|n| <= n_max``."""
        if self.kind == DENSITY and not self.is_mollified:
            out = {}
            for n, c in self.density_modes.items():
                out[n] = c
                if -n not in self.density_modes:
                    out[-n] = np.conj(c)
            if 0 in out:
                out[0] = complex(out[0].real)
            if n_max is not None:
                out = {n: c for n, c in out.items() if abs(n) <= n_max}
            return dict(sorted(out.items()))
        if n_max is None:
            raise PreconditionError("measures have infinitely many modes; pass n_max")
        top = int(n_max) // self.fold
        out = {}
        for k in range(-top, top + 1):
            n = k * self.fold
            out[n] = self._measure_coefficient(n) * self._box_factor(n)
        out[0] += self.background
        return out

    def _measure_coefficient(self, n):
        return sum(w * np.exp(-1j * n * t) for t, w in self.atoms) / TWO_PI + 0j

    def _box_factor(self, n):
        if not self.is_mollified or n == 0:
            return 1.0
        x = n * self.box_width
        return (1.0 - np.exp(-1j * x)) / (1j * x)

    def mean(self):
        """``P0`` of the profile (mean value over a turn)."""
        if self.kind == DENSITY and not self.is_mollified:
            return float(self.density_modes.get(0, 0.0).real)
        return self.background + float(sum(w for _, w in self.atoms) / TWO_PI)

    def total_mass(self):
        return TWO_PI * self.mean()

    def evaluate(self, theta):
        """Pointwise density values (not defined for unmollified measures)."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == MEASURE:
            raise PreconditionError("an atomic measure has no pointwise values")
        if self.is_mollified:
            out = np.full_like(theta, self.background)
            for t, w in self.atoms:
                offset = np.mod(theta - t, TWO_PI)
                out = out + np.where(offset < self.box_width, w / self.box_width, 0.0)
            return out
        coeffs = self.coefficients()
        modes = np.array(list(coeffs), dtype=float)
        values = np.array(list(coeffs.values()))
        return (np.exp(1j * np.multiply.outer(theta, modes)) @ values).real

    def _pieces(self):
        """Breakpoints and constant values of a mollified density over one turn."""
        cuts = sorted({0.0} | {t for t, _ in self.atoms}
                      | {(t + self.box_width) % TWO_PI for t, _ in self.atoms})
        cuts = np.array(cuts + [TWO_PI])
        mids = 0.5 * (cuts[:-1] + cuts[1:])
        return np.diff(cuts), self.evaluate(mids)

    def perturbation_l1(self, samples=1 << 14):
        """``||P_neq w||`` (L1 norm for densities, total variation for measures)."""
        mean = self.mean()
        if self.kind == MEASURE:
            return float(sum(abs(w) for _, w in self.atoms) + TWO_PI * abs(self.background - mean))
        if self.is_mollified:
            widths, values = self._pieces()
            return float(np.sum(widths * np.abs(values - mean)))
        theta = np.arange(samples) * (TWO_PI / samples)
        return float(np.mean(np.abs(self.evaluate(theta) - mean)) * TWO_PI)

    def total_variation(self, samples=1 << 14):
        """``||w||``: L1 norm of a density, total variation of a measure."""
        if self.kind == MEASURE:
            return float(sum(abs(w) for _, w in self.atoms) + TWO_PI * abs(self.background))
        if self.is_mollified:
            widths, values = self._pieces()
            return float(np.sum(widths * np.abs(values)))
        theta = np.arange(samples) * (TWO_PI / samples)
        return float(np.mean(np.abs(self.evaluate(theta))) * TWO_PI)

    def angular_field(self, n_max):
        return SpectralField.angular(self.coefficients(n_max), self.fold)

    def to_document(self):
        """JSON-ready description (inverse of :func:`parse_profile`)."""
        if self.kind == MEASURE or self.is_mollified:
            doc = {"kind": DENSITY if self.is_mollified else MEASURE}
            if self.background:
                doc["p0"] = self.background
            if self.is_mollified:
                doc["box_width"] = self.box_width
            doc["atoms"] = [{"theta": t, "weight": w} for t, w in self.atoms]
            return doc
        doc = {"kind": DENSITY}
        if 0 in self.density_modes:
            doc["p0"] = self.density_modes[0].real
        doc["modes"] = [{"n": n, "re": c.real, "im": c.imag}
                        for n, c in sorted(self.density_modes.items()) if n != 0]
        return doc


def _validate_profile(profile):
    m = profile.fold
    if profile.kind == DENSITY and not profile.is_mollified:
        for n, c in profile.density_modes.items():
            if n % m:
                raise ConfigError(f"mode n={n} is not a multiple of m={m}", "profile.modes")
            if not (math.isfinite(c.real) and math.isfinite(c.imag)):
                raise ConfigError(f"mode n={n} is not finite", "profile.modes")
        zero = profile.density_modes.get(0, 0.0)
        if abs(zero.imag) > SYMMETRY_TOLERANCE * max(1.0, abs(zero)):
            raise ConfigError("the mean of a real density must be real", "profile.p0")
        for n, c in profile.density_modes.items():
            if -n in profile.density_modes:
                partner = profile.density_modes[-n]
                if abs(c - np.conj(partner)) > SYMMETRY_TOLERANCE * max(1.0, abs(c)):
                    raise ConfigError(f"modes {n} and {-n} are not complex conjugates",
                                      "profile.modes")
        return
    if set(profile.density_modes) - {0} or abs(profile.density_modes.get(0, 0).imag) > 0:
        raise ConfigError("measures carry atoms and a real background p0 only", "profile.modes")
    if profile.is_mollified and not profile.box_width > 0:
        raise ConfigError("box width must be positive", "profile.box_width")
    for t, w in profile.atoms:
        if not (math.isfinite(t) and math.isfinite(w)):
            raise ConfigError("atoms must have finite location and weight", "profile.atoms")
    check_atom_symmetry(profile.atoms, m)


def _angle_gap(a, b):
    d = abs(a - b) % TWO_PI
    return min(d, TWO_PI - d)


def check_atom_symmetry(atoms, m):
    """Raise :class:`SymmetryError` unless the atoms are invariant under rotation by 2 pi / m."""
    shift = TWO_PI / m
    for t, w in atoms:
        rotated = (t + shift) % TWO_PI
        match = [v for s, v in atoms if _angle_gap(s, rotated) <= SYMMETRY_TOLERANCE]
        if not match:
            raise SymmetryError(f"atom at {t:.15g} has no partner at {rotated:.15g}",
                                "profile.atoms")
        if abs(sum(match) - w) > SYMMETRY_TOLERANCE * max(1.0, abs(w)):
            raise SymmetryError(f"atom weights differ under rotation at {t:.15g}",
                                "profile.atoms")


def mollify(profile, count):
    """Box mollification with kernel ``count * 1_(0, 1/count)``.

    The density at ``theta`` is ``count`` times the mass in
    ``(theta - 1/count, theta]``; Fourier coefficients are multiplied by the
    exact transform of the kernel, so the mean is preserved.
    """
    if int(count) != count or count < 1:
        raise PreconditionError(f"mollification index must be a positive integer, got {count}")
    if profile.kind != MEASURE:
        raise PreconditionError("only atomic measures are mollified")
    return VorticityProfile(DENSITY, profile.fold, density_modes=profile.density_modes,
                            atoms=profile.atoms, box_width=1.0 / count)


# ---------------------------------------------------------------------------
# documents


_CONFIG_KEYS = {"mu", "m", "alpha", "n_modes", "grid", "tol_residual", "max_iter",
                "eps_dominant", "profile"}
_GRID_KEYS = {"beta_min", "beta_max", "count"}
_PROFILE_KEYS = {"kind", "p0", "modes", "atoms", "box_width"}


def _load(document):
    if isinstance(document, (str, bytes)):
        try:
            return json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
    return document


def _number(value, path, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    if integer and int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", path)
    if not math.isfinite(value):
        raise ConfigError("expected a finite number", path)
    return int(value) if integer else float(value)


def _check_keys(doc, allowed, path):
    if not isinstance(doc, dict):
        raise ConfigError("expected an object", path)
    extra = set(doc) - allowed
    if extra:
        prefix = f"{path}." if path else ""
        raise ConfigError(f"unknown key {sorted(extra)[0]!r}", f"{prefix}{sorted(extra)[0]}")


def parse_profile(document, fold):
    """Validated :class:`VorticityProfile` from the ``profile`` part of a config."""
    doc = _load(document)
    _check_keys(doc, _PROFILE_KEYS, "profile")
    kind = doc.get("kind")
    if kind not in (DENSITY, MEASURE):
        raise ConfigError(f"kind must be 'density' or 'measure', got {kind!r}", "profile.kind")
    if kind == MEASURE or "atoms" in doc:
        atoms = doc.get("atoms")
        if not isinstance(atoms, list):
            raise ConfigError("expected a list of atoms", "profile.atoms")
        parsed = []
        for k, atom in enumerate(atoms):
            path = f"profile.atoms[{k}]"
            _check_keys(atom, {"theta", "weight"}, path)
            if "theta" not in atom or "weight" not in atom:
                raise ConfigError("atoms need 'theta' and 'weight'", path)
            parsed.append((_number(atom["theta"], f"{path}.theta"),
                           _number(atom["weight"], f"{path}.weight")))
        if "modes" in doc:
            raise ConfigError("atoms combine with a background p0 only", "profile.modes")
        background = {0: _number(doc["p0"], "profile.p0")} if "p0" in doc else {}
        if kind == DENSITY:
            width = _number(doc.get("box_width"), "profile.box_width")
            return VorticityProfile(DENSITY, fold, density_modes=background,
                                    atoms=tuple(parsed), box_width=width)
        return VorticityProfile(MEASURE, fold, density_modes=background, atoms=tuple(parsed))
    modes = {}
    if "p0" in doc:
        modes[0] = _number(doc["p0"], "profile.p0")
    entries = doc.get("modes", [])
    if not isinstance(entries, list):
        raise ConfigError("expected a list of modes", "profile.modes")
    for k, entry in enumerate(entries):
        path = f"profile.modes[{k}]"
        _check_keys(entry, {"n", "re", "im"}, path)
        if "n" not in entry:
            raise ConfigError("mode entries need 'n'", path)
        n = _number(entry["n"], f"{path}.n", integer=True)
        if n % fold:
            raise ConfigError(f"mode n={n} is not a multiple of m={fold}", f"{path}.n")
        if n in modes:
            raise ConfigError(f"mode n={n} given twice", f"{path}.n")
        modes[n] = complex(_number(entry.get("re", 0.0), f"{path}.re"),
                           _number(entry.get("im", 0.0), f"{path}.im"))
    return VorticityProfile(DENSITY, fold, density_modes=modes)


def parse_config(document):
    """``(SolverParams, VorticityProfile)`` from a config document (JSON text or dict)."""
    doc = _load(document)
    _check_keys(doc, _CONFIG_KEYS, "")
    for key in ("mu", "m", "profile"):
        if key not in doc:
            raise ConfigError("missing required key", key)
    mu = _number(doc["mu"], "mu")
    m = _number(doc["m"], "m", integer=True)
    alpha = doc.get("alpha", "auto")
    try:
        alpha = auto_alpha(mu) if alpha == "auto" else _number(alpha, "alpha")
    except (ValueError, ArithmeticError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), "mu") from exc
    grid_doc = doc.get("grid", {})
    _check_keys(grid_doc, _GRID_KEYS, "grid")
    grid_args = {}
    for key in _GRID_KEYS & set(grid_doc):
        grid_args[key] = _number(grid_doc[key], f"grid.{key}", integer=key == "count")
    options = {}
    for key, integer in (("n_modes", True), ("tol_residual", False), ("max_iter", True),
                         ("eps_dominant", False)):
        if key in doc:
            options[key] = _number(doc[key], key, integer=integer)
    try:
        grid = RadialGrid(**grid_args)
        params = SolverParams(mu=mu, m=m, alpha=alpha, grid=grid, **options)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    profile = parse_profile(doc["profile"], m)
    return params, profile


def params_document(params):
    return {
        "mu": params.mu, "m": params.m, "alpha": params.alpha, "n_modes": params.n_modes,
        "grid": {"beta_min": params.grid.beta_min, "beta_max": params.grid.beta_max,
                 "count": params.grid.count},
        "tol_residual": params.tol_residual, "max_iter": params.max_iter,
        "eps_dominant": params.eps_dominant,
    }


def params_from_document(doc):
    return SolverParams(
        mu=doc["mu"], m=doc["m"], alpha=doc["alpha"], n_modes=doc["n_modes"],
        grid=RadialGrid(**doc["grid"]), tol_residual=doc["tol_residual"],
        max_iter=doc["max_iter"], eps_dominant=doc["eps_dominant"])


def config_document(params, profile):
    """Config document reproducing ``params`` and ``profile``."""
    return params_document(params) | {"profile": profile.to_document()}


def apply_overrides(document, overrides):
    """Apply dotted ``key=value`` overrides (values parsed as JSON when possible)."""
    doc = json.loads(json.dumps(_load(document)))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.split(".")
        target = doc
        for depth, part in enumerate(parts[:-1]):
            node = target.get(part) if isinstance(target, dict) else None
            if node is None:
                node = target[part] = {}
            if not isinstance(node, dict):
                raise ConfigError("override descends into a non-object", ".".join(parts[:depth + 1]))
            target = node
        target[parts[-1]] = value
    return doc


# ---------------------------------------------------------------------------
# solution files


def _encode(array):
    data = np.ascontiguousarray(np.asarray(array), dtype="<c16")
    return data.tobytes().hex()


def _decode(text, shape):
    raw = bytes.fromhex(text)
    if len(raw) != 16 * int(np.prod(shape)):
        raise CorruptionError("payload length does not match the declared shape")
    return np.frombuffer(raw, dtype="<c16").reshape(shape).astype(complex)


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def _restore_float(value):
    return float(value) if isinstance(value, str) else value


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, temp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(temp, path)
    except OSError as exc:
        raise SolutionIOError(f"cannot write {path}: {exc}") from exc


def solution_document(sol, report):
    """JSON-ready document of a solution and its report.

    Field order: ``format``, ``version``, ``params``, ``singular_coeff``,
    ``time_rescale``, ``omega``, ``profile``, ``report``, ``payload``.  The
    payload stores the mode list, the array shape, the coefficient array as
    hex text of little-endian complex128 values and its SHA-256 digest.
    """
    p = sol.params
    payload = _encode(sol.psi.values)
    omega = sol.omega
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "params": params_document(p),
        "singular_coeff": [complex(sol.singular_coeff).real, complex(sol.singular_coeff).imag],
        "time_rescale": sol.time_rescale,
        "omega": None if omega is None else {
            "modes": [int(n) for n in omega.modes],
            "values": _encode(omega.values[:, 0])},
        "profile": None if sol.profile is None else sol.profile.to_document(),
        "report": _json_safe(report.to_dict()) if report is not None else None,
        "payload": {
            "modes": [int(n) for n in sol.psi.modes],
            "shape": list(sol.psi.values.shape),
            "encoding": "hex-complex128-le",
            "sha256": hashlib.sha256(payload.encode("ascii")).hexdigest(),
            "data": payload,
        },
    }


def write_solution(sol, report, path):
    _atomic_write(path, json.dumps(solution_document(sol, report), indent=1))


def read_solution(path):
    """Inverse of :func:`write_solution`: ``(StreamSolution, SolveReport)``."""
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise SolutionIOError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptionError(f"{path} is not a complete solution file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise CorruptionError(f"{path} is not a solution file")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path} has format version {version}, expected {FORMAT_VERSION}")
    try:
        params = params_from_document(doc["params"])
        payload = doc["payload"]
        if hashlib.sha256(payload["data"].encode("ascii")).hexdigest() != payload["sha256"]:
            raise CorruptionError("payload checksum mismatch")
        values = _decode(payload["data"], tuple(payload["shape"]))
        psi = SpectralField(payload["modes"], values, params.m, params.grid)
        omega = None
        if doc["omega"] is not None:
            omega_modes = doc["omega"]["modes"]
            omega_values = _decode(doc["omega"]["values"], (len(omega_modes),))
            omega = SpectralField(omega_modes, omega_values[:, None], params.m)
        profile = None if doc["profile"] is None else parse_profile(doc["profile"], params.m)
        re, im = doc["singular_coeff"]
        coefficient = re if im == 0 else complex(re, im)
        sol = StreamSolution(params, psi, coefficient, omega, profile, doc["time_rescale"])
        report = None
        if doc["report"] is not None:
            data = dict(doc["report"])
            data["residual_history"] = [_restore_float(v) for v in data["residual_history"]]
            for key in ("truncation_estimate", "jacobian_max"):
                data[key] = _restore_float(data[key])
            report = SolveReport.from_dict(data)
    except CorruptionError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptionError(f"{path} has an inconsistent solution record: {exc}") from exc
    return sol, report


# ---------------------------------------------------------------------------
# CSV export


FIELD_COLUMNS = ("beta", "phi", "r", "theta", "psi", "omega", "v_r", "v_theta")


def format_number(value):
    return f"{float(value):.{CSV_DIGITS}g}"


def csv_text(columns, rows):
    """CSV text with a header row; numbers use 17 significant digits."""
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(format_number(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, columns, rows):
    _atomic_write(path, csv_text(columns, rows))


def write_json(path, document):
    _atomic_write(path, json.dumps(_json_safe(document), indent=1, sort_keys=True))
