"""Parametric surfaces, materials, and lens prescriptions.

Prescription files are TOML: top-level sensor/system keys, ``[[material]]``
blocks defining wavelength/index tables, and ordered ``[[surface]]`` blocks.
Lengths are millimeters, wavelengths nanometers. An ``optimize`` list on a
surface (or the top level, for ``sensor_z``) marks fields as free parameters
and assigns them tangent slots in file order.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import tomli

from . import diff
from .diff import DiffScalar, as_diff, lift
from .errors import ConfigurationError, DegenerateSystemError, PrescriptionError

Number = Union[float, DiffScalar]

SURFACE_KINDS = ("plane", "sphere", "even_asphere", "xy_polynomial")

# Even-asphere polynomial orders r^4 .. r^12.
ASPHERE_ORDERS = (4, 6, 8, 10, 12)

# Dense ordering of x^m y^n monomials up to total degree 6:
# degree ascending, then m descending within a degree.
FREEFORM_TERMS = tuple(
    (deg - n, n) for deg in range(7) for n in range(deg + 1)
)
N_FREEFORM = len(FREEFORM_TERMS)


def _val(x: Number) -> float:
    return float(x.value) if isinstance(x, DiffScalar) else float(x)


@dataclass(frozen=True)
class Material:
    """Dispersive medium given by a table of (wavelength nm, index) samples."""

    name: str
    index_table: tuple = ()

    def __post_init__(self):
        if not self.index_table:
            raise ConfigurationError(f"material '{self.name}': empty index table")
        wl = [w for w, _ in self.index_table]
        if any(b <= a for a, b in zip(wl, wl[1:])):
            raise ConfigurationError(
                f"material '{self.name}': wavelengths must be strictly increasing"
            )
        if any(n < 1.0 for _, n in self.index_table):
            raise ConfigurationError(f"material '{self.name}': indices must be >= 1.0")


AIR = Material("air", ((587.6, 1.0),))


def index_at(material: Material, wavelength_nm: float) -> DiffScalar:
    """Refractive index at a wavelength, linearly interpolated over the table.

    Constant extrapolation at the table ends; a single-entry table is treated
    as non-dispersive. Multi-entry tables only admit wavelengths within
    50 nm of the tabulated range.
    """
    table = material.index_table
    if len(table) == 1:
        return diff.constant(table[0][1])
    wls = np.array([w for w, _ in table])
    if not (wls[0] - 50.0 <= wavelength_nm <= wls[-1] + 50.0):
        raise ConfigurationError(
            f"wavelength {wavelength_nm} nm outside table range "
            f"[{wls[0]}, {wls[-1]}] +/- 50 nm for material '{material.name}'"
        )
    ns = np.array([n for _, n in table])
    return diff.constant(float(np.interp(wavelength_nm, wls, ns)))


@dataclass(frozen=True)
class Surface:
    """One rotationally indexed optical surface of a sequential system.

    ``z`` is the vertex position on the optical axis; ``material_after`` is
    the medium on the image side. Sag conventions: positive curvature bulges
    toward -z (center of curvature at +z).
    """

    kind: str
    z: Number
    semi_aperture: float
    curvature: Number = 0.0
    conic: Number = 0.0
    asphere_coeffs: tuple = ()
    freeform_coeffs: tuple = ()
    material_after: Material = AIR
    is_stop: bool = False

    def __post_init__(self):
        if self.kind not in SURFACE_KINDS:
            raise ConfigurationError(f"unknown surface kind '{self.kind}'")
        if self.semi_aperture <= 0:
            raise ConfigurationError("semi_aperture must be > 0")
        if self.kind == "even_asphere" and len(self.asphere_coeffs) > len(ASPHERE_ORDERS):
            raise ConfigurationError(
                f"at most {len(ASPHERE_ORDERS)} asphere coefficients (orders r^4..r^12)"
            )
        if self.kind == "xy_polynomial":
            if len(self.freeform_coeffs) != N_FREEFORM:
                raise ConfigurationError(
                    f"freeform surfaces carry {N_FREEFORM} dense coefficients "
                    "(total degree <= 6)"
                )


def sag(surface: Surface, x, y) -> DiffScalar:
    """Surface height above the vertex plane at transverse position (x, y).

    Differentiable in x, y, and every surface parameter. Raises
    SurfaceDomainError if the conic radicand is non-positive anywhere.
    """
    x, y = as_diff(x), as_diff(y)
    if surface.kind == "plane":
        return diff.constant(np.zeros(np.broadcast_shapes(x.shape, y.shape)))
    if surface.kind == "xy_polynomial":
        return _poly_eval(surface.freeform_coeffs, x, y)
    r2 = x * x + y * y
    c = as_diff(surface.curvature)
    kappa = as_diff(surface.conic)
    radicand = 1.0 - (kappa + 1.0) * c * c * r2
    if np.any(radicand.value <= 0.0):
        from .errors import SurfaceDomainError

        raise SurfaceDomainError(
            f"sag undefined: (1+conic)*c^2*r^2 >= 1 at r <= {float(np.sqrt(np.max(r2.value))):.4g} mm"
        )
    s = c * r2 / (diff.sqrt(radicand) + 1.0)
    if surface.kind == "even_asphere" and surface.asphere_coeffs:
        rp = r2 * r2  # r^4
        for a in surface.asphere_coeffs:
            s = s + as_diff(a) * rp
            rp = rp * r2
    return s


def sag_values(surface: Surface, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Value-only sag with a clamped radicand, safe for Newton probing."""
    if surface.kind == "plane":
        return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)))
    if surface.kind == "xy_polynomial":
        out = np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)))
        for (m, n), cf in zip(FREEFORM_TERMS, surface.freeform_coeffs):
            cv = _val(cf)
            if cv != 0.0:
                out = out + cv * x**m * y**n
        return out
    r2 = x * x + y * y
    c = _val(surface.curvature)
    kappa = _val(surface.conic)
    radicand = np.maximum(1.0 - (kappa + 1.0) * c * c * r2, 1e-12)
    s = c * r2 / (np.sqrt(radicand) + 1.0)
    if surface.kind == "even_asphere":
        rp = r2 * r2
        for a in surface.asphere_coeffs:
            s = s + _val(a) * rp
            rp = rp * r2
    return s


def sag_gradient(surface: Surface, x, y):
    """(d sag/dx, d sag/dy), differentiable like ``sag``."""
    x, y = as_diff(x), as_diff(y)
    zeros = diff.constant(np.zeros(np.broadcast_shapes(x.shape, y.shape)))
    if surface.kind == "plane":
        return zeros, zeros
    if surface.kind == "xy_polynomial":
        gx, gy = zeros, zeros
        for (m, n), cf in zip(FREEFORM_TERMS, surface.freeform_coeffs):
            if not isinstance(cf, DiffScalar) and _val(cf) == 0.0:
                continue
            cf = as_diff(cf)
            if m > 0:
                gx = gx + cf * float(m) * _ipow(x, m - 1) * _ipow(y, n)
            if n > 0:
                gy = gy + cf * float(n) * _ipow(x, m) * _ipow(y, n - 1)
        return gx, gy
    r2 = x * x + y * y
    c = as_diff(surface.curvature)
    kappa = as_diff(surface.conic)
    radicand = 1.0 - (kappa + 1.0) * c * c * r2
    if np.any(radicand.value <= 0.0):
        from .errors import SurfaceDomainError

        raise SurfaceDomainError("sag gradient undefined: conic radicand non-positive")
    dsdr2 = c / diff.sqrt(radicand)  # d(conic sag)/dr * (1/r) = c/sqrt(radicand)
    if surface.kind == "even_asphere" and surface.asphere_coeffs:
        rp = r2  # r^2  (coefficient of order 2i contributes 2i r^(2i-2))
        for order, a in zip(ASPHERE_ORDERS, surface.asphere_coeffs):
            dsdr2 = dsdr2 + as_diff(a) * float(order) * rp
            rp = rp * r2
    return x * dsdr2, y * dsdr2


def _ipow(x: DiffScalar, n: int) -> DiffScalar:
    if n == 0:
        return diff.constant(np.ones(x.shape))
    out = x
    for _ in range(n - 1):
        out = out * x
    return out


def _poly_eval(coeffs, x: DiffScalar, y: DiffScalar) -> DiffScalar:
    out = diff.constant(np.zeros(np.broadcast_shapes(x.shape, y.shape)))
    for (m, n), cf in zip(FREEFORM_TERMS, coeffs):
        if not isinstance(cf, DiffScalar) and _val(cf) == 0.0:
            continue
        out = out + as_diff(cf) * _ipow(x, m) * _ipow(y, n)
    return out


def freeform_index(m: int, n: int) -> int:
    """Dense coefficient index of the x^m y^n term."""
    try:
        return FREEFORM_TERMS.index((m, n))
    except ValueError:
        raise ConfigurationError(f"freeform term x^{m} y^{n} exceeds total degree 6")


@dataclass(frozen=True)
class LensSystem:
    """An ordered prescription: surfaces, object conjugate, and sensor."""

    surfaces: tuple
    sensor_z: Number
    sensor_width: float
    sensor_height: float
    pixel_pitch: float
    object_distance: float = math.inf
    name: str = ""

    def __post_init__(self):
        if not self.surfaces:
            raise ConfigurationError("prescription has no surfaces")
        zs = [_val(s.z) for s in self.surfaces]
        for i, (a, b) in enumerate(zip(zs, zs[1:])):
            if b <= a:
                raise ConfigurationError(
                    f"surface[{i + 1}].z = {b} must exceed surface[{i}].z = {a}"
                )
        if _val(self.sensor_z) <= zs[-1]:
            raise ConfigurationError("sensor_z must lie beyond the last surface")
        stops = [i for i, s in enumerate(self.surfaces) if s.is_stop]
        if len(stops) != 1:
            raise ConfigurationError(
                "exactly one surface must set is_stop; got "
                + (f"surfaces {stops}" if stops else "none")
            )
        if self.pixel_pitch <= 0 or self.sensor_width <= 0 or self.sensor_height <= 0:
            raise ConfigurationError("sensor dimensions and pixel pitch must be > 0")
        for i, s in enumerate(self.surfaces):
            if s.kind in ("sphere", "even_asphere"):
                c = _val(s.curvature)
                k1 = _val(s.conic) + 1.0
                if k1 * c * c * s.semi_aperture**2 >= 1.0:
                    raise ConfigurationError(
                        f"surface[{i}]: sag is not real over the clear aperture"
                    )

    @property
    def stop_index(self) -> int:
        return next(i for i, s in enumerate(self.surfaces) if s.is_stop)

    @property
    def n_surfaces(self) -> int:
        return len(self.surfaces)


# -- parameter selection -------------------------------------------------------

_SURFACE_FIELDS = ("curvature", "conic", "z", "semi_aperture")
_VECTOR_FIELDS = ("asphere_coeffs", "freeform_coeffs")
_SYSTEM_FIELDS = ("sensor_z",)

_FIELD_RE = re.compile(r"^(\w+)(?:\[(\d+)(?:\s*,\s*(\d+))?\])?$")


@dataclass(frozen=True)
class ParameterEntry:
    surface: Optional[int]  # None for system-level fields
    field: str
    component: Optional[int] = None

    def label(self) -> str:
        base = self.field if self.surface is None else f"s{self.surface}.{self.field}"
        return base if self.component is None else f"{base}[{self.component}]"


@dataclass(frozen=True)
class ParameterSelection:
    """Ordered map from (surface, field, component) entries to tangent slots."""

    entries: tuple

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            key = (e.surface, e.field, e.component)
            if key in seen:
                raise ConfigurationError(f"duplicate parameter entry {e.label()}")
            seen.add(key)

    @property
    def n_params(self) -> int:
        return len(self.entries)

    def labels(self):
        return [e.label() for e in self.entries]


def parse_optimize_field(spec_str: str, surface: Optional[int]) -> ParameterEntry:
    m = _FIELD_RE.match(spec_str.strip())
    if not m:
        raise ConfigurationError(f"cannot parse optimize entry '{spec_str}'")
    name, i0, i1 = m.group(1), m.group(2), m.group(3)
    if surface is None:
        if name not in _SYSTEM_FIELDS:
            raise ConfigurationError(f"'{name}' is not an optimizable system field")
        return ParameterEntry(None, name)
    if name in _SURFACE_FIELDS:
        if i0 is not None:
            raise ConfigurationError(f"field '{name}' takes no component index")
        return ParameterEntry(surface, name)
    if name == "asphere_coeffs":
        if i0 is None or i1 is not None:
            raise ConfigurationError("asphere_coeffs needs a single component index")
        return ParameterEntry(surface, name, int(i0))
    if name == "freeform_coeffs":
        if i0 is None:
            raise ConfigurationError("freeform_coeffs needs [m,n] or [index]")
        comp = freeform_index(int(i0), int(i1)) if i1 is not None else int(i0)
        return ParameterEntry(surface, name, comp)
    raise ConfigurationError(f"'{name}' is not an optimizable surface field")


def get_parameter_values(system: LensSystem, selection: ParameterSelection) -> np.ndarray:
    """Current plain values of the selected parameters, in slot order."""
    out = np.empty(selection.n_params)
    for i, e in enumerate(selection.entries):
        out[i] = _val(_read_entry(system, e))
    return out


def _read_entry(system: LensSystem, e: ParameterEntry):
    if e.surface is None:
        return getattr(system, e.field)
    s = system.surfaces[e.surface]
    v = getattr(s, e.field)
    return v[e.component] if e.component is not None else v


def _write_entry(system: LensSystem, e: ParameterEntry, value) -> LensSystem:
    if e.surface is None:
        return dataclasses.replace(system, **{e.field: value})
    s = system.surfaces[e.surface]
    if e.component is not None:
        vec = list(getattr(s, e.field))
        while len(vec) <= e.component:
            vec.append(0.0)
        vec[e.component] = value
        s2 = dataclasses.replace(s, **{e.field: tuple(vec)})
    else:
        s2 = dataclasses.replace(s, **{e.field: value})
    surfaces = list(system.surfaces)
    surfaces[e.surface] = s2
    return dataclasses.replace(system, surfaces=tuple(surfaces))


def bind_parameters(system: LensSystem, selection: ParameterSelection) -> LensSystem:
    """Seed each selected field with a unit tangent in its slot."""
    P = selection.n_params
    out = system
    for i, e in enumerate(selection.entries):
        v = _val(_read_entry(out, e))
        out = _write_entry(out, e, lift(v, i, n_params=P))
    return out


def with_parameter_values(
    system: LensSystem, selection: ParameterSelection, values: Sequence[float]
) -> LensSystem:
    """New system with the selected fields set to plain float values."""
    if len(values) != selection.n_params:
        raise ConfigurationError("value vector length does not match selection")
    out = system
    for e, v in zip(selection.entries, values):
        out = _write_entry(out, e, float(v))
    return out


# -- metrics -------------------------------------------------------------------


def f_number(system: LensSystem, wavelength_nm: float = 587.6) -> float:
    """EFL over entrance-pupil diameter."""
    from .trace import entrance_pupil, paraxial

    summary = paraxial(system, wavelength_nm)
    _, ep_radius = entrance_pupil(system, wavelength_nm)
    if ep_radius <= 0:
        raise DegenerateSystemError("entrance pupil has non-positive radius")
    return abs(_val(summary.efl)) / (2.0 * ep_radius)


def mf(system_a: LensSystem, system_b: LensSystem, wavelength_nm: float = 587.6) -> float:
    """F-number mismatch between two systems."""
    return abs(f_number(system_a, wavelength_nm) - f_number(system_b, wavelength_nm))


def rrmse(params_a: np.ndarray, params_b: np.ndarray) -> float:
    """Relative RMS error of a parameter vector against reference ``params_b``."""
    a = np.asarray(params_a, dtype=np.float64)
    b = np.asarray(params_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigurationError("parameter vectors must share one selection")
    denom = math.sqrt(float(np.mean(b**2)))
    if denom == 0.0:
        raise ConfigurationError("reference parameter vector is all zero")
    return math.sqrt(float(np.mean((a - b) ** 2))) / denom


# -- prescription file I/O -------------------------------------------------------


def _fmt(v) -> str:
    v = _val(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def parse_prescription(text: str, name: str = ""):
    """Parse prescription text into (LensSystem, ParameterSelection)."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise PrescriptionError(f"prescription parse error: {err}") from err

    materials = {"air": AIR}
    for m in doc.get("material", []):
        try:
            mat = Material(m["name"], tuple((float(w), float(n)) for w, n in m["index"]))
        except (KeyError, TypeError, ValueError) as err:
            raise PrescriptionError(f"bad [[material]] block: {err}") from err
        materials[mat.name] = mat

    entries = []
    surfaces = []
    for i, s in enumerate(doc.get("surface", [])):
        try:
            kind = s.get("kind", "sphere")
            mat_name = s.get("material_after", "air")
            if mat_name not in materials:
                raise PrescriptionError(
                    f"surface[{i}].material_after: unknown material '{mat_name}'"
                )
            ff = s.get("freeform_coeffs", [])
            dense = [0.0] * N_FREEFORM
            for m_, n_, v_ in ff:
                dense[freeform_index(int(m_), int(n_))] = float(v_)
            surfaces.append(
                Surface(
                    kind=kind,
                    z=float(s["z"]),
                    semi_aperture=float(s["semi_aperture"]),
                    curvature=float(s.get("curvature", 0.0)),
                    conic=float(s.get("conic", 0.0)),
                    asphere_coeffs=tuple(float(a) for a in s.get("asphere_coeffs", [])),
                    freeform_coeffs=tuple(dense) if kind == "xy_polynomial" else (),
                    material_after=materials[mat_name],
                    is_stop=bool(s.get("is_stop", False)),
                )
            )
        except KeyError as err:
            raise PrescriptionError(f"surface[{i}] missing required field {err}") from err
        for opt in s.get("optimize", []):
            entries.append(parse_optimize_field(opt, i))

    for opt in doc.get("optimize", []):
        entries.append(parse_optimize_field(opt, None))

    try:
        system = LensSystem(
            surfaces=tuple(surfaces),
            sensor_z=float(doc["sensor_z"]),
            sensor_width=float(doc["sensor_width"]),
            sensor_height=float(doc["sensor_height"]),
            pixel_pitch=float(doc["pixel_pitch"]),
            object_distance=float(doc.get("object_distance", math.inf)),
            name=doc.get("name", name),
        )
    except KeyError as err:
        raise PrescriptionError(f"prescription missing required field {err}") from err
    except ConfigurationError as err:
        raise PrescriptionError(str(err)) from err
    return system, ParameterSelection(tuple(entries))


def load_prescription(path) -> LensSystem:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_prescription(fh.read(), name=str(path))[0]


def load_parameter_selection(path) -> ParameterSelection:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_prescription(fh.read(), name=str(path))[1]


def format_prescription(
    system: LensSystem, selection: Optional[ParameterSelection] = None
) -> str:
    """Serialize a system (and optional selection) back to prescription text."""
    sel_by_surface: dict = {}
    sel_system = []
    if selection is not None:
        for e in selection.entries:
            label = e.field
            if e.field == "asphere_coeffs":
                label = f"asphere_coeffs[{e.component}]"
            elif e.field == "freeform_coeffs":
                m_, n_ = FREEFORM_TERMS[e.component]
                label = f"freeform_coeffs[{m_},{n_}]"
            if e.surface is None:
                sel_system.append(label)
            else:
                sel_by_surface.setdefault(e.surface, []).append(label)

    lines = []
    if system.name:
        lines.append(f'name = "{system.name}"')
    lines.append(f"object_distance = {_fmt(system.object_distance)}")
    lines.append(f"sensor_z = {_fmt(system.sensor_z)}")
    lines.append(f"sensor_width = {_fmt(system.sensor_width)}")
    lines.append(f"sensor_height = {_fmt(system.sensor_height)}")
    lines.append(f"pixel_pitch = {_fmt(system.pixel_pitch)}")
    if sel_system:
        lines.append("optimize = [" + ", ".join(f'"{s}"' for s in sel_system) + "]")

    seen = {}
    for s in system.surfaces:
        mat = s.material_after
        if mat.name != "air" and mat.name not in seen:
            seen[mat.name] = mat
    for mat in seen.values():
        lines.append("")
        lines.append("[[material]]")
        lines.append(f'name = "{mat.name}"')
        pairs = ", ".join(f"[{_fmt(w)}, {_fmt(n)}]" for w, n in mat.index_table)
        lines.append(f"index = [{pairs}]")

    for i, s in enumerate(system.surfaces):
        lines.append("")
        lines.append("[[surface]]")
        lines.append(f'kind = "{s.kind}"')
        lines.append(f"z = {_fmt(s.z)}")
        lines.append(f"semi_aperture = {_fmt(s.semi_aperture)}")
        if s.kind in ("sphere", "even_asphere"):
            lines.append(f"curvature = {_fmt(s.curvature)}")
            if _val(s.conic) != 0.0:
                lines.append(f"conic = {_fmt(s.conic)}")
        if s.kind == "even_asphere" and s.asphere_coeffs:
            lines.append(
                "asphere_coeffs = [" + ", ".join(_fmt(a) for a in s.asphere_coeffs) + "]"
            )
        if s.kind == "xy_polynomial":
            terms = [
                f"[{m}, {n}, {_fmt(cf)}]"
                for (m, n), cf in zip(FREEFORM_TERMS, s.freeform_coeffs)
                if _val(cf) != 0.0 or (isinstance(cf, DiffScalar) and cf.tangent is not None)
            ]
            lines.append("freeform_coeffs = [" + ", ".join(terms) + "]")
        if s.material_after.name != "air":
            lines.append(f'material_after = "{s.material_after.name}"')
        if s.is_stop:
            lines.append("is_stop = true")
        if i in sel_by_surface:
            lines.append(
                "optimize = [" + ", ".join(f'"{x}"' for x in sel_by_surface[i]) + "]"
            )
    return "\n".join(lines) + "\n"


def save_prescription(system: LensSystem, path, selection=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_prescription(system, selection))
