"""Forward-mode differentiable scalars, complex values, and 3-vectors.

A ``DiffScalar`` carries a float64 value array of arbitrary shape together
with a tangent block of shape ``(P, *value.shape)``, where ``P`` is the
number of active optimization parameters. Elementwise numpy broadcasting
applies, so a single ``DiffScalar`` holds a whole batch (e.g. one per ray)
and all arithmetic stays vectorized. Constants carry ``tangent=None``,
which behaves as an all-zero block of whatever width the other operand has.

Everything here is immutable after construction and free of global state;
the tangent width is fixed by whoever seeds the parameters (see
``raywave.lens.ParameterSelection``).
"""

from __future__ import annotations

from typing import Optional, Union

import numpy as np

from .errors import ConfigurationError, NumericDomainError

ArrayLike = Union[float, int, np.ndarray, "DiffScalar"]


def _pad_tangent(tan: np.ndarray, out_ndim: int) -> np.ndarray:
    """Insert singleton axes after the parameter axis so trailing dims align."""
    missing = out_ndim - (tan.ndim - 1)
    if missing > 0:
        tan = tan.reshape(tan.shape[0], *([1] * missing), *tan.shape[1:])
    return tan


def _combine_tangents(out_shape, *terms):
    """Sum ``coef * tangent`` terms, broadcast to ``(P, *out_shape)``.

    Each term is a ``(coef, tangent)`` pair; ``coef`` is an ndarray (or None
    for coefficient 1) and ``tangent`` may be None (constant operand).
    """
    acc = None
    width = None
    for coef, tan in terms:
        if tan is None:
            continue
        if width is None:
            width = tan.shape[0]
        elif tan.shape[0] != width:
            raise ConfigurationError(
                f"mixed tangent widths {width} and {tan.shape[0]}; "
                "all parameters must come from one selection"
            )
        t = _pad_tangent(tan, len(out_shape))
        term = t if coef is None else np.asarray(coef)[None] * t
        acc = term if acc is None else acc + term
    if acc is None:
        return None
    if acc.shape[1:] != tuple(out_shape):
        acc = np.broadcast_to(acc, (acc.shape[0], *out_shape))
    return acc


class DiffScalar:
    """Elementwise real value with forward-mode tangents.

    Attributes:
        value: float64 ndarray, any shape (0-d for a plain scalar).
        tangent: ``(P, *value.shape)`` ndarray, or None for a constant.
    """

    __slots__ = ("value", "tangent")

    def __init__(self, value, tangent: Optional[np.ndarray] = None):
        self.value = np.asarray(value, dtype=np.float64)
        if tangent is not None:
            tangent = np.asarray(tangent, dtype=np.float64)
            if tangent.shape[1:] != self.value.shape:
                tangent = np.broadcast_to(
                    _pad_tangent(tangent, self.value.ndim),
                    (tangent.shape[0], *self.value.shape),
                )
        self.tangent = tangent

    # -- introspection ----------------------------------------------------

    @property
    def shape(self):
        return self.value.shape

    @property
    def n_params(self) -> int:
        return 0 if self.tangent is None else self.tangent.shape[0]

    def tangent_or_zeros(self, width: Optional[int] = None) -> np.ndarray:
        if self.tangent is not None:
            return self.tangent
        if width is None:
            width = 0
        return np.zeros((width, *self.value.shape))

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        if self.value.ndim == 0:
            tan = "const" if self.tangent is None else np.array2string(self.tangent, precision=6)
            return f"DiffScalar({float(self.value):.6g}, {tan})"
        return f"DiffScalar(shape={self.value.shape}, P={self.n_params})"

    def __len__(self):
        return len(self.value)

    def __getitem__(self, idx) -> "DiffScalar":
        tan = None if self.tangent is None else self.tangent[(slice(None),) + (idx if isinstance(idx, tuple) else (idx,))]
        return DiffScalar(self.value[idx], tan)

    def reshape(self, *shape) -> "DiffScalar":
        v = self.value.reshape(*shape)
        tan = None if self.tangent is None else self.tangent.reshape(self.tangent.shape[0], *v.shape)
        return DiffScalar(v, tan)

    def ravel(self) -> "DiffScalar":
        return self.reshape(-1)

    def detach(self) -> "DiffScalar":
        """Drop tangents (gradient-opaque copy of the value)."""
        return DiffScalar(self.value)

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other: ArrayLike) -> "DiffScalar":
        o = as_diff(other)
        v = self.value + o.value
        return DiffScalar(v, _combine_tangents(v.shape, (None, self.tangent), (None, o.tangent)))

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "DiffScalar":
        o = as_diff(other)
        v = self.value - o.value
        return DiffScalar(
            v,
            _combine_tangents(v.shape, (None, self.tangent), (np.float64(-1.0), o.tangent)),
        )

    def __rsub__(self, other: ArrayLike) -> "DiffScalar":
        return as_diff(other).__sub__(self)

    def __neg__(self) -> "DiffScalar":
        return DiffScalar(-self.value, None if self.tangent is None else -self.tangent)

    def __mul__(self, other: ArrayLike) -> "DiffScalar":
        o = as_diff(other)
        v = self.value * o.value
        return DiffScalar(
            v, _combine_tangents(v.shape, (o.value, self.tangent), (self.value, o.tangent))
        )

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "DiffScalar":
        o = as_diff(other)
        if np.any(o.value == 0.0):
            raise NumericDomainError("div", "division by zero")
        v = self.value / o.value
        inv = 1.0 / o.value
        return DiffScalar(
            v,
            _combine_tangents(v.shape, (inv, self.tangent), (-v * inv, o.tangent)),
        )

    def __rtruediv__(self, other: ArrayLike) -> "DiffScalar":
        return as_diff(other).__truediv__(self)

    def __pow__(self, other: ArrayLike) -> "DiffScalar":
        if isinstance(other, (int, float)) and float(other) == int(other):
            n = int(other)
            v = self.value**n
            return DiffScalar(
                v,
                _combine_tangents(v.shape, (n * self.value ** (n - 1), self.tangent)),
            )
        o = as_diff(other)
        if np.any(self.value <= 0.0):
            raise NumericDomainError("pow", "non-integer power of non-positive base")
        v = self.value**o.value
        return DiffScalar(
            v,
            _combine_tangents(
                v.shape,
                (o.value * self.value ** (o.value - 1.0), self.tangent),
                (v * np.log(self.value), o.tangent),
            ),
        )

    # -- comparisons (plain boolean arrays) ---------------------------------

    def __lt__(self, other):
        return self.value < _value_of(other)

    def __le__(self, other):
        return self.value <= _value_of(other)

    def __gt__(self, other):
        return self.value > _value_of(other)

    def __ge__(self, other):
        return self.value >= _value_of(other)


def _value_of(x) -> np.ndarray:
    return x.value if isinstance(x, DiffScalar) else np.asarray(x, dtype=np.float64)


def as_diff(x: ArrayLike) -> DiffScalar:
    return x if isinstance(x, DiffScalar) else DiffScalar(x)


def constant(x: ArrayLike) -> DiffScalar:
    """A DiffScalar with an all-zero (absent) tangent."""
    return DiffScalar(_value_of(x))


def lift(value, parameter_index: Optional[int] = None, n_params: int = 0) -> DiffScalar:
    """Make a DiffScalar, optionally seeded as optimization parameter.

    Args:
        value: scalar or array value.
        parameter_index: tangent slot to seed with a unit basis vector, or
            None for a constant.
        n_params: tangent width P; required when parameter_index is given.

    Raises:
        ConfigurationError: index out of range for the given width.
    """
    if parameter_index is None:
        return DiffScalar(value)
    if not 0 <= parameter_index < n_params:
        raise ConfigurationError(
            f"parameter index {parameter_index} out of range for width {n_params}"
        )
    v = np.asarray(value, dtype=np.float64)
    tan = np.zeros((n_params, *v.shape))
    tan[parameter_index] = 1.0
    return DiffScalar(v, tan)


# -- elementwise functions ---------------------------------------------------


def sqrt(x: ArrayLike) -> DiffScalar:
    x = as_diff(x)
    if np.any(x.value < 0.0):
        raise NumericDomainError("sqrt", "negative argument")
    v = np.sqrt(x.value)
    if x.tangent is None:
        return DiffScalar(v)
    return DiffScalar(v, _combine_tangents(v.shape, (0.5 / v, x.tangent)))


def sin(x: ArrayLike) -> DiffScalar:
    x = as_diff(x)
    v = np.sin(x.value)
    return DiffScalar(v, _combine_tangents(v.shape, (np.cos(x.value), x.tangent)))


def cos(x: ArrayLike) -> DiffScalar:
    x = as_diff(x)
    v = np.cos(x.value)
    return DiffScalar(v, _combine_tangents(v.shape, (-np.sin(x.value), x.tangent)))


def tan(x: ArrayLike) -> DiffScalar:
    x = as_diff(x)
    v = np.tan(x.value)
    return DiffScalar(v, _combine_tangents(v.shape, (1.0 + v * v, x.tangent)))


def atan2(y: ArrayLike, x: ArrayLike) -> DiffScalar:
    y, x = as_diff(y), as_diff(x)
    denom = x.value * x.value + y.value * y.value
    if np.any(denom == 0.0):
        raise NumericDomainError("atan2", "both arguments zero")
    v = np.arctan2(y.value, x.value)
    return DiffScalar(
        v,
        _combine_tangents(v.shape, (x.value / denom, y.tangent), (-y.value / denom, x.tangent)),
    )


def exp(x: ArrayLike) -> DiffScalar:
    x = as_diff(x)
    v = np.exp(x.value)
    return DiffScalar(v, _combine_tangents(v.shape, (v, x.tangent)))


def log(x: ArrayLike) -> DiffScalar:
    x = as_diff(x)
    if np.any(x.value <= 0.0):
        raise NumericDomainError("log", "non-positive argument")
    v = np.log(x.value)
    return DiffScalar(v, _combine_tangents(v.shape, (1.0 / x.value, x.tangent)))


def absolute(x: ArrayLike) -> DiffScalar:
    x = as_diff(x)
    v = np.abs(x.value)
    return DiffScalar(v, _combine_tangents(v.shape, (np.sign(x.value), x.tangent)))


def where(mask, a: ArrayLike, b: ArrayLike) -> DiffScalar:
    """Elementwise select; tangents follow the selected branch."""
    a, b = as_diff(a), as_diff(b)
    mask = np.asarray(mask, dtype=bool)
    v = np.where(mask, a.value, b.value)
    if a.tangent is None and b.tangent is None:
        return DiffScalar(v)
    width = a.n_params or b.n_params
    ta = _pad_tangent(a.tangent_or_zeros(width), v.ndim)
    tb = _pad_tangent(b.tangent_or_zeros(width), v.ndim)
    return DiffScalar(v, np.where(mask[None], ta, tb))


def dsum(x: ArrayLike, axis=None) -> DiffScalar:
    x = as_diff(x)
    v = x.value.sum(axis=axis)
    if x.tangent is None:
        return DiffScalar(v)
    if axis is None:
        taxis = tuple(range(1, x.tangent.ndim))
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        taxis = tuple(a + 1 if a >= 0 else a for a in ax)
    return DiffScalar(v, x.tangent.sum(axis=taxis))


def dmean(x: ArrayLike, axis=None) -> DiffScalar:
    x = as_diff(x)
    n = x.value.size if axis is None else np.prod([x.value.shape[a] for a in np.atleast_1d(axis)])
    return dsum(x, axis) * (1.0 / float(n))


def dmax(x: ArrayLike) -> DiffScalar:
    """Global max; tangent taken at the (first) argmax element."""
    x = as_diff(x)
    idx = np.unravel_index(np.argmax(x.value), x.value.shape)
    v = x.value[idx]
    tan = None if x.tangent is None else x.tangent[(slice(None),) + idx].copy()
    return DiffScalar(v, tan)


def stack(xs, axis=0) -> DiffScalar:
    """Stack DiffScalars of identical shape along a new value axis."""
    xs = [as_diff(x) for x in xs]
    v = np.stack([x.value for x in xs], axis=axis)
    width = max((x.n_params for x in xs), default=0)
    if width == 0:
        return DiffScalar(v)
    taxis = axis + 1 if axis >= 0 else axis
    tan = np.stack([x.tangent_or_zeros(width) for x in xs], axis=taxis)
    return DiffScalar(v, tan)


# -- complex values over DiffScalar -------------------------------------------


class DiffComplex:
    """Complex number whose real and imaginary parts are DiffScalars."""

    __slots__ = ("re", "im")

    def __init__(self, re: ArrayLike, im: ArrayLike):
        self.re = as_diff(re)
        self.im = as_diff(im)

    @property
    def shape(self):
        return np.broadcast_shapes(self.re.shape, self.im.shape)

    def __add__(self, other: "DiffComplex") -> "DiffComplex":
        return DiffComplex(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "DiffComplex") -> "DiffComplex":
        return DiffComplex(self.re - other.re, self.im - other.im)

    def __mul__(self, other) -> "DiffComplex":
        if isinstance(other, DiffComplex):
            return DiffComplex(
                self.re * other.re - self.im * other.im,
                self.re * other.im + self.im * other.re,
            )
        if isinstance(other, complex):
            return DiffComplex(
                self.re * other.real - self.im * other.imag,
                self.re * other.imag + self.im * other.real,
            )
        return DiffComplex(self.re * other, self.im * other)

    __rmul__ = __mul__

    def conj(self) -> "DiffComplex":
        return DiffComplex(self.re, -self.im)

    def abs2(self) -> DiffScalar:
        return self.re * self.re + self.im * self.im

    def abs(self) -> DiffScalar:
        return sqrt(self.abs2())

    def arg(self) -> DiffScalar:
        return atan2(self.im, self.re)

    def sum(self, axis=None) -> "DiffComplex":
        return DiffComplex(dsum(self.re, axis), dsum(self.im, axis))

    def __getitem__(self, idx) -> "DiffComplex":
        return DiffComplex(self.re[idx], self.im[idx])

    def __repr__(self):
        return f"DiffComplex(re={self.re!r}, im={self.im!r})"


def cexp_i(phase: ArrayLike) -> DiffComplex:
    """exp(j * phase) as a DiffComplex, with tangents."""
    phase = as_diff(phase)
    if not np.all(np.isfinite(phase.value)):
        raise NumericDomainError("cexp_i", "non-finite phase")
    return DiffComplex(cos(phase), sin(phase))


# -- 3-vectors -----------------------------------------------------------------


class Vec3:
    """Cartesian 3-vector of DiffScalars (positions in mm, directions unitless)."""

    __slots__ = ("x", "y", "z")

    def __init__(self, x: ArrayLike, y: ArrayLike, z: ArrayLike):
        self.x = as_diff(x)
        self.y = as_diff(y)
        self.z = as_diff(z)

    @property
    def shape(self):
        return np.broadcast_shapes(self.x.shape, self.y.shape, self.z.shape)

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def scale(self, s: ArrayLike) -> "Vec3":
        s = as_diff(s)
        return Vec3(self.x * s, self.y * s, self.z * s)

    def dot(self, other: "Vec3") -> DiffScalar:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> DiffScalar:
        return sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.norm()
        if np.any(n.value == 0.0):
            raise NumericDomainError("normalize", "zero-length vector")
        return self.scale(1.0 / n)

    def __getitem__(self, idx) -> "Vec3":
        return Vec3(self.x[idx], self.y[idx], self.z[idx])

    def detach(self) -> "Vec3":
        return Vec3(self.x.detach(), self.y.detach(), self.z.detach())

    def __repr__(self):
        return f"Vec3({self.x!r}, {self.y!r}, {self.z!r})"


def vwhere(mask, a: Vec3, b: Vec3) -> Vec3:
    return Vec3(where(mask, a.x, b.x), where(mask, a.y, b.y), where(mask, a.z, b.z))
