"""Periodic structured grids and tensor-valued fields on them.

All fields store their components last, after the grid axes, so a field on a
grid of shape ``(N0, N1, ..., N_{d-1})`` has arrays of shape
``(N0, ..., N_{d-1}, *component_shape)``.  Grid points are ordered row-major
with axis 0 slowest.

Derivatives are second-order centered differences with periodic wraparound.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Union

import numpy as np


class GridError(ValueError):
    """Raised for an invalid grid or a field that does not match its grid."""


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid on a flat torus of even dimension.

    Parameters
    ----------
    dim : int
        Manifold dimension, one of 2, 4, 6.
    sizes : tuple of int
        Points per axis, each at least 4.
    lengths : tuple of float
        Period of each axis.
    """

    dim: int
    sizes: tuple
    lengths: tuple

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))
        if self.dim not in (2, 4, 6):
            raise GridError(f"dim must be 2, 4 or 6, got {self.dim}")
        if len(self.sizes) != self.dim or len(self.lengths) != self.dim:
            raise GridError("sizes and lengths need one entry per axis")
        if min(self.sizes) < 4:
            raise GridError(f"every axis needs at least 4 points, got {self.sizes}")
        if not all(np.isfinite(x) and x > 0 for x in self.lengths):
            raise GridError(f"periods must be positive, got {self.lengths}")

    @classmethod
    def uniform(cls, dim, n, length=2 * math.pi):
        return cls(dim, (n,) * dim, (length,) * dim)

    @property
    def shape(self):
        return self.sizes

    @property
    def spacing(self):
        return tuple(L / n for L, n in zip(self.lengths, self.sizes))

    @property
    def npoints(self):
        return int(np.prod(self.sizes))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def coords(self):
        """Coordinate arrays ``x_a`` on the full grid, one per axis."""
        axes = [np.arange(n) * h for n, h in zip(self.sizes, self.spacing)]
        return np.meshgrid(*axes, indexing="ij")

    def to_dict(self):
        return {"dim": self.dim, "sizes": list(self.sizes), "lengths": list(self.lengths)}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["dim"]), tuple(d["sizes"]), tuple(d["lengths"]))


@lru_cache(maxsize=None)
def form_indices(dim, p):
    """Strictly increasing multi-indices of length ``p`` in lexicographic order."""
    return tuple(itertools.combinations(range(dim), p))


@lru_cache(maxsize=None)
def form_index_lookup(dim, p):
    return {I: k for k, I in enumerate(form_indices(dim, p))}


def permutation_sign(seq):
    """Sign of the permutation sorting ``seq`` (0 if an entry repeats)."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def _readonly(arr):
    view = np.asarray(arr, dtype=float).view()
    view.flags.writeable = False
    return view


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise GridError(f"{what} has non-finite entries")


@dataclass(frozen=True)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = _readonly(self.values)
        if vals.shape != self.grid.shape:
            raise GridError(f"scalar shape {vals.shape} does not match grid {self.grid.shape}")
        _check_finite(vals, "scalar field")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class TensorField:
    """Tensor field of valence ``(upper, lower)``.

    Upper indices come first in the component axes, so a (1,1) field ``J``
    has ``components[..., j, i] = J^j_i`` and acts on vectors by matrix
    multiplication.
    """

    grid: GridSpec
    valence: tuple
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "valence", tuple(int(v) for v in self.valence))
        comps = _readonly(self.components)
        rank = sum(self.valence)
        expected = self.grid.shape + (self.grid.dim,) * rank
        if comps.shape != expected:
            raise GridError(f"tensor shape {comps.shape} does not match expected {expected}")
        _check_finite(comps, "tensor field")
        object.__setattr__(self, "components", comps)

    @property
    def rank(self):
        return sum(self.valence)


@dataclass(frozen=True)
class FormField:
    """Differential form stored by strictly increasing multi-index.

    ``components[..., k]`` is the coefficient of ``dx^I`` for the ``k``-th
    index set ``I`` of :func:`form_indices`.
    """

    grid: GridSpec
    degree: int
    components: np.ndarray

    def __post_init__(self):
        if not 0 <= self.degree <= self.grid.dim:
            raise GridError(f"degree {self.degree} out of range for dim {self.grid.dim}")
        comps = _readonly(self.components)
        expected = self.grid.shape + (math.comb(self.grid.dim, self.degree),)
        if comps.shape != expected:
            raise GridError(f"form shape {comps.shape} does not match expected {expected}")
        _check_finite(comps, "form field")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_full(cls, grid, degree, full):
        return cls(grid, degree, components_from_full(full, grid.dim, degree))

    @classmethod
    def zeros(cls, grid, degree):
        return cls(grid, degree, np.zeros(grid.shape + (math.comb(grid.dim, degree),)))

    def full(self):
        """Antisymmetric tensor with all ``dim**degree`` components."""
        return full_from_components(self.components, self.grid.dim, self.degree)

    def __add__(self, other):
        _same_form(self, other)
        return FormField(self.grid, self.degree, self.components + other.components)

    def __sub__(self, other):
        _same_form(self, other)
        return FormField(self.grid, self.degree, self.components - other.components)

    def scaled(self, c):
        return FormField(self.grid, self.degree, c * np.asarray(self.components))


def _same_form(a, b):
    if a.grid != b.grid or a.degree != b.degree:
        raise GridError("forms live on different grids or have different degrees")


@lru_cache(maxsize=None)
def _antisym_gather(dim, p):
    """Gather map from stored components to the flattened full tensor.

    Position ``C`` (one past the last component) points at an appended zero.
    """
    c = math.comb(dim, p)
    src = np.full(dim ** p, c, dtype=np.intp)
    sign = np.zeros(dim ** p)
    for k, I in enumerate(form_indices(dim, p)):
        for perm in itertools.permutations(range(p)):
            idx = tuple(I[s] for s in perm)
            flat = np.ravel_multi_index(idx, (dim,) * p) if p else 0
            src[flat] = k
            sign[flat] = permutation_sign(perm)
    return src, sign


def full_from_components(comps, dim, p):
    comps = np.asarray(comps)
    base = comps.shape[:-1]
    src, sign = _antisym_gather(dim, p)
    padded = np.concatenate([comps, np.zeros(base + (1,))], axis=-1)
    return (padded[..., src] * sign).reshape(base + (dim,) * p)


def components_from_full(full, dim, p):
    full = np.asarray(full, dtype=float)
    base = full.shape[: full.ndim - p]
    flat = full.reshape(base + (dim ** p,))
    pos = [np.ravel_multi_index(I, (dim,) * p) if p else 0 for I in form_indices(dim, p)]
    return flat[..., pos]


# --- finite differences on raw arrays -------------------------------------


def diff(arr, axis, h):
    """Centered first difference of ``arr`` along grid ``axis`` (periodic)."""
    arr = np.asarray(arr)
    out = np.empty_like(arr)

    def at(s):
        return (slice(None),) * axis + (s,)

    np.subtract(arr[at(slice(2, None))], arr[at(slice(None, -2))], out=out[at(slice(1, -1))])
    np.subtract(arr[at(slice(1, 2))], arr[at(slice(-1, None))], out=out[at(slice(0, 1))])
    np.subtract(arr[at(slice(0, 1))], arr[at(slice(-2, -1))], out=out[at(slice(-1, None))])
    out *= 1.0 / (2.0 * h)
    return out


def diff2(arr, a, b, spacing):
    """Second difference: 3-point stencil for ``a == b``, composed otherwise."""
    if a == b:
        h = spacing[a]
        return (np.roll(arr, -1, axis=a) - 2.0 * arr + np.roll(arr, 1, axis=a)) / (h * h)
    return diff(diff(arr, a, spacing[a]), b, spacing[b])


def gradient(arr, grid):
    """Stack of centered partials, new axis appended last."""
    return np.stack([diff(arr, a, h) for a, h in enumerate(grid.spacing)], axis=-1)


Field = Union[ScalarField, TensorField, FormField]


def _replace(field_, arr):
    if isinstance(field_, ScalarField):
        return ScalarField(field_.grid, arr)
    if isinstance(field_, TensorField):
        return TensorField(field_.grid, field_.valence, arr)
    if isinstance(field_, FormField):
        return FormField(field_.grid, field_.degree, arr)
    raise TypeError(f"not a field: {type(field_).__name__}")


def _data(field_):
    if isinstance(field_, ScalarField):
        return field_.values
    if isinstance(field_, TensorField):
        return field_.components
    return field_.components


def _check_axis(grid, axis):
    if not 0 <= axis < grid.dim:
        raise GridError(f"axis {axis} out of range for dim {grid.dim}")


def partial(field_: Field, axis: int) -> Field:
    """Centered partial derivative along ``axis`` applied componentwise."""
    _check_axis(field_.grid, axis)
    return _replace(field_, diff(_data(field_), axis, field_.grid.spacing[axis]))


def second_partial(field_: Field, axis_a: int, axis_b: int) -> Field:
    _check_axis(field_.grid, axis_a)
    _check_axis(field_.grid, axis_b)
    return _replace(field_, diff2(_data(field_), axis_a, axis_b, field_.grid.spacing))


def integrate(density: ScalarField) -> float:
    """Rectangle rule on the periodic grid (spectrally accurate for smooth data)."""
    return integrate_on(density.grid, density.values)


def integrate_on(grid, values) -> float:
    return float(np.sum(values) * grid.cell_volume)


# --- snapshots -------------------------------------------------------------


def save_snapshot(field_: Field, path, name="field"):
    """Write ``path`` (JSON header) and ``path.bin`` (little-endian float64)."""
    path = Path(path)
    payload = path.with_suffix(path.suffix + ".bin") if path.suffix else path.with_suffix(".bin")
    data = np.ascontiguousarray(_data(field_), dtype="<f8")
    header = {"name": name, "grid": field_.grid.to_dict(), "dtype": "float64-le",
              "count": int(data.size), "payload": payload.name}
    if isinstance(field_, FormField):
        header.update(kind="form", degree=field_.degree)
    elif isinstance(field_, TensorField):
        header.update(kind="tensor", valence=list(field_.valence))
    else:
        header.update(kind="scalar")
    payload.write_bytes(data.tobytes())
    path.write_text(json.dumps(header, indent=2))
    return path


def load_snapshot(path) -> Field:
    path = Path(path)
    header = json.loads(path.read_text())
    if header.get("dtype") != "float64-le":
        raise GridError(f"unsupported snapshot dtype {header.get('dtype')!r}")
    grid = GridSpec.from_dict(header["grid"])
    raw = np.frombuffer((path.parent / header["payload"]).read_bytes(), dtype="<f8")
    if raw.size != header["count"]:
        raise GridError(f"snapshot payload has {raw.size} values, header says {header['count']}")
    kind = header["kind"]
    if kind == "form":
        p = int(header["degree"])
        return FormField(grid, p, raw.reshape(grid.shape + (math.comb(grid.dim, p),)).copy())
    if kind == "tensor":
        val = tuple(header["valence"])
        return TensorField(grid, val, raw.reshape(grid.shape + (grid.dim,) * sum(val)).copy())
    return ScalarField(grid, raw.reshape(grid.shape).copy())
