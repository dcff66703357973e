"""Regular node-centred grids and the volume containers built on them.

Grid nodes use 1-based indices in every public function, matching the usual
mathematical notation ``x_i = a + h (i - 1)``, ``i = 1..n``.  Storage is a
plain C-ordered numpy array with ``values[i - 1, j - 1, k - 1]`` holding the
sample at node ``(x_i, y_j, z_k)``; the last axis (z) is contiguous.

The first and last node of each axis sit exactly on the domain boundary, so
the spacing along axis ``d`` is ``(upper[d] - lower[d]) / (shape[d] - 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, GridRangeError, InputError, ParameterError

__all__ = ["Domain", "GridSpec", "VolumeGrid", "SegmentationMask"]


def _triple(values, name, cast=float):
    try:
        out = tuple(cast(v) for v in values)
    except TypeError:
        out = (cast(values),) * 3
    if len(out) != 3:
        raise ParameterError(f"{name} must have three components, got {len(out)}")
    return out


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``[lower[0], upper[0]] x ... x [lower[2], upper[2]]``."""

    lower: tuple[float, float, float]
    upper: tuple[float, float, float]

    def __post_init__(self):
        lower = _triple(self.lower, "lower")
        upper = _triple(self.upper, "upper")
        for d in range(3):
            if not (np.isfinite(lower[d]) and np.isfinite(upper[d])):
                raise ParameterError("domain bounds must be finite")
            if not upper[d] > lower[d]:
                raise ParameterError(
                    f"upper[{d}]={upper[d]} must exceed lower[{d}]={lower[d]}"
                )
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def cube(cls, a: float = 0.0, b: float = 1.0) -> "Domain":
        return cls((a, a, a), (b, b, b))

    @property
    def extent(self) -> np.ndarray:
        return np.subtract(self.upper, self.lower)

    def contains(self, points, atol: float = 0.0) -> np.ndarray:
        """Boolean mask of the points (``(..., 3)``) inside the closed box."""
        p = np.asarray(points, dtype=float)
        lo = np.asarray(self.lower) - atol
        hi = np.asarray(self.upper) + atol
        return np.all((p >= lo) & (p <= hi), axis=-1)

    def isclose(self, other: "Domain", rtol: float = 1e-12) -> bool:
        scale = np.maximum(np.abs(self.extent), np.abs(other.extent))
        return bool(
            np.all(np.abs(np.subtract(self.lower, other.lower)) <= rtol * scale)
            and np.all(np.abs(np.subtract(self.upper, other.upper)) <= rtol * scale)
        )


@dataclass(frozen=True)
class GridSpec:
    """An equispaced node-centred grid over a :class:`Domain`."""

    domain: Domain
    shape: tuple[int, int, int]

    def __post_init__(self):
        shape = _triple(self.shape, "shape", cast=int)
        if any(n < 2 for n in shape):
            raise ParameterError(f"every axis needs at least 2 nodes, got {shape}")
        object.__setattr__(self, "shape", shape)

    @classmethod
    def cube(cls, n: int, a: float = 0.0, b: float = 1.0) -> "GridSpec":
        return cls(Domain.cube(a, b), (n, n, n))

    @cached_property
    def spacing(self) -> tuple[float, float, float]:
        ext = self.domain.extent
        return tuple(float(ext[d] / (self.shape[d] - 1)) for d in range(3))

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1] * self.shape[2]

    @cached_property
    def _axes(self):
        axes = []
        for d in range(3):
            c = np.linspace(self.domain.lower[d], self.domain.upper[d], self.shape[d])
            c.flags.writeable = False
            axes.append(c)
        return tuple(axes)

    def axis_coords(self, axis: int) -> np.ndarray:
        """Node coordinates along ``axis`` (read-only array of length ``shape[axis]``)."""
        return self._axes[axis]

    def node_coordinate(self, index) -> tuple[float, float, float]:
        """Physical coordinate of the node with 1-based ``index``."""
        idx = _triple(index, "index", cast=int)
        for d in range(3):
            if not 1 <= idx[d] <= self.shape[d]:
                raise GridRangeError(
                    f"index {idx[d]} on axis {d} outside 1..{self.shape[d]}"
                )
        return tuple(float(self._axes[d][idx[d] - 1]) for d in range(3))

    def locate_cells(self, points) -> np.ndarray:
        """Vectorised :meth:`locate_cell` for an ``(N, 3)`` array; no domain check.

        Coordinates outside the domain are clamped to the first/last cell.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(p.shape, dtype=np.intp)
        for d in range(3):
            out[:, d] = _locate_axis(self._axes[d], p[:, d])
        return out + 1

    def locate_cell(self, point) -> tuple[int, int, int]:
        """1-based lower corner ``(p, q, r)`` of the cell containing ``point``.

        A point on an interior node belongs to the cell whose lower corner is
        that node; the upper boundary belongs to the last cell.
        """
        pt = np.asarray(_triple(point, "point"))
        if not self.domain.contains(pt):
            raise DomainError(f"point {tuple(pt)} outside domain {self.domain}")
        return tuple(int(v) for v in self.locate_cells(pt[None, :])[0])

    def compatible(self, other: "GridSpec") -> bool:
        return self.shape == other.shape and self.domain.isclose(other.domain)


def _locate_axis(coords: np.ndarray, x: np.ndarray) -> np.ndarray:
    """0-based cell index along one axis, clamped to ``0..n-2``."""
    n = coords.shape[0]
    h = (coords[-1] - coords[0]) / (n - 1)
    with np.errstate(invalid="ignore"):
        guess = np.floor((x - coords[0]) / h)
    guess = np.clip(np.nan_to_num(guess), 0, n - 2).astype(np.intp)
    # floating-point guard: make coords[p] <= x < coords[p+1] hold exactly
    up = (guess < n - 2) & (x >= coords[np.minimum(guess + 1, n - 1)])
    guess[up] += 1
    down = (guess > 0) & (x < coords[guess])
    guess[down] -= 1
    return guess


@dataclass(frozen=True, eq=False)
class VolumeGrid:
    """Scalar samples on the nodes of a :class:`GridSpec`.

    ``values`` is stored as a read-only float64 array of shape ``spec.shape``.
    """

    spec: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, order="C", copy=True)
        if vals.shape != self.spec.shape:
            raise InputError(f"values shape {vals.shape} != grid shape {self.spec.shape}")
        if not np.all(np.isfinite(vals)):
            raise InputError("volume values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def shape(self):
        return self.spec.shape

    @classmethod
    def from_function(cls, spec: GridSpec, func) -> "VolumeGrid":
        """Sample ``func(x, y, z)`` (broadcasting) on every node of ``spec``."""
        x, y, z = (spec.axis_coords(d) for d in range(3))
        vals = func(x[:, None, None], y[None, :, None], z[None, None, :])
        return cls(spec, np.broadcast_to(vals, spec.shape))


@dataclass(frozen=True, eq=False)
class SegmentationMask:
    """Integer label volume; label 0 is the background.

    ``label_count`` is ``m + 1`` for labels ``0..m``.  It defaults to
    ``labels.max() + 1`` but may be larger when some labels are absent.
    """

    spec: GridSpec
    labels: np.ndarray = field(repr=False)
    label_count: int | None = None

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.shape != self.spec.shape:
            raise InputError(f"labels shape {lab.shape} != grid shape {self.spec.shape}")
        if lab.dtype.kind == "f":
            if not np.all(np.isfinite(lab)) or np.any(lab != np.round(lab)):
                raise InputError("labels must be integers")
        elif lab.dtype.kind not in "iub":
            raise InputError(f"labels must be integers, got dtype {lab.dtype}")
        lab = np.array(lab, dtype=np.int32, order="C", copy=True)
        if lab.size and lab.min() < 0:
            raise InputError("labels must be nonnegative")
        top = int(lab.max()) + 1 if lab.size else 1
        count = top if self.label_count is None else int(self.label_count)
        if count < top:
            raise InputError(f"label_count={count} but labels reach {top - 1}")
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "label_count", count)

    @property
    def shape(self):
        return self.spec.shape

    def counts(self) -> np.ndarray:
        """Voxel count per label ``0..label_count-1``."""
        return np.bincount(self.labels.ravel(), minlength=self.label_count)

    def present_labels(self) -> np.ndarray:
        return np.flatnonzero(self.counts())
