"""Analytic piecewise-constant test volumes.

The 3D Shepp-Logan head is the usual ten-ellipsoid table on ``[-1, 1]^3``
(long axis along y), with the two ventricle intensities set to ``-0.15``.
Summing the ellipsoids then yields exactly six distinct values::

    label  value  region
    0      0.00   outside the skull
    1      1.00   skull
    2      0.05   ventricles
    3      0.20   brain tissue
    4      0.30   small high-intensity ellipsoids
    5      0.15   ventricle/upper ellipsoid overlap

The two-compartment phantom is a PET-style cylinder with an empty plastic
shell, a water background ("cold") and hot spheres on a ring.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GeometryError, InputError, ParameterError
from .grid import Domain, GridSpec, SegmentationMask, VolumeGrid

__all__ = [
    "EllipsoidSpec",
    "PhantomDefinition",
    "shepp_logan",
    "SHEPP_LOGAN_TABLE",
    "SHEPP_LOGAN_VALUES",
    "eval_phantom",
    "rasterize_phantom",
    "load_phantom_table",
    "save_phantom_table",
    "TwoCompartmentLayout",
    "two_compartment_layout",
    "make_two_compartment",
    "TWO_COMPARTMENT_LABELS",
]

#   x0      y0      z0     a       b      c     phi    intensity
SHEPP_LOGAN_TABLE = (
    (0.0, 0.0, 0.0, 0.69, 0.92, 0.81, 0.0, 1.0),
    (0.0, -0.0184, 0.0, 0.6624, 0.874, 0.78, 0.0, -0.8),
    (0.22, 0.0, 0.0, 0.11, 0.31, 0.22, -18.0, -0.15),
    (-0.22, 0.0, 0.0, 0.16, 0.41, 0.28, 18.0, -0.15),
    (0.0, 0.35, -0.15, 0.21, 0.25, 0.41, 0.0, 0.1),
    (0.0, 0.1, 0.25, 0.046, 0.046, 0.05, 0.0, 0.1),
    (0.0, -0.1, 0.25, 0.046, 0.046, 0.05, 0.0, 0.1),
    (-0.08, -0.605, 0.0, 0.046, 0.023, 0.05, 0.0, 0.1),
    (0.0, -0.606, 0.0, 0.023, 0.023, 0.02, 0.0, 0.1),
    (0.06, -0.605, 0.0, 0.023, 0.046, 0.02, 0.0, 0.1),
)
SHEPP_LOGAN_VALUES = (0.0, 1.0, 0.05, 0.2, 0.3, 0.15)

_VALUE_ATOL = 1e-9


@dataclass(frozen=True)
class EllipsoidSpec:
    """Solid ellipsoid rotated by ``rotation`` degrees about the z axis."""

    center: tuple[float, float, float]
    semi_axes: tuple[float, float, float]
    rotation: float = 0.0
    additive_intensity: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        axes = tuple(float(v) for v in self.semi_axes)
        if len(axes) != 3 or any(not s > 0 for s in axes):
            raise ParameterError(f"semi-axes must be three positive numbers, got {axes}")
        object.__setattr__(self, "semi_axes", axes)

    def quadratic_form(self, x, y, z):
        """``sum((R^T (p - c))_d / s_d)^2``; the ellipsoid is where this is <= 1."""
        phi = np.deg2rad(self.rotation)
        c, s = np.cos(phi), np.sin(phi)
        dx, dy, dz = x - self.center[0], y - self.center[1], z - self.center[2]
        u = dx * c + dy * s
        v = -dx * s + dy * c
        a, b, cc = self.semi_axes
        return (u / a) ** 2 + (v / b) ** 2 + (dz / cc) ** 2

    def bounding_box(self):
        phi = np.deg2rad(self.rotation)
        a, b, c = self.semi_axes
        hx = np.hypot(a * np.cos(phi), b * np.sin(phi))
        hy = np.hypot(a * np.sin(phi), b * np.cos(phi))
        half = np.array([hx, hy, c])
        return np.asarray(self.center) - half, np.asarray(self.center) + half


@dataclass(frozen=True)
class PhantomDefinition:
    """Additive ellipsoids over a domain.

    ``label_values`` fixes the label order of :func:`rasterize_phantom`
    (entry ``k`` is the value of label ``k``).  When omitted, labels follow
    the sorted distinct values, which puts a zero background at label 0.
    """

    ellipsoids: tuple[EllipsoidSpec, ...]
    domain: Domain = field(default_factory=lambda: Domain.cube(-1.0, 1.0))
    label_values: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "ellipsoids", tuple(self.ellipsoids))
        if self.label_values is not None:
            object.__setattr__(
                self, "label_values", tuple(float(v) for v in self.label_values)
            )


def shepp_logan(domain: Domain | None = None) -> PhantomDefinition:
    """Standard six-segment 3D Shepp-Logan head.

    With a non-default ``domain`` the table is mapped affinely from
    ``[-1, 1]^3``.
    """
    lo = np.asarray(domain.lower) if domain is not None else -np.ones(3)
    half = np.asarray(domain.extent) / 2 if domain is not None else np.ones(3)
    if not np.allclose(half, half[0]):
        raise ParameterError("Shepp-Logan needs a cubic domain")
    ells = []
    for x0, y0, z0, a, b, c, phi, val in SHEPP_LOGAN_TABLE:
        center = lo + half * (np.array([x0, y0, z0]) + 1.0)
        ells.append(EllipsoidSpec(tuple(center), tuple(half[0] * np.array([a, b, c])), phi, val))
    return PhantomDefinition(
        tuple(ells),
        domain if domain is not None else Domain.cube(-1.0, 1.0),
        SHEPP_LOGAN_VALUES,
    )


def eval_phantom(definition: PhantomDefinition, points) -> np.ndarray | float:
    """Sum of intensities of the ellipsoids containing each point.

    ``points`` is a single triple or an ``(N, 3)`` array.
    """
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    total = np.zeros(p.shape[0])
    for e in definition.ellipsoids:
        inside = e.quadratic_form(p[:, 0], p[:, 1], p[:, 2]) <= 1.0
        total[inside] += e.additive_intensity
    return float(total[0]) if single else total


def _raw_raster(definition, spec):
    axes = [spec.axis_coords(d) for d in range(3)]
    total = np.zeros(spec.shape)
    for e in definition.ellipsoids:
        lo, hi = e.bounding_box()
        sl = []
        for d in range(3):
            i0 = np.searchsorted(axes[d], lo[d], side="left")
            i1 = np.searchsorted(axes[d], hi[d], side="right")
            sl.append(slice(i0, i1))
        if any(s.stop <= s.start for s in sl):
            continue
        x = axes[0][sl[0]][:, None, None]
        y = axes[1][sl[1]][None, :, None]
        z = axes[2][sl[2]][None, None, :]
        inside = e.quadratic_form(x, y, z) <= 1.0
        total[tuple(sl)] += np.where(inside, e.additive_intensity, 0.0)
    return total


def rasterize_phantom(definition: PhantomDefinition, spec: GridSpec):
    """Sample the phantom on ``spec`` and label its constant regions.

    Returns ``(volume, mask)``.  Volume values are snapped to the label's
    reference value, so ``volume == label_values[mask]`` holds exactly.
    """
    if not spec.domain.isclose(definition.domain):
        raise InputError("grid domain differs from the phantom domain")
    raw = _raw_raster(definition, spec)
    if definition.label_values is not None:
        ref = np.asarray(definition.label_values)
    else:
        ref = np.unique(np.round(raw, 12))
        if ref[0] != 0.0 and np.any(ref == 0.0):
            ref = np.concatenate([[0.0], ref[ref != 0.0]])
    labels = np.full(spec.shape, -1, dtype=np.int32)
    for k, v in enumerate(ref):
        labels[np.abs(raw - v) <= _VALUE_ATOL] = k
    if np.any(labels < 0):
        stray = np.unique(raw[labels < 0])
        raise GeometryError(f"phantom produces values {stray} outside its label table")
    volume = VolumeGrid(spec, ref[labels])
    return volume, SegmentationMask(spec, labels, len(ref))


def load_phantom_table(path, domain: Domain | None = None) -> PhantomDefinition:
    """Read ellipsoids from a whitespace table.

    One ellipsoid per line: ``cx cy cz a b c angle_deg intensity``.  Blank
    lines and ``#`` comments are ignored.  A line ``domain lo hi`` sets a
    cubic domain; ``labels v0 v1 ...`` fixes the label order.
    """
    ells, labels = [], None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "domain":
            domain = Domain.cube(float(parts[1]), float(parts[2]))
            continue
        if parts[0] == "labels":
            labels = tuple(float(v) for v in parts[1:])
            continue
        if len(parts) != 8:
            raise InputError(f"{path}:{lineno}: expected 8 numbers, got {len(parts)}")
        v = [float(t) for t in parts]
        ells.append(EllipsoidSpec(tuple(v[0:3]), tuple(v[3:6]), v[6], v[7]))
    return PhantomDefinition(tuple(ells), domain or Domain.cube(-1.0, 1.0), labels)


def save_phantom_table(definition: PhantomDefinition, path) -> None:
    lines = ["# cx cy cz a b c angle_deg intensity"]
    d = definition.domain
    if np.allclose(d.lower, d.lower[0]) and np.allclose(d.upper, d.upper[0]):
        lines.append(f"domain {d.lower[0]!r} {d.upper[0]!r}")
    if definition.label_values is not None:
        lines.append("labels " + " ".join(repr(v) for v in definition.label_values))
    for e in definition.ellipsoids:
        nums = (*e.center, *e.semi_axes, e.rotation, e.additive_intensity)
        lines.append(" ".join(repr(float(v)) for v in nums))
    Path(path).write_text("\n".join(lines) + "\n")


# -- two-compartment PET surrogate -----------------------------------------

TWO_COMPARTMENT_LABELS = {"exterior": 0, "shell": 1, "cold": 2, "hot": 3}

# sphere diameters of the physical phantom, in mm
IEC_SPHERE_DIAMETERS = (10.0, 13.0, 17.0, 22.0, 28.0, 37.0)


@dataclass(frozen=True)
class TwoCompartmentLayout:
    center: tuple[float, float, float]
    outer_radius: float
    inner_radius: float
    outer_half_height: float
    inner_half_height: float
    sphere_centers: tuple[tuple[float, float, float], ...]
    sphere_radii: tuple[float, ...]


def two_compartment_layout(domain: Domain, sphere_radii) -> TwoCompartmentLayout:
    """Cylinder along z with spheres on a ring in the mid plane.

    Dimensions scale with the domain: outer radius 0.45 L, wall 0.03 L,
    outer half height 0.4 L_z, where L is the smaller transverse extent.
    A single sphere is centred; several are spaced evenly on a ring of
    radius 0.55 times the inner radius.
    """
    radii = tuple(float(r) for r in sphere_radii)
    if not radii or any(not r > 0 for r in radii):
        raise GeometryError("sphere radii must be positive")
    ext = domain.extent
    L = float(min(ext[0], ext[1]))
    center = tuple(float(v) for v in (np.asarray(domain.lower) + ext / 2))
    r_out, wall = 0.45 * L, 0.03 * L
    hh_out = 0.4 * float(ext[2])
    r_in, hh_in = r_out - wall, hh_out - wall
    if len(radii) == 1:
        centers = [center]
    else:
        ring = 0.55 * r_in
        ang = 2 * np.pi * np.arange(len(radii)) / len(radii)
        centers = [
            (center[0] + ring * np.cos(t), center[1] + ring * np.sin(t), center[2])
            for t in ang
        ]
    layout = TwoCompartmentLayout(
        center, r_out, r_in, hh_out, hh_in, tuple(tuple(map(float, c)) for c in centers), radii
    )
    _check_layout(layout)
    return layout


def _check_layout(lay: TwoCompartmentLayout):
    cx, cy, cz = lay.center
    for (x, y, z), r in zip(lay.sphere_centers, lay.sphere_radii):
        if np.hypot(x - cx, y - cy) + r > lay.inner_radius or abs(z - cz) + r > lay.inner_half_height:
            raise GeometryError(f"sphere of radius {r} at {(x, y, z)} leaves the water compartment")
    n = len(lay.sphere_radii)
    for i in range(n):
        for j in range(i + 1, n):
            dist = np.linalg.norm(np.subtract(lay.sphere_centers[i], lay.sphere_centers[j]))
            if dist <= lay.sphere_radii[i] + lay.sphere_radii[j]:
                raise GeometryError(f"spheres {i} and {j} overlap")


def make_two_compartment(
    spec: GridSpec, sphere_radii, hot_value: float = 4.0, cold_value: float = 1.0
):
    """Rasterise the cylinder phantom; returns ``(volume, mask)``.

    Labels follow :data:`TWO_COMPARTMENT_LABELS`: exterior and shell carry
    no activity, the water carries ``cold_value`` and the spheres
    ``hot_value``.
    """
    lay = two_compartment_layout(spec.domain, sphere_radii)
    x = spec.axis_coords(0)[:, None, None]
    y = spec.axis_coords(1)[None, :, None]
    z = spec.axis_coords(2)[None, None, :]
    cx, cy, cz = lay.center
    rho = np.hypot(x - cx, y - cy)
    dz = np.abs(z - cz)
    outer = (rho <= lay.outer_radius) & (dz <= lay.outer_half_height)
    inner = (rho <= lay.inner_radius) & (dz <= lay.inner_half_height)
    hot = np.zeros(spec.shape, dtype=bool)
    for (sx, sy, sz), r in zip(lay.sphere_centers, lay.sphere_radii):
        hot |= (x - sx) ** 2 + (y - sy) ** 2 + (z - sz) ** 2 <= r * r
    labels = np.zeros(spec.shape, dtype=np.int32)
    labels[outer] = TWO_COMPARTMENT_LABELS["shell"]
    labels[inner] = TWO_COMPARTMENT_LABELS["cold"]
    labels[hot & inner] = TWO_COMPARTMENT_LABELS["hot"]
    values = np.array([0.0, 0.0, float(cold_value), float(hot_value)])[labels]
    return VolumeGrid(spec, values), SegmentationMask(spec, labels, 4)
