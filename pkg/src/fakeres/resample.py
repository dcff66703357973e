"""Evaluation of the separable interpolant and whole-grid resampling.

For a point in the cell with 1-based lower corner ``(p, q, r)`` only the
nodes ``p - a + 1 .. p + a`` along x (and likewise along y, z) carry nonzero
weight, where ``a`` is the kernel support radius in cells.  :func:`eval_point`
sums over that window; :func:`eval_point_bruteforce` sums over every node and
is kept as an independent check.

The kernel passed to these functions selects the basis *shape*; it is always
evaluated at the node spacing of the source grid along each axis.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError, PlanError
from .grid import GridSpec, SegmentationMask, VolumeGrid, _locate_axis
from .kernels import BasisKernel, nearest_kernel

__all__ = [
    "ResamplePlan",
    "eval_point",
    "eval_points",
    "eval_point_bruteforce",
    "resample_volume",
    "downsample_labels",
    "axis_weights",
    "default_threads",
]

POLICIES = ("clamp", "zero", "error")


def default_threads() -> int:
    """Thread count from ``FAKERES_THREADS``, defaulting to 1."""
    raw = os.environ.get("FAKERES_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ResamplePlan:
    """Source grid, target grid and kernel of a resampling."""

    source: GridSpec
    target: GridSpec
    kernel: BasisKernel
    out_of_domain_policy: str = "clamp"

    def __post_init__(self):
        if self.out_of_domain_policy not in POLICIES:
            raise ParameterError(
                f"out_of_domain_policy must be one of {POLICIES}, "
                f"got {self.out_of_domain_policy!r}"
            )
        if not self.source.domain.isclose(self.target.domain):
            raise PlanError(
                f"source domain {self.source.domain} differs from "
                f"target domain {self.target.domain}"
            )


def _axis_kernels(kernel, spec):
    return [kernel.rescaled(h) for h in spec.spacing]


def axis_weights(kernel: BasisKernel, coords: np.ndarray, x: np.ndarray):
    """Window indices and weights of a 1D kernel.

    Returns ``(idx, w)`` each of shape ``(len(x), 2a)``: 0-based node indices
    ``p - a + 1 .. p + a`` (clipped into range) and their weights, with the
    weight forced to zero wherever the window leaves the grid.
    """
    n = coords.shape[0]
    a = kernel.support_radius_cells
    p = _locate_axis(coords, x)
    offsets = np.arange(-a + 1, a + 1)
    raw = p[:, None] + offsets[None, :]
    valid = (raw >= 0) & (raw < n)
    idx = np.clip(raw, 0, n - 1)
    w = np.where(valid, kernel(x[:, None] - coords[idx]), 0.0)
    # cardinality: a point sitting exactly on a node reads that node alone
    # (``1 - |t|/h`` with the nominal h can leave ~1e-16 on the neighbour)
    hit = valid & (coords[idx] == x[:, None])
    rows = hit.any(axis=1)
    w[rows] = hit[rows]
    if kernel.name == "nearest":
        w = _nearest_one_hot(np.where(valid, np.abs(x[:, None] - coords[idx]), np.inf))
    return idx, w


def _nearest_one_hot(dist):
    # after rounding, a midpoint can fall inside both neighbouring boxes;
    # keep only the closest node (argmin breaks exact ties to the left)
    w = np.zeros(dist.shape)
    w[np.arange(dist.shape[0]), np.argmin(dist, axis=1)] = 1.0
    return w


def _apply_policy(spec, points, policy):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != 3:
        raise ParameterError("points must have 3 coordinates")
    inside = spec.domain.contains(pts)
    if policy == "error" and not np.all(inside):
        bad = pts[~inside][0]
        raise DomainError(f"point {tuple(bad)} outside domain {spec.domain}")
    lo, hi = np.asarray(spec.domain.lower), np.asarray(spec.domain.upper)
    return np.clip(pts, lo, hi), inside


def eval_points(
    volume: VolumeGrid, kernel: BasisKernel, points, policy: str = "clamp"
) -> np.ndarray:
    """Windowed interpolant at an ``(N, 3)`` array of physical points.

    The window is summed with z outermost, then y, then x, accumulating
    ``F * bx * by * bz`` one term at a time, so every point's result is the
    same whether evaluated alone or in a batch.
    """
    if policy not in POLICIES:
        raise ParameterError(f"unknown policy {policy!r}")
    spec = volume.spec
    pts, inside = _apply_policy(spec, points, policy)
    ks = _axis_kernels(kernel, spec)
    idx, w = zip(*(axis_weights(ks[d], spec.axis_coords(d), pts[:, d]) for d in range(3)))
    F = volume.values
    acc = np.zeros(pts.shape[0])
    width = [w[d].shape[1] for d in range(3)]
    for tk in range(width[2]):
        for tj in range(width[1]):
            for ti in range(width[0]):
                term = F[idx[0][:, ti], idx[1][:, tj], idx[2][:, tk]]
                acc += term * w[0][:, ti] * w[1][:, tj] * w[2][:, tk]
    if policy == "zero":
        acc[~inside] = 0.0
    return acc


def eval_point(
    volume: VolumeGrid, kernel: BasisKernel, point, policy: str = "clamp"
) -> float:
    """Interpolant value at one physical point (windowed sum)."""
    pt = np.asarray(point, dtype=float).reshape(1, 3)
    return float(eval_points(volume, kernel, pt, policy)[0])


def eval_point_bruteforce(
    volume: VolumeGrid, kernel: BasisKernel, point, policy: str = "clamp"
) -> float:
    """Interpolant value as the full sum over all ``n_x n_y n_z`` nodes.

    O(N) per point; meant for checking :func:`eval_point` on small grids.
    """
    spec = volume.spec
    pts, inside = _apply_policy(spec, np.asarray(point, dtype=float).reshape(1, 3), policy)
    if policy == "zero" and not inside[0]:
        return 0.0
    ks = _axis_kernels(kernel, spec)
    bx, by, bz = (_full_basis(ks[d], spec.axis_coords(d), pts[0, d]) for d in range(3))
    F = volume.values
    total = 0.0
    for k in range(spec.shape[2]):
        for j in range(spec.shape[1]):
            total += float(np.dot(F[:, j, k], bx)) * by[j] * bz[k]
    return total


def _full_basis(kernel, coords, x):
    if kernel.name == "nearest":
        return _nearest_one_hot(np.abs(x - coords)[None, :])[0]
    b = kernel(x - coords)
    hit = coords == x
    return hit.astype(float) if hit.any() else b


def _resample_rows(values, weights, rows):
    """Apply the three 1D passes for output rows ``rows`` of axis 0."""
    (i0, w0), (i1, w1), (i2, w2) = weights
    i0, w0 = i0[rows], w0[rows]
    out = None
    for t in range(w0.shape[1]):
        term = values[i0[:, t]] * w0[:, t, None, None]
        out = term if out is None else out + term
    stage = out
    out = None
    for t in range(w1.shape[1]):
        term = stage[:, i1[:, t]] * w1[None, :, t, None]
        out = term if out is None else out + term
    stage = out
    out = None
    for t in range(w2.shape[1]):
        term = stage[:, :, i2[:, t]] * w2[None, None, :, t]
        out = term if out is None else out + term
    return out


def resample_volume(
    volume: VolumeGrid, plan: ResamplePlan, threads: int | None = None
) -> VolumeGrid:
    """Evaluate the interpolant of ``volume`` on every node of ``plan.target``.

    The tensor-product structure is used: one 1D weighted gather per axis.
    Output rows along the first axis are independent and may be split over
    ``threads`` workers; every row is computed by the same arithmetic, so the
    result does not depend on the thread count.
    """
    if not volume.spec.compatible(plan.source):
        raise PlanError("volume grid does not match the plan's source grid")
    src, tgt = plan.source, plan.target
    ks = _axis_kernels(plan.kernel, src)
    weights = []
    inside = []
    for d in range(3):
        x = np.asarray(tgt.axis_coords(d), dtype=float)
        lo, hi = src.domain.lower[d], src.domain.upper[d]
        ok = (x >= lo) & (x <= hi)
        if plan.out_of_domain_policy == "error" and not np.all(ok):
            raise DomainError(f"target axis {d} leaves the source domain")
        inside.append(ok)
        weights.append(axis_weights(ks[d], src.axis_coords(d), np.clip(x, lo, hi)))

    n0 = tgt.shape[0]
    threads = default_threads() if threads is None else max(1, int(threads))
    chunk = 16
    blocks = [slice(s, min(s + chunk, n0)) for s in range(0, n0, chunk)]
    out = np.empty(tgt.shape)

    def work(rows):
        out[rows] = _resample_rows(volume.values, weights, rows)

    if threads == 1 or len(blocks) == 1:
        for rows in blocks:
            work(rows)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, blocks))

    if plan.out_of_domain_policy == "zero":
        keep = inside[0][:, None, None] & inside[1][None, :, None] & inside[2][None, None, :]
        out[~keep] = 0.0
    return VolumeGrid(tgt, out)


def downsample_labels(mask: SegmentationMask, target: GridSpec) -> SegmentationMask:
    """Nearest-node label transfer onto ``target`` (no arithmetic on labels).

    Each target node takes the label of the closest source node along every
    axis; a target coordinate exactly halfway between two source nodes takes
    the lower one.
    """
    src = mask.spec
    if not src.domain.isclose(target.domain):
        raise PlanError("mask and target grid cover different domains")
    picks = []
    for d in range(3):
        coords = src.axis_coords(d)
        x = np.clip(target.axis_coords(d), src.domain.lower[d], src.domain.upper[d])
        idx, w = axis_weights(nearest_kernel(src.spacing[d]), coords, x)
        picks.append(idx[np.arange(len(x)), np.argmax(w, axis=1)])
    lab = mask.labels[np.ix_(picks[0], picks[1], picks[2])]
    return SegmentationMask(target, lab, mask.label_count)
