"""Per-segment quantification and empirical checks of interpolation error bounds.

Continuity models follow the piecewise-Lipschitz picture: inside segment
``i`` the image is Lipschitz with constant ``k_i``; across the common border
of segments ``i`` and ``j`` it may jump by at most ``D_ij``.  For ``m``
segments the worst case aggregates to ``K = m max k_i`` and
``D = m max D_ij``, and any interpolant built from a cardinal, normalised,
compactly supported basis then errs by at most ``K delta* + D``, where
``delta*`` is the distance from an evaluation point to its farthest active
node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .errors import ClusteringError, EmptySegmentError, InputError
from .grid import GridSpec, SegmentationMask, VolumeGrid
from .kernels import BasisKernel, trilinear_kernel
from .resample import axis_weights, eval_points

__all__ = [
    "SegmentationMask",
    "SegmentStats",
    "segment_stats",
    "fbr",
    "kmeans_segment",
    "welch_ttest",
    "ContinuityModel",
    "estimate_continuity",
    "window_reach",
    "ErrorBoundReport",
    "verify_error_bound",
    "LipschitzFunction",
    "LIPSCHITZ_TEST_FUNCTIONS",
    "plane_step",
]


# -- segment statistics ------------------------------------------------------


@dataclass(frozen=True)
class SegmentStats:
    """Column-wise statistics, one entry per label ``0..m``.

    Labels without voxels have count 0 and NaN statistics.
    """

    labels: np.ndarray
    voxel_count: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    min: np.ndarray
    max: np.ndarray
    reference: np.ndarray | None = None
    abs_error: np.ndarray | None = None

    def rows(self):
        """Per-label dicts, suitable for CSV/JSON emission."""
        out = []
        for n, lab in enumerate(self.labels):
            row = {
                "label": int(lab),
                "voxel_count": int(self.voxel_count[n]),
                "mean": float(self.mean[n]),
                "median": float(self.median[n]),
                "min": float(self.min[n]),
                "max": float(self.max[n]),
            }
            if self.reference is not None:
                row["reference"] = float(self.reference[n])
                row["abs_error"] = float(self.abs_error[n])
            out.append(row)
        return out


def _compensated_mean(v: np.ndarray) -> float:
    # corrected two-pass: the residual sum removes the first pass's rounding
    m0 = np.sum(v) / v.size
    return float(m0 + np.sum(v - m0) / v.size)


def segment_stats(volume: VolumeGrid, mask: SegmentationMask, references=None) -> SegmentStats:
    """Count, mean, median, min and max of ``volume`` over each label.

    When ``references`` (one value per label) is given, ``abs_error`` holds
    ``|mean - reference|``.
    """
    if not volume.spec.compatible(mask.spec):
        raise InputError("volume and mask are on different grids")
    m1 = mask.label_count
    if references is not None:
        references = np.asarray(references, dtype=float)
        if references.shape != (m1,):
            raise InputError(f"need {m1} reference values, got {references.shape}")
    flat_lab = mask.labels.ravel()
    flat_val = volume.values.ravel()
    order = np.argsort(flat_lab, kind="stable")
    bounds = np.searchsorted(flat_lab[order], np.arange(m1 + 1))
    stats = {k: np.full(m1, np.nan) for k in ("mean", "median", "min", "max")}
    counts = np.diff(bounds)
    for lab in range(m1):
        if counts[lab] == 0:
            continue
        v = flat_val[order[bounds[lab]:bounds[lab + 1]]]
        stats["mean"][lab] = _compensated_mean(v)
        stats["median"][lab] = np.median(v)
        stats["min"][lab] = v.min()
        stats["max"][lab] = v.max()
    abs_error = None if references is None else np.abs(stats["mean"] - references)
    return SegmentStats(np.arange(m1), counts, reference=references, abs_error=abs_error, **stats)


def fbr(volume: VolumeGrid, mask: SegmentationMask, hot_label: int, cold_label: int) -> float:
    """Foreground-to-background ratio ``mean(hot) / mean(cold)``."""
    if not volume.spec.compatible(mask.spec):
        raise InputError("volume and mask are on different grids")
    means = []
    for lab in (hot_label, cold_label):
        v = volume.values[mask.labels == lab]
        if v.size == 0:
            raise EmptySegmentError(lab, "the evaluation grid")
        means.append(_compensated_mean(v))
    if means[1] == 0.0:
        raise ZeroDivisionError(f"mean of cold label {cold_label} is zero")
    return means[0] / means[1]


# -- k-means -----------------------------------------------------------------


def kmeans_segment(
    volume: VolumeGrid,
    k: int,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-9,
    n_init: int = 8,
) -> SegmentationMask:
    """Cluster voxel intensities into ``k`` classes with Lloyd's algorithm.

    Centroids start from k-means++ seeding (each new centroid drawn with
    probability proportional to squared distance from the chosen ones).  The
    run is repeated ``n_init`` times from one seeded generator and the
    clustering with the smallest within-class sum of squares is kept.
    Labels are ordered by ascending centroid, so label 0 is the darkest class.
    """
    k = int(k)
    if k < 2:
        raise ClusteringError("k must be at least 2")
    if n_init < 1:
        raise ClusteringError("n_init must be at least 1")
    values, inverse, counts = np.unique(volume.values.ravel(), return_inverse=True, return_counts=True)
    if values.size < k:
        raise ClusteringError(f"only {values.size} distinct values for k={k}")
    rng = np.random.default_rng(seed)
    weights = counts.astype(float)

    best, best_cost = None, np.inf
    for _ in range(n_init):
        centers = _lloyd_1d(values, weights, _kmeanspp_1d(values, weights, k, rng), max_iter, tol)
        assign = _assign_1d(values, centers)
        cost = float(np.sum(weights * (values - centers[assign]) ** 2))
        if cost < best_cost:
            best, best_cost = assign, cost
    labels = best[inverse].reshape(volume.shape)
    return SegmentationMask(volume.spec, labels, k)


def _kmeanspp_1d(values, weights, k, rng):
    centers = [values[rng.choice(values.size, p=weights / weights.sum())]]
    d2 = (values - centers[0]) ** 2
    for _ in range(1, k):
        p = weights * d2
        total = p.sum()
        if total <= 0:
            raise ClusteringError("cannot seed distinct centroids")
        c = values[rng.choice(values.size, p=p / total)]
        centers.append(c)
        d2 = np.minimum(d2, (values - c) ** 2)
    return np.sort(np.asarray(centers, dtype=float))


def _assign_1d(values, centers):
    # sorted centroids: cluster boundaries are the midpoints
    return np.searchsorted(0.5 * (centers[1:] + centers[:-1]), values, side="left")


def _lloyd_1d(values, weights, centers, max_iter, tol):
    k = centers.size
    for _ in range(max_iter):
        assign = _assign_1d(values, centers)
        sums = np.bincount(assign, weights=weights * values, minlength=k)
        cnts = np.bincount(assign, weights=weights, minlength=k)
        new = np.sort(np.where(cnts > 0, sums / np.where(cnts > 0, cnts, 1), centers))
        shift = np.max(np.abs(new - centers))
        centers = new
        if shift < tol:
            break
    return centers


# -- Welch's t-test ----------------------------------------------------------


def welch_ttest(group_a, group_b) -> tuple[float, float]:
    """Two-sided Welch t-test; returns ``(t, p)``.

    Degrees of freedom follow Welch-Satterthwaite; the p-value is the
    regularised incomplete beta ``I_{df/(df+t^2)}(df/2, 1/2)``.  When both
    groups are constant the result is ``(0, 1)`` for equal constants and
    ``(+-inf, 0)`` otherwise.
    """
    a = np.asarray(group_a, dtype=float).ravel()
    b = np.asarray(group_b, dtype=float).ravel()
    if a.size < 2 or b.size < 2:
        raise InputError("each group needs at least two samples")
    va = np.var(a, ddof=1) / a.size
    vb = np.var(b, ddof=1) / b.size
    if va + vb == 0:
        # degenerate but well defined: identical constants are indistinguishable
        diff = a.mean() - b.mean()
        if diff == 0:
            return 0.0, 1.0
        return math.copysign(math.inf, diff), 0.0
    t = (a.mean() - b.mean()) / np.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    p = special.betainc(0.5 * df, 0.5, df / (df + t * t))
    return float(t), float(min(1.0, p))


# -- continuity models -------------------------------------------------------


def window_reach(spec: GridSpec, kernel: BasisKernel) -> float:
    """Largest Euclidean distance from a point to a node with nonzero weight."""
    a = kernel.support_radius_cells
    return float(np.sqrt(sum((a * h) ** 2 for h in spec.spacing)))


@dataclass(frozen=True)
class ContinuityModel:
    """Piecewise-Lipschitz description of an image.

    ``lipschitz_K`` and :attr:`jump_D` are the worst-case aggregates over
    ``segment_count`` segments; :attr:`tight_K` and :attr:`tight_D` the plain
    maxima.
    """

    lipschitz_K: float
    jump_matrix: np.ndarray
    delta_star: float
    segment_lipschitz: np.ndarray = field(default=None)
    segment_count: int = 1

    def __post_init__(self):
        J = np.atleast_2d(np.asarray(self.jump_matrix, dtype=float))
        if J.shape[0] != J.shape[1]:
            raise InputError("jump matrix must be square")
        if np.any(np.diag(J) != 0) or not np.array_equal(J, J.T) or np.any(J < 0):
            raise InputError("jump matrix must be symmetric, nonnegative, zero on the diagonal")
        object.__setattr__(self, "jump_matrix", J)
        if self.segment_lipschitz is None:
            object.__setattr__(self, "segment_lipschitz", np.array([self.lipschitz_K]))

    @classmethod
    def lipschitz(cls, K: float, delta_star: float) -> "ContinuityModel":
        """Single continuous segment with known constant ``K``."""
        return cls(float(K), np.zeros((1, 1)), float(delta_star))

    @property
    def jump_D(self) -> float:
        return self.segment_count * float(self.jump_matrix.max(initial=0.0))

    @property
    def tight_K(self) -> float:
        return float(np.max(self.segment_lipschitz, initial=0.0))

    @property
    def tight_D(self) -> float:
        return float(self.jump_matrix.max(initial=0.0))

    def omega(self, delta: float | None = None) -> float:
        """Modulus of continuity ``K delta + D`` (``delta`` defaults to delta*)."""
        delta = self.delta_star if delta is None else delta
        return self.lipschitz_K * delta + self.jump_D

    def tight_omega(self, delta: float | None = None) -> float:
        delta = self.delta_star if delta is None else delta
        return self.tight_K * delta + self.tight_D


def _random_directions(rng, n):
    # half along a random coordinate axis, half isotropic
    u = rng.normal(size=(n, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    axis_rows = np.arange(n) % 2 == 0
    ax = rng.integers(0, 3, size=n)
    sign = rng.choice([-1.0, 1.0], size=n)
    e = np.zeros((n, 3))
    e[np.arange(n), ax] = sign
    u[axis_rows] = e[axis_rows]
    return u


def _nearest_labels(mask: SegmentationMask, points):
    spec = mask.spec
    idx = []
    for d in range(3):
        c = spec.axis_coords(d)
        x = np.clip(points[:, d], c[0], c[-1])
        i = np.clip(np.rint((x - c[0]) / spec.spacing[d]).astype(np.intp), 0, c.size - 1)
        idx.append(i)
    return mask.labels[idx[0], idx[1], idx[2]]


def estimate_continuity(
    source,
    mask: SegmentationMask,
    probe_count: int = 10000,
    seed: int = 0,
    labeler: Callable | None = None,
    kernel: BasisKernel | None = None,
) -> ContinuityModel:
    """Estimate per-segment Lipschitz constants and jumps by probing.

    ``source`` is either a :class:`VolumeGrid` on ``mask``'s grid or a
    vectorised callable ``f(x, y, z)``.  For a volume, Lipschitz ratios come
    from random same-label node pairs 1, 2 and 4 cells apart along an axis,
    and jumps from every pair of face-adjacent nodes with different labels.
    For a callable, random point pairs at distances h, h/2 and h/4 are
    classified with ``labeler(points) -> labels`` (default: nearest node of
    ``mask``).  ``delta*`` is the window reach of ``kernel`` (trilinear by
    default) on ``mask``'s grid.
    """
    probe_count = int(probe_count)
    if probe_count < 10:
        raise InputError("probe_count must be at least 10")
    spec = mask.spec
    kernel = kernel or trilinear_kernel(spec.spacing[0])
    m1 = mask.label_count
    k_seg = np.zeros(m1)
    J = np.zeros((m1, m1))
    rng = np.random.default_rng(seed)

    if isinstance(source, VolumeGrid):
        if not source.spec.compatible(spec):
            raise InputError("volume and mask are on different grids")
        F, L = source.values, mask.labels
        for d in range(3):
            a = [slice(None)] * 3
            b = [slice(None)] * 3
            a[d], b[d] = slice(0, -1), slice(1, None)
            la, lb = L[tuple(a)], L[tuple(b)]
            diff = np.abs(F[tuple(a)] - F[tuple(b)])
            cross = la != lb
            if cross.any():
                np.maximum.at(J, (la[cross], lb[cross]), diff[cross])
        n = np.asarray(spec.shape)
        for step in (1, 2, 4):
            ax = rng.integers(0, 3, size=probe_count)
            start = np.stack([rng.integers(0, n[d], size=probe_count) for d in range(3)], axis=1)
            end = start.copy()
            end[np.arange(probe_count), ax] += step
            ok = end[np.arange(probe_count), ax] < n[ax]
            s, e, ax = start[ok], end[ok], ax[ok]
            ls = L[s[:, 0], s[:, 1], s[:, 2]]
            le = L[e[:, 0], e[:, 1], e[:, 2]]
            same = ls == le
            dist = step * np.asarray(spec.spacing)[ax[same]]
            ratio = np.abs(F[s[same, 0], s[same, 1], s[same, 2]] - F[e[same, 0], e[same, 1], e[same, 2]]) / dist
            if ratio.size:
                np.maximum.at(k_seg, ls[same], ratio)
    else:
        f = source
        lab_of = labeler or (lambda p: _nearest_labels(mask, p))
        lo, hi = np.asarray(spec.domain.lower), np.asarray(spec.domain.upper)
        h = min(spec.spacing)
        per_scale = -(-probe_count // 3)
        for delta in (h, h / 2, h / 4):
            x = lo + rng.random((per_scale, 3)) * (hi - lo)
            y = x + delta * _random_directions(rng, per_scale)
            ok = np.all((y >= lo) & (y <= hi), axis=1)
            x, y = x[ok], y[ok]
            fx = f(x[:, 0], x[:, 1], x[:, 2])
            fy = f(y[:, 0], y[:, 1], y[:, 2])
            lx = np.asarray(lab_of(x), dtype=np.intp)
            ly = np.asarray(lab_of(y), dtype=np.intp)
            diff = np.abs(fx - fy)
            same = lx == ly
            if same.any():
                np.maximum.at(k_seg, lx[same], diff[same] / delta)
            cross = ~same
            if cross.any():
                np.maximum.at(J, (lx[cross], ly[cross]), diff[cross])

    J = np.maximum(J, J.T)
    np.fill_diagonal(J, 0.0)
    m = max(1, int(np.count_nonzero(mask.counts())))
    return ContinuityModel(
        lipschitz_K=m * float(k_seg.max(initial=0.0)),
        jump_matrix=J,
        delta_star=window_reach(spec, kernel),
        segment_lipschitz=k_seg,
        segment_count=m,
    )


# -- error bound verification -------------------------------------------------


@dataclass(frozen=True)
class ErrorBoundReport:
    shape: tuple[int, int, int]
    delta_star: float
    bound: float
    sup_error: float
    passed: bool
    interior_count: int
    interior_bound: float
    interior_sup_error: float
    interior_passed: bool
    tight_bound: float
    probe_count: int

    def as_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def verify_error_bound(
    source_spec: GridSpec,
    kernel: BasisKernel,
    function: Callable,
    model: ContinuityModel,
    probe_count: int = 10000,
    seed: int = 0,
    labeler: Callable | None = None,
    extra_probes=None,
) -> ErrorBoundReport:
    """Sample ``function`` on ``source_spec``, interpolate and probe the error.

    The global check compares the sup error with ``model.omega()``.  Probes
    whose active window nodes all share the probe's label (per ``labeler``)
    count as interior and are checked against ``K delta*`` alone; without a
    labeler every probe is interior.  ``extra_probes`` adds fixed points to
    the random ones.
    """
    volume = VolumeGrid.from_function(source_spec, function)
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(source_spec.domain.lower), np.asarray(source_spec.domain.upper)
    pts = lo + rng.random((int(probe_count), 3)) * (hi - lo)
    if extra_probes is not None:
        pts = np.concatenate([pts, np.clip(np.asarray(extra_probes, float).reshape(-1, 3), lo, hi)])
    approx = eval_points(volume, kernel, pts)
    exact = function(pts[:, 0], pts[:, 1], pts[:, 2])
    err = np.abs(approx - exact)

    if labeler is None:
        interior = np.ones(len(pts), dtype=bool)
    else:
        own = np.asarray(labeler(pts))
        interior = np.ones(len(pts), dtype=bool)
        ks = [kernel.rescaled(h) for h in source_spec.spacing]
        win = [axis_weights(ks[d], source_spec.axis_coords(d), pts[:, d]) for d in range(3)]
        for ti in range(win[0][0].shape[1]):
            for tj in range(win[1][0].shape[1]):
                for tk in range(win[2][0].shape[1]):
                    active = (win[0][1][:, ti] * win[1][1][:, tj] * win[2][1][:, tk]) > 0
                    node = np.stack(
                        [
                            source_spec.axis_coords(0)[win[0][0][:, ti]],
                            source_spec.axis_coords(1)[win[1][0][:, tj]],
                            source_spec.axis_coords(2)[win[2][0][:, tk]],
                        ],
                        axis=1,
                    )
                    interior &= ~active | (np.asarray(labeler(node)) == own)

    bound = model.omega()
    ib = model.lipschitz_K * model.delta_star
    sup = float(err.max())
    isup = float(err[interior].max()) if interior.any() else 0.0
    # tiny slack for rounding in the interpolant itself
    slack = 64 * np.finfo(float).eps * max(1.0, float(np.abs(volume.values).max()))
    return ErrorBoundReport(
        shape=source_spec.shape,
        delta_star=model.delta_star,
        bound=bound,
        sup_error=sup,
        passed=sup <= bound + slack,
        interior_count=int(interior.sum()),
        interior_bound=ib,
        interior_sup_error=isup,
        interior_passed=isup <= ib + slack,
        tight_bound=model.tight_omega(),
        probe_count=len(pts),
    )


# -- analytic test functions -------------------------------------------------


@dataclass(frozen=True)
class LipschitzFunction:
    """Vectorised ``f(x, y, z)`` with its Euclidean Lipschitz constant on [0, 1]^3."""

    name: str
    func: Callable
    K: float

    def __call__(self, x, y, z):
        return self.func(x, y, z)


def _sinprod(x, y, z):
    return np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y) * np.sin(2 * np.pi * z)


LIPSCHITZ_TEST_FUNCTIONS = (
    LipschitzFunction("affine", lambda x, y, z: x + 2 * y + 3 * z, float(np.sqrt(14.0))),
    LipschitzFunction("sin_product", _sinprod, 2 * np.pi),
    LipschitzFunction(
        "cone",
        lambda x, y, z: np.sqrt((x - 0.31) ** 2 + (y - 0.52) ** 2 + (z - 0.47) ** 2),
        1.0,
    ),
    LipschitzFunction("exp_sum", lambda x, y, z: np.exp(x + y + z), float(np.sqrt(3.0) * np.exp(3.0))),
    LipschitzFunction("plane_wave", lambda x, y, z: np.cos(3 * x + 4 * y) + 0 * z, 5.0),
)


def plane_step(cut: float = 0.4871, jump: float = 1.0, ripple: float = 0.25):
    """Step of height ``jump`` across the plane ``x = cut`` plus a smooth ripple.

    Returns ``(f, labeler, K, D)``: the function, a labeler (0 left of the
    plane, 1 right), the ripple's Lipschitz constant and the jump.
    """

    def f(x, y, z):
        return jump * (np.asarray(x) > cut) + ripple * np.sin(2 * np.pi * y) + 0 * z

    def labeler(p):
        return (np.asarray(p)[:, 0] > cut).astype(np.intp)

    return f, labeler, 2 * np.pi * ripple, float(jump)
