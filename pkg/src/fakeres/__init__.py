"""Segment-aware oversampling of volumetric images.

Plain separable interpolation of a piecewise-smooth image rings at segment
boundaries.  :func:`fake_resample` interpolates each segment of a
high-resolution segmentation from its own smoothly extended copy of the
low-resolution data, so values never mix across a boundary.
"""
from .errors import (
    ClusteringError,
    DomainError,
    EmptySegmentError,
    FakeresError,
    FormatError,
    GeometryError,
    GridRangeError,
    InputError,
    NumericalError,
    ParameterError,
    PlanError,
)
from .grid import Domain, GridSpec, SegmentationMask, VolumeGrid
from .kernels import BasisKernel, kernel_by_name, nearest_kernel, trilinear_kernel
from .resample import (
    ResamplePlan,
    downsample_labels,
    eval_point,
    eval_point_bruteforce,
    eval_points,
    resample_volume,
)
from .fakenodes import FakeStack, FakeStackConfig, build_fake_stack, fake_resample
from .phantom import (
    EllipsoidSpec,
    PhantomDefinition,
    eval_phantom,
    make_two_compartment,
    rasterize_phantom,
    shepp_logan,
)
from .analysis import (
    ContinuityModel,
    SegmentStats,
    estimate_continuity,
    fbr,
    kmeans_segment,
    segment_stats,
    verify_error_bound,
    welch_ttest,
)
from .io import read_nifti, read_raw, read_volume, write_nifti, write_raw, write_volume

__version__ = "0.1.0"
