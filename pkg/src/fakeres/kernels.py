"""One-dimensional generator functions for separable interpolation.

A kernel ``b`` induces the tensor-product basis
``B_ijk(x, y, z) = b(x - x_i) b(y - y_j) b(z - z_k)``.  Every shipped kernel is
cardinal (``b(0) = 1``, ``b(k h) = 0`` for integers ``k != 0``), sums to one
over the translates ``b(t - k h)`` and vanishes for ``|t| >= a h``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ParameterError

__all__ = [
    "BasisKernel",
    "trilinear_kernel",
    "nearest_kernel",
    "kernel_by_name",
    "separable_weight",
    "KERNELS",
]


@dataclass(frozen=True)
class BasisKernel:
    """A 1D generator with support radius ``support_radius_cells * h``.

    Calling the kernel evaluates it elementwise on an offset array given in
    physical units.  ``h`` is the node spacing the kernel was built for.
    """

    name: str
    h: float
    support_radius_cells: int
    _func: Callable[[np.ndarray, float], np.ndarray]

    def __call__(self, t):
        return self._func(np.asarray(t, dtype=float), self.h)

    evaluate = __call__

    @property
    def alpha(self) -> float:
        """Support radius in physical units."""
        return self.support_radius_cells * self.h

    def rescaled(self, h: float) -> "BasisKernel":
        """Same kernel shape for a grid with spacing ``h``."""
        return KERNELS[self.name](h)


def _check_h(h):
    h = float(h)
    if not (h > 0 and np.isfinite(h)):
        raise ParameterError(f"kernel spacing must be positive, got {h}")
    return h


def _hat(t, h):
    return np.maximum(0.0, 1.0 - np.abs(t) / h)


def _box(t, h):
    # half-open (-h/2, h/2]: a point midway between two nodes takes the left one
    half = 0.5 * h
    return ((t > -half) & (t <= half)).astype(float)


def trilinear_kernel(h: float) -> BasisKernel:
    """Hat function ``1 - |t|/h`` on ``|t| <= h``."""
    return BasisKernel("trilinear", _check_h(h), 1, _hat)


def nearest_kernel(h: float) -> BasisKernel:
    """Box function of width ``h``; ties at ``|t| = h/2`` go to the left node."""
    return BasisKernel("nearest", _check_h(h), 1, _box)


KERNELS = {"trilinear": trilinear_kernel, "nearest": nearest_kernel}


def kernel_by_name(name: str, h: float) -> BasisKernel:
    try:
        factory = KERNELS[name]
    except KeyError:
        raise ParameterError(
            f"unknown kernel {name!r}; choose from {sorted(KERNELS)}"
        ) from None
    return factory(h)


def separable_weight(kernel: BasisKernel, offset) -> float:
    """Tensor-product weight ``b(dx) b(dy) b(dz)`` for a physical offset."""
    dx, dy, dz = (float(v) for v in offset)
    w = kernel(np.array([dx, dy, dz]))
    return float(w[0] * w[1] * w[2])
