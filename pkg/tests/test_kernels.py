import numpy as np
import pytest
from hypothesis import given, strategies as st

from fakeres.errors import ParameterError
from fakeres.kernels import (
    KERNELS,
    kernel_by_name,
    nearest_kernel,
    separable_weight,
    trilinear_kernel,
)

H = 0.37


def test_trilinear_examples():
    k = trilinear_kernel(H)
    assert k(0.0) == 1.0
    assert k(H / 2) == pytest.approx(0.5, abs=1e-15)
    assert k(1.5 * H) == 0.0
    assert k.support_radius_cells == 1
    assert k.alpha == H


def test_nearest_examples():
    k = nearest_kernel(H)
    assert k(0.0) == 1.0
    assert k(0.49 * H) == 1.0
    assert k(0.51 * H) == 0.0
    # midpoint tie: exactly one of the two neighbours claims it
    assert k(0.5 * H) + k(-0.5 * H) == 1.0


@pytest.mark.parametrize("h", [0.0, -1.0, np.inf, np.nan])
def test_bad_spacing(h):
    with pytest.raises(ParameterError):
        trilinear_kernel(h)


def test_unknown_name():
    with pytest.raises(ParameterError):
        kernel_by_name("cubic", 1.0)


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_cardinal_and_compact(name):
    k = kernel_by_name(name, H)
    offsets = np.arange(-5, 6) * H
    w = k(offsets)
    assert w[5] == 1.0
    assert np.all(w[np.arange(11) != 5] == 0.0)
    far = np.array([1.0, 1.2, 3.0]) * H * k.support_radius_cells
    assert np.all(k(far) == 0.0) and np.all(k(-far) == 0.0)


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_partition_of_unity(name):
    k = kernel_by_name(name, H)
    t = np.random.default_rng(1).uniform(0, H, 1000)
    lattice = np.arange(-4, 5) * H
    sums = k(t[:, None] - lattice[None, :]).sum(axis=1)
    assert np.max(np.abs(sums - 1.0)) <= 1e-12


def test_separable_weight_examples():
    k = trilinear_kernel(H)
    assert separable_weight(k, (0, 0, 0)) == 1.0
    assert separable_weight(k, (H / 2, H / 2, H / 2)) == pytest.approx(0.125, abs=1e-15)
    assert separable_weight(k, (0.0, H, 0.0)) == 0.0
    assert separable_weight(nearest_kernel(H), (0.1 * H, 0.6 * H, 0.0)) == 0.0


@given(st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3))
def test_separable_weight_is_product(offset):
    for name in KERNELS:
        k = kernel_by_name(name, H)
        expected = float(k(offset[0]) * k(offset[1]) * k(offset[2]))
        assert separable_weight(k, offset) == expected


def test_rescaled_keeps_shape():
    k = trilinear_kernel(1.0).rescaled(2.0)
    assert k.name == "trilinear" and k.h == 2.0
    assert k(1.0) == 0.5
