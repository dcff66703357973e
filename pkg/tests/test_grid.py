import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fakeres.errors import DomainError, GridRangeError, InputError, ParameterError
from fakeres.grid import Domain, GridSpec, SegmentationMask, VolumeGrid


def test_domain_requires_positive_extent():
    with pytest.raises(ParameterError):
        Domain((0, 0, 0), (1, 0, 1))
    with pytest.raises(ParameterError):
        Domain((0, 0, 0), (1, np.inf, 1))


def test_gridspec_needs_two_nodes_per_axis():
    with pytest.raises(ParameterError):
        GridSpec(Domain.cube(), (1, 4, 4))


@pytest.mark.parametrize(
    "n, index, expected",
    [
        (2, (1, 1, 1), (0.0, 0.0, 0.0)),
        (2, (2, 2, 2), (1.0, 1.0, 1.0)),
        (5, (3, 1, 1), (0.5, 0.0, 0.0)),
    ],
)
def test_node_coordinate(n, index, expected):
    assert GridSpec.cube(n).node_coordinate(index) == expected


@pytest.mark.parametrize("index", [(0, 1, 1), (1, 6, 1), (1, 1, -2)])
def test_node_coordinate_out_of_range(index):
    with pytest.raises(GridRangeError):
        GridSpec.cube(5).node_coordinate(index)


def test_locate_cell_examples():
    spec = GridSpec.cube(5)
    assert spec.locate_cell((0.3, 0.0, 0.0)) == (2, 1, 1)
    assert spec.locate_cell((0.0, 0.0, 0.0)) == (1, 1, 1)
    # the closed upper boundary belongs to the last cell
    assert spec.locate_cell((1.0, 1.0, 1.0)) == (4, 4, 4)
    with pytest.raises(DomainError):
        spec.locate_cell((1.0 + 1e-6, 0.5, 0.5))


@given(
    n=st.integers(3, 200),
    a=st.floats(-1e3, 1e3),
    width=st.floats(1e-3, 1e3),
)
def test_locate_inverts_node_coordinate(n, a, width):
    spec = GridSpec(Domain((a, a, a), (a + width,) * 3), (n, 3, 2))
    for i in range(1, n):
        x = spec.node_coordinate((i, 1, 1))
        assert spec.locate_cell(x)[0] == i


@given(n=st.integers(2, 500), a=st.floats(-100, 100), width=st.floats(1e-2, 1e3))
@settings(max_examples=50)
def test_spacing_is_uniform(n, a, width):
    spec = GridSpec(Domain((a, 0, 0), (a + width, 1, 1)), (n, 2, 2))
    x = spec.axis_coords(0)
    h = spec.spacing[0]
    scale = max(abs(a), abs(a + width))
    assert np.max(np.abs(np.diff(x) - h)) <= 4 * np.finfo(float).eps * max(scale, 1.0) * 4


def test_anisotropic_spacing():
    spec = GridSpec(Domain((0, -1, 2), (1, 1, 5)), (3, 5, 4))
    assert spec.spacing == (0.5, 0.5, 1.0)
    assert spec.node_coordinate((3, 5, 4)) == (1.0, 1.0, 5.0)


def test_volume_rejects_nonfinite_and_wrong_shape():
    spec = GridSpec.cube(3)
    with pytest.raises(InputError):
        VolumeGrid(spec, np.zeros((3, 3, 2)))
    bad = np.zeros((3, 3, 3))
    bad[1, 1, 1] = np.nan
    with pytest.raises(InputError):
        VolumeGrid(spec, bad)


def test_volume_is_read_only():
    v = VolumeGrid(GridSpec.cube(3), np.zeros((3, 3, 3)))
    with pytest.raises(ValueError):
        v.values[0, 0, 0] = 1.0


def test_from_function_uses_node_coordinates():
    spec = GridSpec.cube(4, -1.0, 2.0)
    v = VolumeGrid.from_function(spec, lambda x, y, z: x + 10 * y + 100 * z)
    assert v.values[1, 2, 3] == pytest.approx(0.0 + 10 * 1.0 + 100 * 2.0)


def test_mask_validation_and_counts():
    spec = GridSpec.cube(2)
    labels = np.array([0, 1, 1, 3, 0, 0, 1, 3]).reshape(2, 2, 2)
    m = SegmentationMask(spec, labels)
    assert m.label_count == 4
    assert list(m.counts()) == [3, 3, 0, 2]
    assert list(m.present_labels()) == [0, 1, 3]
    with pytest.raises(InputError):
        SegmentationMask(spec, -labels - 1)
    with pytest.raises(InputError):
        SegmentationMask(spec, labels + 0.5)
    with pytest.raises(InputError):
        SegmentationMask(spec, labels, label_count=2)
