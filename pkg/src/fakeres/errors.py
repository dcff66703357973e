"""Exception hierarchy shared by every module of the package."""


class FakeresError(Exception):
    """Base class for all errors raised by fakeres."""


class ParameterError(FakeresError, ValueError):
    """An argument is outside its admissible range."""


class GridRangeError(FakeresError, IndexError):
    """A grid index lies outside ``1..shape``."""


class DomainError(FakeresError, ValueError):
    """A physical point lies outside the closed domain."""


class PlanError(FakeresError, ValueError):
    """Source and target grids of a resampling are incompatible."""


class InputError(FakeresError, ValueError):
    """Inputs are inconsistent with each other (shape, spec, size)."""


class EmptySegmentError(InputError):
    """A segment label has no voxels on the grid where it is needed."""

    def __init__(self, label, where="low resolution"):
        self.label = int(label)
        super().__init__(f"segment {self.label} has no voxels at {where}")


class GeometryError(FakeresError, ValueError):
    """Phantom objects overlap or leave the domain."""


class ClusteringError(FakeresError, ValueError):
    """Clustering cannot produce the requested number of classes."""


class FormatError(FakeresError, ValueError):
    """A volume file is malformed or uses an unsupported feature."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class NumericalError(FakeresError, ArithmeticError):
    """A numerical invariant was violated."""
