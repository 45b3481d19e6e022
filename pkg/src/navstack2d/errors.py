"""Exception types shared across the stack."""


class NavStackError(Exception):
    """Base class for all errors raised by this package."""


class MissingFrameError(NavStackError):
    """No transform is known for a required coordinate frame."""


class OutOfBoundsError(NavStackError):
    """A world coordinate falls outside a costmap's extent."""


class KindMismatchError(NavStackError):
    """A costmap operation was applied to the wrong map kind."""


class DegenerateInputError(NavStackError):
    """Input geometry is too degenerate for the requested fit."""


class DegenerateCorrespondenceError(NavStackError):
    """A feature correspondence collapses to a point or a line."""


class DegenerateGeometryError(NavStackError):
    """Correspondence set does not constrain the motion estimate."""


class InvalidStateError(NavStackError):
    """Operation called before its prerequisite step."""


class WindowMismatchError(NavStackError):
    """The global path does not intersect the local planning window."""


class OptimizationFailureError(NavStackError):
    """Trajectory optimization produced a non-finite objective."""


class ScenarioError(NavStackError):
    """Scenario file could not be parsed or is inconsistent."""
