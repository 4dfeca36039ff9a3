"""Exception hierarchy for the lab.

Every error that a caller is expected to catch and act on has its own
class; generic misuse raises ValueError/TypeError as usual.
"""


class LabError(Exception):
    """Base class for all lab-specific errors."""


class ConfigurationError(LabError):
    """Invalid grid, experiment, or potential configuration."""


class GenerationError(LabError):
    """A sampled field came out non-finite or otherwise unusable."""


class ResolventSingularityError(LabError):
    """Spectral parameter too close to an eigenvalue of the operator.

    Carries the offending parameter and, when known, the nearest
    eigenvalue.
    """

    def __init__(self, lam, nearest=None, distance=None):
        self.lam = lam
        self.nearest = nearest
        self.distance = distance
        msg = f"spectral parameter {lam} too close to the discrete spectrum"
        if nearest is not None:
            msg += f" (nearest eigenvalue {nearest}, distance {distance})"
        super().__init__(msg)


class HWindowError(LabError):
    """Semiclassical parameter outside the supported conditioning window."""


class DomainViolationError(LabError):
    """A phase singularity (log center / cylinder axis) lies inside the domain."""


class ResolutionError(LabError):
    """Probe oscillates too fast for the grid to resolve."""


class DataTooNoisyError(LabError):
    """DN gap too large for the cutoff rule; cutoff collapses to its minimum."""


class IllDefinedFunctionalError(LabError):
    """Weak normal derivative requested for a field that is not a solution."""


class SolverError(LabError):
    """An iterative or direct solve failed to reach its tolerance."""
