"""Exception hierarchy shared by all declab modules.

Every error raised for a numerical or physical reason derives from
:class:`DeclabError`, which the command line maps to exit code 3.
"""


class DeclabError(Exception):
    """Base class for numerical/physical failures."""


class UnphysicalStateError(DeclabError, ValueError):
    """Bloch vector longer than one beyond round-off."""


class InvalidMatrixError(DeclabError, ValueError):
    """Density matrix is not Hermitian, not unit trace, or not positive."""


class StepSizeError(DeclabError, ValueError):
    """Integrator step violates the stability guard."""


class SingularityError(DeclabError, ValueError):
    """Formula evaluated at a singular point."""


class BranchError(DeclabError, ValueError):
    """Requested root lies on the wrong (complex) branch."""


class DomainError(DeclabError, ValueError):
    """Input outside the domain of a formula."""


class InvariantError(DeclabError, ValueError):
    """Input violates a structural invariant such as unitarity."""


class ResolutionError(DeclabError, RuntimeError):
    """Discretisation failed to converge."""


class IntegratorError(DeclabError, RuntimeError):
    """Time integration lost accuracy (e.g. norm drift)."""


class CalibrationError(DeclabError, RuntimeError):
    """Noise calibration could not bracket or reach its target."""
