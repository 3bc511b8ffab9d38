"""Exception hierarchy.

Numerical failures, contract violations and configuration errors are kept
apart because the CLI maps them to distinct exit codes.
"""


class GapCertError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(GapCertError):
    """Malformed or inconsistent run configuration (exit code 2)."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class NumericalFailure(GapCertError):
    """A numerical routine could not deliver a trustworthy value (exit code 3)."""


class QuadratureFailure(NumericalFailure):
    pass


class NonIntegrable(NumericalFailure):
    pass


class MeshNotConverged(NumericalFailure):
    pass


class SingularMass(NumericalFailure):
    pass


class ZeroVariance(NumericalFailure):
    pass


class UncertifiedResultError(GapCertError):
    """A certified-only run produced an uncertified result (exit code 4)."""


class PreconditionError(GapCertError, ValueError):
    """An operation was called outside its domain of validity."""


class UnsupportedGeometry(PreconditionError):
    pass


class NonSymmetricHessian(PreconditionError):
    pass


class UncertifiedInfimum(PreconditionError):
    pass


class UnboundedPotential(PreconditionError):
    pass


class EmptyFeasibleGrid(PreconditionError):
    pass


class NoApplicableMethod(PreconditionError):
    pass


class NotLogConcave(PreconditionError):
    pass


class DimensionTooSmall(PreconditionError):
    pass


class NotCentered(PreconditionError):
    pass


class NoCertifiedEstimate(PreconditionError):
    pass


class PitchTooCoarse(PreconditionError):
    pass


class MissingCellReport(PreconditionError):
    pass


class BranchMismatch(PreconditionError):
    pass


class ColumnMissing(PreconditionError):
    pass
