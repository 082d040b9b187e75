"""Exception hierarchy.

Every error carries a stable ``code`` used by the CLI for structured stderr
output, plus an optional ``details`` dict with machine-readable context.
"""

from __future__ import annotations

from typing import Any


class WasserCalcError(Exception):
    code = "error"
    # CLI exit status: 2 for input/validation problems, 3 for solver failures
    exit_status = 3

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "details": self.details}


class ValidationError(WasserCalcError, ValueError):
    code = "validation_error"
    exit_status = 2


class NonFiniteInput(ValidationError):
    code = "non_finite_input"


class InvalidWeights(ValidationError):
    code = "invalid_weights"


class EmptyMeasure(ValidationError):
    code = "empty_measure"


class NonFiniteImage(ValidationError):
    code = "non_finite_image"


class NonFinitePotential(ValidationError):
    code = "non_finite_potential"


class DimensionMismatch(ValidationError):
    code = "dimension_mismatch"


class AnchorMismatch(ValidationError):
    code = "anchor_mismatch"


class MarginalMismatch(ValidationError):
    code = "marginal_mismatch"


class CouplingMarginalMismatch(MarginalMismatch):
    code = "coupling_marginal_mismatch"


class UnsupportedInstance(ValidationError):
    code = "unsupported_instance"


class InfeasiblePoint(ValidationError):
    code = "infeasible_point"


class ZeroTheta(ValidationError):
    code = "zero_theta"


class DegenerateInit(ValidationError):
    code = "degenerate_init"


class SolverStall(WasserCalcError):
    code = "solver_stall"


class MissingPotentials(WasserCalcError):
    code = "missing_potentials"


class PlanRequired(WasserCalcError):
    code = "plan_required"


class LogOfZero(WasserCalcError):
    code = "log_of_zero"


class ZeroSubgradientQualification(WasserCalcError):
    code = "zero_subgradient_qualification"


class QualificationFailure(WasserCalcError):
    code = "qualification_failure"


class NoValidRoot(WasserCalcError):
    code = "no_valid_root"


class SingularMap(WasserCalcError):
    code = "singular_map"


class DescentFailure(WasserCalcError):
    code = "descent_failure"


class UnboundedInner(WasserCalcError):
    code = "unbounded_inner"
