"""Exception hierarchy shared by all stlrrt modules.

Every error carries a short machine-readable ``code`` so the CLI can emit
structured failure records without string matching.
"""


class StlrrtError(Exception):
    code = "error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


# formula
class FormulaSyntaxError(StlrrtError):
    code = "syntax_error"

    def __init__(self, message, position, expected=()):
        self.position = position
        self.expected = tuple(expected)
        detail = f"{message} at position {position}"
        if self.expected:
            detail += f" (expected {', '.join(self.expected)})"
        super().__init__(detail)

    def to_dict(self):
        d = super().to_dict()
        d.update(position=self.position, expected=list(self.expected))
        return d


class FragmentViolation(StlrrtError):
    code = "fragment_violation"

    def __init__(self, message, span=None):
        self.span = span
        if span is not None:
            message = f"{message} (source span {span[0]}..{span[1]})"
        super().__init__(message)


class UnknownPredicate(StlrrtError):
    code = "unknown_predicate"


class InvalidCount(StlrrtError):
    code = "invalid_count"


# geometry
class DimensionMismatch(StlrrtError):
    code = "dimension_mismatch"


class Unbounded(StlrrtError):
    code = "unbounded"


class DimensionTooLarge(StlrrtError):
    code = "dimension_too_large"


class EmptyInterval(StlrrtError):
    code = "empty_interval"


class EmptySet(StlrrtError):
    code = "empty_set"


# barrier
class FreeTimeOutOfRange(StlrrtError):
    code = "free_time_out_of_range"


class OutOfDomain(StlrrtError):
    code = "out_of_domain"


class ParametersUnbound(StlrrtError):
    code = "parameters_unbound"


class NotASwitchTime(StlrrtError):
    code = "not_a_switch_time"


# encoder
class SolverFailure(StlrrtError):
    code = "solver_failure"


class InfeasibleEncoding(StlrrtError):
    code = "infeasible"

    def __init__(self, message, block=None):
        self.block = block
        super().__init__(message if block is None else f"{message} (block: {block})")

    def to_dict(self):
        d = super().to_dict()
        d["block"] = self.block
        return d


class AllInfeasible(StlrrtError):
    code = "all_infeasible"


# invariance / planner
class QpInfeasible(StlrrtError):
    code = "qp_infeasible"

    def __init__(self, message, worst_row=None, t=None):
        self.worst_row = worst_row
        self.t = t
        super().__init__(message)


class PreconditionError(StlrrtError):
    code = "precondition"


class ZeroDuration(StlrrtError):
    code = "zero_duration"


class NoEligibleNode(StlrrtError):
    code = "no_eligible_node"


class NoSolution(StlrrtError):
    code = "no_solution"


# monitor
class CoverageError(StlrrtError):
    code = "coverage"


# cli
class SchemaError(StlrrtError):
    code = "schema_error"

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")

    def to_dict(self):
        d = super().to_dict()
        d.update(field=self.field, reason=self.reason)
        return d


class SemanticError(StlrrtError):
    code = "semantic_error"
