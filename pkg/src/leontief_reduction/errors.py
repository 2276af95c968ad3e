"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can emit
structured error JSON and map failures to exit codes.
"""


class ReductionError(Exception):
    code = "ERROR"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class ParseError(ReductionError, ValueError):
    code = "PARSE_ERROR"

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column

    def to_dict(self):
        d = super().to_dict()
        if self.line is not None:
            d.update(line=self.line, column=self.column)
        return d


class BoundError(ReductionError, ValueError):
    code = "BOUND_ERROR"


class MissingVariableError(ReductionError, KeyError):
    code = "MISSING_VARIABLE"

    def __str__(self):
        return self.args[0] if self.args else "missing variable"


class AlreadyHomogenizedError(ReductionError):
    code = "ALREADY_HOMOGENIZED"


class UnboundedDemandError(ReductionError, ArithmeticError):
    """An agent has positive income but every desired good is free."""

    code = "UNBOUNDED_DEMAND"

    def __init__(self, message="unbounded demand", agent=None):
        super().__init__(message)
        self.agent = agent


class ZeroNumeraireError(ReductionError, ZeroDivisionError):
    code = "ZERO_NUMERAIRE"


class InvalidCertificateError(ReductionError):
    code = "INVALID_CERTIFICATE"


class LiftError(ReductionError):
    code = "LIFT_REJECTED"


class CapExceededError(ReductionError):
    code = "CAP_EXCEEDED"


class NotConvergedError(ReductionError):
    code = "NOT_CONVERGED"

    def __init__(self, message, prices=None):
        super().__init__(message)
        self.prices = prices
