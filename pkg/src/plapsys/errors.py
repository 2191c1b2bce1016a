"""Exception types raised across the package.

Every error carries the module and operation that raised it, plus optional
witness data (offending abscissa, node index, level, ...) so the CLI can
render an actionable message.
"""


class LabError(Exception):
    module = "plapsys"

    def __init__(self, message, *, operation=None, witness=None):
        super().__init__(message)
        self.operation = operation
        self.witness = dict(witness or {})

    def render(self):
        where = self.module if self.operation is None else f"{self.module}.{self.operation}"
        text = f"[{where}] {self}"
        if self.witness:
            items = ", ".join(f"{k}={v!r}" for k, v in self.witness.items())
            text += f" ({items})"
        return text


class ExpressionError(LabError, ValueError):
    module = "expr"


class NonlinearityError(LabError):
    module = "nonlinearity"


class EvaluationError(NonlinearityError):
    pass


class DomainError(NonlinearityError, ValueError):
    pass


class IndeterminateError(NonlinearityError):
    pass


class TransformUndefinedError(NonlinearityError):
    pass


class RangeError(NonlinearityError, ValueError):
    pass


class GridError(LabError, ValueError):
    module = "grid"


class SolverError(LabError):
    module = "plap"


class EnergyUnavailableError(SolverError):
    pass


class DivergenceError(SolverError):
    pass


class ConstructError(LabError):
    module = "construct"


class MonotonicityError(ConstructError):
    pass


class InsufficientDataError(ConstructError, ValueError):
    pass


class BarrierUndefinedError(ConstructError):
    pass


class EntireError(LabError):
    module = "entire"


class NoUpperSolutionError(EntireError):
    pass


class ConfigError(LabError, ValueError):
    module = "cli"

    def __init__(self, message, *, field=None, line=None, **kw):
        super().__init__(message, **kw)
        self.field = field
        self.line = line

    def __str__(self):
        msg = super().__str__()
        loc = []
        if self.field:
            loc.append(f"field '{self.field}'")
        if self.line is not None:
            loc.append(f"line {self.line}")
        return f"{msg} [{', '.join(loc)}]" if loc else msg
