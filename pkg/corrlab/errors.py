"""
errors.py
---------
Exception hierarchy for corrlab.

Every class carries the CLI exit code it maps to:
- ValidationError  -> 2 (bad inputs, regime and hypothesis gates)
- NumericalError   -> 3 (solver integrity, resolution, contamination)
- ResourceError    -> 4 (size guard tripped before launch)
"""
from typing import Any, Dict, Optional, Sequence


class CorrlabError(Exception):
    exit_code = 1

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ValidationError(CorrlabError):
    exit_code = 2


class ConfigError(ValidationError):
    """Config rejected; `loc` is the dotted path of the offending field."""

    def __init__(self, message: str, loc: Sequence[Any] = (), diagnostics=None):
        self.loc = ".".join(str(p) for p in loc)
        super().__init__(f"{self.loc}: {message}" if self.loc else message, diagnostics)


class OutOfRegimeError(ValidationError):
    pass


class OutOfHypothesisError(ValidationError):
    pass


class ConsistencyError(ValidationError):
    pass


class NumericalError(CorrlabError):
    exit_code = 3


class ResolutionError(NumericalError):
    pass


class IntegrityError(NumericalError):
    pass


class ContaminationError(NumericalError):
    pass


class HorizonError(NumericalError):
    pass


class InstabilityError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class ResourceError(CorrlabError):
    exit_code = 4
