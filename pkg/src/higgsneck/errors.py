"""Exception types. Each carries a short ``code`` used by the CLI and reports."""


class HiggsNeckError(Exception):
    code = "error"


class InvalidGenus(HiggsNeckError, ValueError):
    code = "invalid-genus"


class InvalidParameter(HiggsNeckError, ValueError):
    code = "invalid-parameter"


class ParameterError(InvalidParameter):
    code = "parameter-error"


class NoOverlap(HiggsNeckError, ValueError):
    code = "no-overlap"


class InconclusiveClassification(HiggsNeckError):
    code = "inconclusive-classification"


class DegenerateDifferential(HiggsNeckError, ValueError):
    code = "degenerate-differential"


class FrameError(HiggsNeckError, ValueError):
    code = "frame-error"


class SingularGauge(HiggsNeckError, ValueError):
    code = "singular-gauge"


class ResolutionError(HiggsNeckError, ValueError):
    code = "resolution-error"


class AssumptionViolation(HiggsNeckError, ValueError):
    code = "assumption-violation"


class SolverError(HiggsNeckError, RuntimeError):
    code = "solver-error"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class RangeError(HiggsNeckError, ValueError):
    code = "range-error"


class InconsistentMonodromy(HiggsNeckError, ValueError):
    code = "inconsistent-monodromy"


class PreconditionViolation(HiggsNeckError, ValueError):
    code = "precondition-violation"


class ConfigError(HiggsNeckError, ValueError):
    code = "config-error"
