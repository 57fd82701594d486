"""Exception hierarchy shared by every module of the engine.

Each class carries a short ``code`` used by the command line report when a
scenario errors out, so that reports stay machine readable.
"""


class EngineError(Exception):
    code = "EngineError"


class NonInvertibleJet(EngineError):
    code = "NonInvertibleJet"


class JetBudgetExceeded(EngineError):
    code = "JetBudgetExceeded"


class IncompatiblePoles(EngineError):
    code = "IncompatiblePoles"


class ShapeError(EngineError):
    code = "ShapeError"


class PoleEvaluation(EngineError):
    code = "PoleEvaluation"


class PoleOrderExceeded(EngineError):
    code = "PoleOrderExceeded"


class NotProper(EngineError):
    code = "NotProper"


class DivergentIntegral(EngineError):
    code = "DivergentIntegral"


class Unsupported(EngineError):
    code = "Unsupported"


class BadInput(EngineError):
    code = "BadInput"


class InsufficientJet(EngineError):
    code = "InsufficientJet"


class NotElliptic(EngineError):
    code = "NotElliptic"


class QuadratureDegree(EngineError):
    code = "QuadratureDegree"
