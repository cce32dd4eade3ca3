"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class GedfnError(Exception):
    exit_code = 2


class ParameterError(GedfnError, ValueError):
    exit_code = 1


class GenerationError(GedfnError):
    pass


class ContractError(GedfnError, ValueError):
    pass


class DivergenceError(GedfnError, FloatingPointError):
    exit_code = 3

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class EvaluationError(GedfnError, ValueError):
    pass


class ScoringError(GedfnError):
    exit_code = 3


class IngestionError(GedfnError, ValueError):
    pass
