"""Exception hierarchy shared by all driftlearn modules."""


class DriftLearnError(Exception):
    """Base class for all package errors."""


class ParameterError(DriftLearnError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(ParameterError):
    """A density or function was evaluated outside its support."""


class NumericalError(DriftLearnError, ArithmeticError):
    """A factorization or solve failed, or a value became non-finite."""


class DivergenceError(NumericalError):
    """A simulated path or a Markov chain left the admissible region."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConfigError(DriftLearnError, ValueError):
    """A run configuration failed validation."""

    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class FormatError(DriftLearnError, ValueError):
    """A data file could not be parsed."""
