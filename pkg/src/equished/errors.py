"""Exception hierarchy."""


class EquishedError(Exception):
    """Base class for every error raised by this package."""


class CaseError(EquishedError, ValueError):
    pass


class ParseError(CaseError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class StructuralError(CaseError):
    """A required block is missing or empty."""


class ValidationError(CaseError):
    """Case data violates an invariant (dangling reference, bad bounds, ...)."""


class SchemaError(CaseError):
    def __init__(self, message, field=None):
        self.field = field
        super().__init__(message)


class UnsupportedFeatureError(CaseError):
    def __init__(self, message, features=()):
        self.features = tuple(features)
        super().__init__(message)


class TopologyError(CaseError):
    pass


class DomainError(EquishedError, ValueError):
    """Argument outside the mathematical domain of an equity computation."""


class AssemblyError(EquishedError):
    pass


class ScenarioError(EquishedError, ValueError):
    pass


class SolverError(EquishedError, RuntimeError):
    pass
