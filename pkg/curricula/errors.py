class CurriculaError(Exception):
    """Base class for errors raised by the curricula package."""


class SupportError(CurriculaError, ValueError):
    """Input lies outside a support, or two specs do not share family/support."""


class SamplingError(CurriculaError, RuntimeError):
    def __init__(self, message: str, dimension: int):
        super().__init__(message)
        self.dimension = dimension


class EstimatorError(CurriculaError, ValueError):
    pass


class InfeasibleStartError(CurriculaError, ValueError):
    pass


class ConfigError(CurriculaError, ValueError):
    pass


class UnknownPredicateError(CurriculaError, KeyError):
    pass
