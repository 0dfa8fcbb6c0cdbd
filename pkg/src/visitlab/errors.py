"""Exception types shared across the package."""


class VisitlabError(Exception):
    """Base class for all package-specific errors."""


class SpecError(VisitlabError, ValueError):
    """A model/parameter specification is invalid (bad probabilities, shapes...)."""


class StructureError(VisitlabError, ValueError):
    """Structural requirement violated: reducible chain, non-Markov partition, ..."""


class NonStationaryError(VisitlabError):
    """No (computable) stationary law exists for the requested parameters."""


class ConvergenceError(VisitlabError):
    """An iterative routine failed to reach its tolerance."""


class UnsupportedPairError(VisitlabError):
    """No exact rule is registered for this (system, target) combination."""


class InsufficientDataError(VisitlabError):
    """An estimator received too little data to produce a meaningful value."""

    def __init__(self, message: str, count: int = 0):
        super().__init__(message)
        self.count = count


class ResourceLimitError(VisitlabError):
    """The requested computation exceeds the configured step/memory guard."""


class ConfigError(VisitlabError, ValueError):
    """The experiment configuration file is malformed or inconsistent."""
