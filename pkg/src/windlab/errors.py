"""Exception hierarchy shared across the package."""


class WindlabError(Exception):
    """Base class for all windlab errors."""


class ParameterError(WindlabError, ValueError):
    """A parameter is outside its admissible range."""


class CapabilityError(WindlabError):
    """The model lacks an ingredient (derivative, spectral density) the
    operation needs."""


class DomainError(WindlabError, ValueError):
    """Input outside the mathematical domain (e.g. a non-PSD correlation)."""


class SingularityError(WindlabError):
    """A closed form is evaluated at, or too close to, a singular point."""


class DegenerateConditioningError(WindlabError):
    """Conditioning block of a Gaussian regression is singular."""


class ModelError(WindlabError):
    """The covariance model does not define a valid Gaussian law on the
    requested grid (indefinite joint covariance, unnormalized spectrum)."""


class SamplerError(WindlabError):
    """A sampling backend cannot faithfully realize the requested law."""


class ResolutionError(WindlabError, ValueError):
    """Grid too coarse for the requested operation (e.g. kernel width)."""


class AliasingError(WindlabError):
    """A single-step angle increment is too close to pi; the grid cannot
    resolve the rotation direction and the path is rejected for counting."""


class HypothesisError(WindlabError):
    """A theorem hypothesis required by the operation fails."""


class DivergenceError(WindlabError):
    """A quadrature whose convergence the formula requires does not
    converge (partial integrals are not Cauchy)."""


class ConfigError(WindlabError, ValueError):
    """Malformed experiment configuration."""
