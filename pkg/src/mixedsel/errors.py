"""Exception hierarchy shared by every module of the package."""


class MixedSelError(Exception):
    """Base class for all package errors."""


class FactorizationFailure(MixedSelError):
    """A marginal covariance matrix could not be Cholesky-factorized."""


class SingularDesign(MixedSelError):
    """The GLS normal matrix is rank deficient (collinear fixed covariates)."""


class InvalidPenaltyParams(MixedSelError, ValueError):
    pass


class NewtonSingular(MixedSelError):
    """The interior-point Newton matrix stayed singular after regularization."""


class DegenerateSample(MixedSelError, ValueError):
    pass


class InvalidSpec(MixedSelError, ValueError):
    pass


class SchemaError(MixedSelError, ValueError):
    """Input table does not follow the grouped-CSV schema."""


class ParseError(MixedSelError, ValueError):
    pass
