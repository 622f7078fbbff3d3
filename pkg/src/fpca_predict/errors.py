class FpcaError(Exception):
    """Base class for all package errors."""


class SchemaError(FpcaError):
    pass


class ParseError(FpcaError):
    pass


class EmptyDatasetError(FpcaError):
    pass


class DomainError(FpcaError):
    pass


class EstimationError(FpcaError):
    pass


class SingularCovarianceError(EstimationError):
    pass
