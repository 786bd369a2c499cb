"""Exception types shared across the package."""


class SrpcError(Exception):
    """Base class for all package errors."""


class MissingData(SrpcError):
    def __init__(self, row, col):
        self.row = row
        self.col = col
        super().__init__(f"missing value at row {row}, column {col!r}")


class BadLevel(SrpcError):
    pass


class BadSubpop(SrpcError):
    pass


class BadConcentration(SrpcError):
    pass


class DegenerateWeights(SrpcError):
    pass


class BadParameter(SrpcError):
    pass


class NotPSD(SrpcError):
    pass


class TooLarge(SrpcError):
    pass


class InsufficientPermutations(SrpcError):
    pass


class ShapeMismatch(SrpcError):
    pass


class SamplerError(SrpcError):
    """Wraps a failure inside the Gibbs sweep with the iteration index."""

    def __init__(self, iteration, cause):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"sampler failed at iteration {iteration}: {cause}")
