"""Exception hierarchy shared by all modules."""


class ArmarLabError(Exception):
    """Base class for every error raised by this package."""


class NumericalError(ArmarLabError):
    """A numerical routine could not produce a valid answer."""


class DataError(ArmarLabError):
    """Input data violates a documented precondition."""


class ConfigError(ArmarLabError):
    """A run configuration is malformed or out of range."""


class NotPositiveDefinite(NumericalError):
    pass


class NonFinite(DataError):
    pass


class InvalidRho(DataError):
    pass


class ZeroVariance(DataError):
    pass


class NonStationarySpec(DataError):
    pass


class SingularRegression(NumericalError):
    pass


class Divergence(NumericalError):
    pass


class AllUnpenalized(DataError):
    pass


class NotConverged(NumericalError):
    pass


class InsufficientHistory(DataError):
    pass


class InvalidParams(DataError):
    pass


class InvalidXi(InvalidParams):
    """The printed variance scale evaluated to a non-positive number.

    The offending value is kept on ``.value`` so callers can report it.
    """

    def __init__(self, value: float, T_v: int):
        self.value = float(value)
        self.T_v = int(T_v)
        super().__init__(f"xi_v = {self.value:.6g} <= 0 (T_v = {self.T_v}); density undefined")


class DegenerateDenominator(NumericalError):
    pass


class NonPositiveForLog(DataError):
    pass


class NonPositive(DataError):
    pass
