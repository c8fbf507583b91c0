"""Exception types raised across the package."""

from sklearn.exceptions import NotFittedError


class SigmaTuneError(Exception):
    pass


class SingularMass(SigmaTuneError, ArithmeticError):
    """Effective mass 1 + eps1*x**2 is numerically zero."""


class GainDegenerate(SigmaTuneError, ValueError):
    """gamma1 == 0, the control law cannot be formed."""


class DimensionMismatch(SigmaTuneError, ValueError):
    pass


class DegenerateBatch(SigmaTuneError, ValueError):
    """Train-mode batch normalization needs at least two rows."""


class EmptyDataset(SigmaTuneError, ValueError):
    pass


class EmptyInput(SigmaTuneError, ValueError):
    pass


class TooSmall(SigmaTuneError, ValueError):
    pass


class UnknownTarget(SigmaTuneError, KeyError):
    pass


class Untrained(SigmaTuneError, NotFittedError):
    pass


class ConfigError(SigmaTuneError, ValueError):
    pass


class ParseFailure(SigmaTuneError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
