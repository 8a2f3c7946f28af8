"""Exception hierarchy.

Input problems (bad files, invalid arguments) derive from ``InputError``;
numerical failures (rank deficiency, failed decompositions) derive from
``NumericalError``. The CLI maps the two families to distinct exit codes.
"""


class DrptError(Exception):
    """Base class for every error raised by this package."""

    stage: str | None = None

    def __str__(self) -> str:
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class InputError(DrptError, ValueError):
    pass


class NumericalError(DrptError, ArithmeticError):
    pass


class ShapeError(InputError):
    pass


class ValidationError(InputError):
    pass


class DataFormatError(InputError):
    pass


class ImputationError(InputError):
    pass


class StratificationError(InputError):
    pass


class DecompositionError(NumericalError):
    pass


class RankError(NumericalError):
    pass


class ZeroMatrixError(RankError):
    pass


class SingularSystemError(NumericalError):
    pass


class PerturbationError(NumericalError):
    pass
