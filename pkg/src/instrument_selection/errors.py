"""Exception hierarchy for instrument selection.

Every error raised on purpose by the library derives from
``InstrumentSelectionError``. Argument-validation errors also derive from the
matching builtin so callers that only know ``ValueError`` still catch them.
"""

from typing import Optional, Sequence


class InstrumentSelectionError(Exception):
    """Base class for all library errors"""


class ConfigError(InstrumentSelectionError, ValueError):
    """Invalid or unreadable run configuration"""


class InvalidDimensionsError(InstrumentSelectionError, ValueError):
    """Scenario dimensions violate their preconditions"""


class ZeroRowError(InstrumentSelectionError, ValueError):
    """An instrument (feature) row has zero norm"""


class InvalidInstrumentSetError(InstrumentSelectionError, ValueError):
    """Duplicate, empty or out-of-range instrument indices"""


class InsufficientSamplesError(InstrumentSelectionError, ValueError):
    """Too few samples for the requested experiment or estimator"""


class RankZeroError(InstrumentSelectionError):
    """The first stage detected no instrument effect at all"""


class SingularMatrixError(InstrumentSelectionError):
    """A matrix that must be inverted is singular"""


class DimensionMismatchError(InstrumentSelectionError, ValueError):
    """Inputs that must share a dimension do not"""


class CoordinateOutOfRangeError(InstrumentSelectionError, IndexError):
    """A coordinate index lies outside [0, d_x)"""


class OverlapError(InstrumentSelectionError, ValueError):
    """A candidate instrument set overlaps the already used instruments"""


class EmptyCandidatesError(InstrumentSelectionError, ValueError):
    """No instruments are left to select from"""


class ResultsFileError(InstrumentSelectionError, ValueError):
    """A results file is malformed"""


class NegativeNormError(InstrumentSelectionError, ValueError):
    """A norm estimate is negative"""


class RoundError(InstrumentSelectionError):
    """Failure inside one round of a sequential run"""

    def __init__(self, strategy: str, round_number: int, instrument_set: Sequence[int],
                 cause: Optional[BaseException] = None):
        self.strategy = strategy
        self.round_number = round_number
        self.instrument_set = tuple(instrument_set)
        self.cause = cause
        detail = f": {type(cause).__name__}: {cause}" if cause is not None else ""
        super().__init__(
            f"{strategy} round {round_number} with instruments {list(self.instrument_set)} failed{detail}"
        )
