# kinoplan/errors.py
from __future__ import annotations


class KinoplanError(Exception):
    """Base class for every domain error raised by kinoplan."""


class InvalidInputError(KinoplanError, ValueError):
    """Non-finite or out-of-range argument."""


class PlannerDivergenceError(KinoplanError):
    """A planner pose left the map the costmap was built from."""


class MapFormatError(KinoplanError):
    pass


class MapSpecError(KinoplanError):
    pass


class NoPathError(KinoplanError):
    pass


class CorridorExitError(KinoplanError):
    """No global-path point lies inside the local window."""


class SampleOutsideWindowError(KinoplanError):
    pass


class ShapeMismatchError(KinoplanError):
    pass


class NonFiniteLossError(KinoplanError):
    def __init__(self, message: str, lr: float, epoch: int, batch_index: int):
        super().__init__(f"{message} (lr={lr}, epoch={epoch}, batch={batch_index})")
        self.lr = lr
        self.epoch = epoch
        self.batch_index = batch_index


class WeightsFormatError(KinoplanError):
    pass


class DatasetError(KinoplanError):
    pass


class DatasetVersionError(DatasetError):
    pass


class DatasetTruncatedError(DatasetError):
    pass


class DatasetChecksumError(DatasetError):
    pass


class DatasetFormatError(DatasetError):
    pass
