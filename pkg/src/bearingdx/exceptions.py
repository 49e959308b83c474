"""Exception hierarchy.

Validation problems subclass :class:`ValueError` so callers that only care
about "bad input" can catch that. The CLI maps :class:`InvalidParamError`
(including :class:`ConfigError`) to exit code 2 and other errors to exit code 1.
"""

from __future__ import annotations


class BearingDxError(Exception):
    """Base class for all package errors."""


class InvalidParamError(BearingDxError, ValueError):
    pass


class ConfigError(InvalidParamError):
    """Bad experiment configuration or command-line usage."""


class MissingFileError(BearingDxError, FileNotFoundError):
    def __init__(self, path):
        super().__init__(f"missing file: {path}")
        self.path = path


class ParseError(BearingDxError, ValueError):
    def __init__(self, path, location, detail=""):
        msg = f"cannot parse {path} at {location}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.path = path
        self.location = location


class NonFiniteSampleError(BearingDxError, ValueError):
    def __init__(self, path, index):
        super().__init__(f"non-finite sample in {path} at index {index}")
        self.path = path
        self.index = index


class EmptyClassError(BearingDxError, ValueError):
    pass


class SignalTooShortError(BearingDxError, ValueError):
    def __init__(self, n_samples, window_len):
        super().__init__(f"signal has {n_samples} samples, window needs {window_len}")
        self.n_samples = n_samples
        self.window_len = window_len


class DegenerateSegmentError(BearingDxError, ValueError):
    """Segment with zero variance or zero mean absolute value."""

    def __init__(self, reason="degenerate segment", source_id=None, segment_index=None):
        self.reason = reason
        message = reason
        if source_id is not None:
            message = f"{message} (signal {source_id!r}, segment {segment_index})"
        super().__init__(message)
        self.source_id = source_id
        self.segment_index = segment_index


class EmptyTrainingSetError(BearingDxError, ValueError):
    pass


class ShapeMismatchError(BearingDxError, ValueError):
    pass


class StepAfterDoneError(BearingDxError, RuntimeError):
    pass


class NotEnoughExperienceError(BearingDxError, ValueError):
    def __init__(self, size, batch_size):
        super().__init__(f"buffer holds {size} transitions, batch needs {batch_size}")
        self.size = size
        self.batch_size = batch_size


class LengthMismatchError(BearingDxError, ValueError):
    pass


class MissingReportError(BearingDxError, FileNotFoundError):
    def __init__(self, run_dir):
        super().__init__(f"no report.json in {run_dir}")
        self.run_dir = run_dir
