"""Exception hierarchy shared by all pipeflow modules."""


class PipeflowError(Exception):
    pass


class BadConfig(PipeflowError, ValueError):
    pass


class DimensionMismatch(PipeflowError, ValueError):
    pass


class EmptyInput(PipeflowError, ValueError):
    pass


# frame I/O
class ManifestMissing(PipeflowError, FileNotFoundError):
    pass


class CorruptSequence(PipeflowError):
    pass


class DecodeError(PipeflowError):
    pass


class WriteError(PipeflowError, OSError):
    pass


# motion
class ChannelError(PipeflowError, ValueError):
    pass


class TooSmall(PipeflowError, ValueError):
    pass


class SelectionAborted(PipeflowError):
    def __init__(self, index, cause=None):
        super().__init__(f"frame {index} could not be loaded: {cause}")
        self.index = index
        self.cause = cause


# scheduling
class CycleError(PipeflowError):
    pass


class Unschedulable(PipeflowError):
    pass


class EmptyTrace(PipeflowError, ValueError):
    pass


class PartialTrace(PipeflowError):
    """A task failed; ``trace`` holds everything that did run."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


class ProtocolError(PipeflowError):
    pass


class EmptySegment(PipeflowError, ValueError):
    pass


class PipelineError(PipeflowError):
    """A stage of ``pipeflow run`` failed."""

    def __init__(self, stage, cause, partial_report=None):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.partial_report = partial_report
