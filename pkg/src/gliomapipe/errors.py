"""Exception types shared across the pipeline.

Every error carries its class name as a category so the CLI can report
``error [SpecError]: ...`` without a lookup table.
"""


class PipelineError(Exception):
    @property
    def category(self) -> str:
        return type(self).__name__


class IoError(PipelineError, OSError):
    """A file could not be read or written."""


class IngestError(PipelineError):
    pass


class LabelError(PipelineError):
    pass


class SpecError(PipelineError):
    pass


class CropError(PipelineError):
    pass


class ShapeError(PipelineError, ValueError):
    pass


class ConfigError(PipelineError, ValueError):
    pass


class DataError(PipelineError, ValueError):
    pass


class DivergenceError(PipelineError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at step {step}")
        self.step = step
        self.loss = loss


class EmptyRegionError(PipelineError, ValueError):
    pass


class CapabilityError(PipelineError):
    pass
