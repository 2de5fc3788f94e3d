"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all domain errors raised by this package."""


class EmptySignal(PipelineError):
    """1D operation received a zero-length signal."""


class NotBinary(PipelineError):
    """Operation requires a {0, 255} image."""


class BranchPoint(PipelineError):
    """Skeleton still contains a branch point; junction removal must run first."""


class OutOfBounds(PipelineError):
    """A coordinate lies outside the image."""


class NoRidges(PipelineError):
    """Image yielded no usable ridge segments; callers must surface this."""


class DimMismatch(PipelineError):
    """Operands have incompatible dimensions or kinds."""


class EmptyCorpus(PipelineError):
    """A corpus-level operation received no images."""


class EmptyDictionary(PipelineError):
    """Power-profile dictionary has no entries."""


class TooSmall(PipelineError):
    """Input image is below the minimum size for the network."""


class NoTape(PipelineError):
    """backward() called before any forward pass was recorded."""


class CorruptCheckpoint(PipelineError):
    """Tensor container failed its CRC or structural checks."""


class TrainingDiverged(PipelineError):
    """Loss became non-finite during training."""
