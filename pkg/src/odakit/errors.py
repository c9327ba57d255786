"""Exception taxonomy shared by all odakit modules."""


class OdaError(Exception):
    """Base class for every error raised by this package."""


class ZeroNormVector(OdaError):
    """Cosine similarity was asked for a vector with (near-)zero norm."""


class InvalidTemperature(OdaError):
    """Softmax temperature must be strictly positive."""


class DimensionMismatch(OdaError):
    """Vector or matrix dimensions do not agree."""


class FormatError(OdaError):
    """A binary file has a bad magic, version, or is truncated."""


class InvariantError(OdaError):
    """A domain-type invariant was violated."""


class IoError(OdaError):
    """Reading or writing a file failed at the OS level."""


class InvalidConfig(OdaError):
    """A configuration value is out of its legal range."""


class LabelOutOfRange(OdaError):
    """A source label is outside [0, num_known_classes)."""


class MissingPseudoLabel(OdaError):
    """A record needs a cached zero-shot probability vector and has none."""


class ModeBatchMismatch(OdaError):
    """The training mode and the supplied datasets/batches disagree."""


class NonFiniteGradient(OdaError):
    """A parameter gradient contains NaN or Inf."""


class NonFiniteLoss(OdaError):
    """The training loss became NaN or Inf; the run is aborted.

    Attributes:
        step: global optimizer-step index at which the loss went non-finite.
        model: classifier holding the last finite parameters, when available.
    """

    def __init__(self, message, step=None, model=None):
        super().__init__(message)
        self.step = step
        self.model = model


class EmptyClass(OdaError):
    """A metric needs at least one known and one unknown sample."""


class MissingLabels(OdaError):
    """Evaluation needs ground-truth labels and the records have none."""


class OutOfRange(OdaError):
    """A numeric argument is outside its documented range."""
