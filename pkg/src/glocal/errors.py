"""Exception hierarchy shared by every glocal module."""


class GlocalError(ValueError):
    """Base class for all errors raised by glocal."""


class ShapeError(GlocalError):
    """Operand extents are incompatible."""


class NonFiniteError(GlocalError):
    """An input carries NaN or Inf values."""


class TensorFormatError(GlocalError):
    """A GLT1 file could not be decoded."""


class BadMagicError(TensorFormatError):
    pass


class RankError(TensorFormatError):
    pass


class TruncatedPayloadError(TensorFormatError):
    pass


class ConfigError(GlocalError):
    """Invalid or unknown configuration key."""


class StageError(GlocalError):
    """An operator failed inside a pipeline stage.

    The failing stage name is kept on ``stage`` and the original exception
    is chained as ``__cause__``.
    """

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        super().__init__(f"[stage {stage}] {type(cause).__name__}: {cause}")
