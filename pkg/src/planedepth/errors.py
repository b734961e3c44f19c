class PlaneDepthError(ValueError):
    """Base class for all input errors raised by the toolkit."""


class ShapeError(PlaneDepthError):
    pass


class ParameterError(PlaneDepthError):
    pass


class DomainError(PlaneDepthError):
    pass


class EmptyValidSetError(PlaneDepthError):
    """A loss or metric was requested over zero valid pixels."""


class InsufficientDataError(PlaneDepthError):
    pass


class SceneSpecError(PlaneDepthError):
    pass


class FormatError(PlaneDepthError):
    pass
