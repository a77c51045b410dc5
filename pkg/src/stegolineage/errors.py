class DimensionError(ValueError):
    """Image geometry unsuitable for the requested operation."""

    def __init__(self, message: str, axis: str | None = None):
        super().__init__(message)
        self.axis = axis


class CapacityError(ValueError):
    """The cover has fewer mid-band coefficients than trait bits."""
