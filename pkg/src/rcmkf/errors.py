"""Exception types shared across the library."""


class GeometryError(ValueError):
    """Measurement geometry is undefined (e.g. range taken at the sensor origin)."""


class DegenerateCovarianceError(ValueError):
    """A covariance matrix is singular or indefinite beyond numerical tolerance."""
