"""C2-smooth isogeometric collocation on planar multi-patch spline domains."""

__version__ = "0.1.0"
