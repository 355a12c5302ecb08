"""Modal reduced-order simulation of reactor transients on hexagonal cores."""

__version__ = "0.1.0"
