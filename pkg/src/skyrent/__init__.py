"""Sky visibility, sidewalk color and rent analytics for street-level imagery."""

__version__ = "0.1.0"
