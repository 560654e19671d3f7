"""mfsol: moving frames, integrable spin systems, and their wave counterparts."""

__version__ = "0.1.0"

from .grids import Grid2

__all__ = ["Grid2", "__version__"]
