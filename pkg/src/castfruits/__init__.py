"""castfruits: embedding-space dataset cleaning and time-budgeted
verification evaluation."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
