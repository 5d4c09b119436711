"""Multi-dimensional MR reconstruction toolkit.

Synthetic multi-coil k-space, degradation and conventional reconstruction
pipelines, context vectors with derived noise-reduction factors, a numpy
context-modulated U-Net, and image-quality metrics.
"""

from .errors import (ChecksumError, DivergenceError, MRDLRError, NumericError, SingularSystemError,
                     ValidationError)

__version__ = "0.1.0"

__all__ = ["ChecksumError", "DivergenceError", "MRDLRError", "NumericError", "SingularSystemError",
           "ValidationError", "__version__"]
