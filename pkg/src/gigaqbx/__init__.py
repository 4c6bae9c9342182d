"""GIGAQBX: FMM-accelerated global QBX layer-potential evaluation in 3D,
with target-specific near-field expansions and a calibrated cost model."""

from ._backend import BACKEND_NAME

__version__ = "0.1.0"
__all__ = ["BACKEND_NAME", "__version__"]
