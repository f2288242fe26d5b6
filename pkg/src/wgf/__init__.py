"""Projected one-dimensional Wasserstein gradient flows on ReLU transport maps."""

import os as _os

__version__ = "0.1.0"

# Cap numeric worker threads before numpy loads its BLAS.
_threads = _os.environ.get("WGF_THREADS")
if _threads:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from wgf.network import (  # noqa: F401,E402
    NetworkParams,
    ReferenceDensity,
    forward,
    init_identity,
    one_sided,
    param_jacobian,
    standard_gaussian,
    z_derivative,
)
