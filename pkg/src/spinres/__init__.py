"""Spin-wave reservoir computing simulator."""

import os

# pick the OpenMP layer up front; the TBB probe on this numba build only
# emits a version warning before falling back here anyway
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
