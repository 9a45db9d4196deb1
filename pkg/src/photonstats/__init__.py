"""Photon statistics of a pulsed two-level emitter: simulation and time-tag analysis."""

import os

# try OpenMP before TBB: old TBB builds only emit a warning and fall back anyway
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp tbb workqueue")

__version__ = "0.1.0"
