"""Multi-spectral CT basis-material decomposition with Schmidt-orthogonal sweeps."""

import os as _os

import numba as _numba

__version__ = "0.1.0"

# the bundled TBB is too old for numba; go straight to OpenMP unless the user chose a layer
if not any(k in _os.environ for k in ("NUMBA_THREADING_LAYER", "NUMBA_THREADING_LAYER_PRIORITY")):
    _numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .forward import linearize, poly_project, simulate_acquisition  # noqa: E402
from .geometry import FanBeamGeometry, ImageGrid, Sinogram, forward_project  # noqa: E402
from .pipeline import ReconConfig, run_reconstruction  # noqa: E402
from .soma import SolveOptions, solve_system  # noqa: E402
from .spectra import MaterialTable, Spectrum, builtin_materials, synthetic_spectrum  # noqa: E402

__all__ = [
    "FanBeamGeometry",
    "ImageGrid",
    "Sinogram",
    "MaterialTable",
    "Spectrum",
    "ReconConfig",
    "SolveOptions",
    "builtin_materials",
    "forward_project",
    "linearize",
    "poly_project",
    "run_reconstruction",
    "simulate_acquisition",
    "solve_system",
    "synthetic_spectrum",
]
