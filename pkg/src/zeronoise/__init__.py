"""Stationary densities of noisy expanding circle maps and their zero-noise limit."""

from .errors import (
    AssemblyError,
    ConfigError,
    ConvergenceError,
    RepresentationError,
    ResolutionError,
    SpectralGapError,
    UnsupportedError,
    ValidationError,
)
from .kernels import (
    NoiseKernel,
    epanechnikov,
    fourier_multiplier,
    get_kernel,
    moments,
    rescale,
    total_variation,
    triangular,
    uniform,
)
from .maps import (
    PiecewiseMap,
    SmoothMap,
    branch_preimages,
    doubling_map,
    expansion_constant,
    get_map,
    has_periodic_turning_point,
    perturbed_doubling_map,
    shift_fold_map,
)
from .operators import (
    DensityGrid,
    TransferMatrix,
    assemble_convolution,
    assemble_fourier,
    assemble_ulam,
    compose_noisy,
    norms,
)
from .solver import SolveReport, equilibrium_rate, resolvent_apply, stationary_density

__version__ = "0.1.0"
