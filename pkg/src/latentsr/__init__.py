"""Detail-aware loss weighting, latent frequency injection and residual refinement."""

from .daw import DawConfig, difficulty_weights, weighted_external_loss, weighted_mse
from .errors import (
    ConfigError,
    DivergenceError,
    FormatError,
    LatentSRError,
    ParameterError,
    ShapeError,
    UnsupportedVersionError,
)
from .freq import FreqFilterSpec, butterworth_gain, decompose
from .lfim import LfimConfig, lfim_apply
from .lrrb import LrrbParams, init_params, lrrb_forward, refine
from .spatial_filters import detail_map
from .tensor_io import tensor_read_ft32, tensor_write_ft32

__version__ = "0.1.0"
