"""Whitney-type extension of fractional Sobolev functions with a partial vanishing trace."""
from .errors import ConfigError, ContractViolation, DomainError, FracExtError
from .geometry import (
    Box,
    FractionalParams,
    Label,
    PointCloudSet,
    RegionSpec,
    builtin_geometry,
    classify,
    dist_to,
)

__version__ = "0.1.0"
