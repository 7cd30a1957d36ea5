"""Multi-IMU array navigation: strapdown mechanization, error-state filters and fusion schemes."""

from .errors import (
    ConfigError,
    CovarianceNotPSD,
    DegenerateErrors,
    EmptyFrame,
    EmptyOverlap,
    InnovationNotInvertible,
    LogFormatError,
    MimuFuseError,
    NonFiniteState,
    PoleSingularityError,
    SingularWeightMatrix,
    TimestampMismatch,
    UnsupportedSpec,
)
from .eskf import FilterConfig, InitialUncertainty, run_simu
from .federated import run_federated
from .geodesy import WGS84, EarthModel, GeodeticPosition
from .mechanization import ImuSample, NavState, propagate
from .simulator import NoiseSpec, TrajectorySpec, WaveModel, simulate
from .solution import NavSolutionLog
from .uekf import run_uekf
from .vimu import run_vimu

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CovarianceNotPSD",
    "DegenerateErrors",
    "EmptyFrame",
    "EmptyOverlap",
    "InnovationNotInvertible",
    "LogFormatError",
    "MimuFuseError",
    "NonFiniteState",
    "PoleSingularityError",
    "SingularWeightMatrix",
    "TimestampMismatch",
    "UnsupportedSpec",
    "FilterConfig",
    "InitialUncertainty",
    "run_simu",
    "run_federated",
    "WGS84",
    "EarthModel",
    "GeodeticPosition",
    "ImuSample",
    "NavState",
    "propagate",
    "NoiseSpec",
    "TrajectorySpec",
    "WaveModel",
    "simulate",
    "NavSolutionLog",
    "run_uekf",
    "run_vimu",
]
