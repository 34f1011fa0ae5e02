"""Decentralized adaptive cooperative transport of an unknown rigid payload."""

from .config import load_config, load_preset
from .controller import (
    AgentEstimator,
    ControllerGains,
    ReferenceSample,
    adapt,
    agent_control,
    composite_error,
    regressor_d,
    regressor_phi,
    rotation_error_metric,
)
from .grasp import GraspGeometry, aggregate_wrench, grasp_map, invert_grasp_map
from .payload import GravityMode, PayloadParams, PayloadState, forward_dynamics
from .sim import ConfigError, ScenarioConfig, SimLog, lyapunov, reference_trajectory, run
from .vehicle import VehicleParams, allocate, allocation_matrix, hexarotor, rotor_wrench

__all__ = [
    "AgentEstimator",
    "ConfigError",
    "ControllerGains",
    "GraspGeometry",
    "GravityMode",
    "PayloadParams",
    "PayloadState",
    "ReferenceSample",
    "ScenarioConfig",
    "SimLog",
    "VehicleParams",
    "adapt",
    "agent_control",
    "aggregate_wrench",
    "allocate",
    "allocation_matrix",
    "composite_error",
    "forward_dynamics",
    "grasp_map",
    "hexarotor",
    "invert_grasp_map",
    "load_config",
    "load_preset",
    "lyapunov",
    "reference_trajectory",
    "regressor_d",
    "regressor_phi",
    "rotation_error_metric",
    "rotor_wrench",
    "run",
]
