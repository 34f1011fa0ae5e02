"""Scenario configuration: presets, YAML ingestion, validation, resolution.

A configuration is a key-value tree with the sections ``scenario``,
``payload``, ``agents``, ``gains``, ``traj``, ``sim`` and ``events``.  A
file may name a ``preset`` at top level; its own keys are then merged over
the preset (mappings merge recursively, lists are replaced).  The resolved
tree is what ``config.resolved`` echoes, and loading it again is a fixed
point.

Units: lengths m, masses kg, inertias kg*m^2, times s, angular rates rad/s,
angles deg (rotor tilts only), rotor coefficients N*s^2/rad^2 and
N*m*s^2/rad^2, wrench limits N / N*m.
"""

from __future__ import annotations

import copy
import hashlib
from pathlib import Path

import numpy as np
import yaml

from .controller import AgentEstimator, ControllerGains
from .grasp import GraspGeometry
from .payload import GravityMode, PayloadParams, PayloadState
from .sim import ConfigError, Event, ScenarioConfig, TrajectoryParams
from .spatial import quat_to_rot
from .vehicle import VehicleParams, hexarotor

# Reference payload and grasp geometry.  The printed com offset "0.0.1" is
# read as 0.01 m.
PAYLOAD_PRESET = {
    "mass": 5.0,
    "inertia_cm": [1.4255, 1.4255, 0.8411],
    "com_offset": [0.74, 0.01, -0.2],
    "initial": None,
}
GRASP_OFFSETS = [
    [-0.8, 1.2, 0.1],
    [1.0, 1.0, 0.1],
    [1.0, -0.7, 0.1],
    [-0.7, -1.1, 0.1],
]
GRIPPER_OFFSET = [0.1, 0.0, -0.3]

HEXAROTOR = {
    "kind": "hexarotor",
    # Heavy enough that hover thrust leaves differential-thrust room for the
    # grasp torques of the preset payload.
    "mass": 10.0,
    "inertia": [0.15, 0.15, 0.25],
    "arm_length": 0.3,
    "tilt_axial_deg": 20.0,
    "tilt_radial_deg": 10.0,
    "k_f": 8.5e-6,
    "k_m": 1.4e-7,
    "torque_form": "conventional",
    "wrench_limits": None,
}
TUG = {
    "kind": "tug",
    "mass": 50.0,
    "inertia": [5.0, 5.0, 5.0],
    "arm_length": None,
    "tilt_axial_deg": None,
    "tilt_radial_deg": None,
    "k_f": None,
    "k_m": None,
    "torque_form": "conventional",
    "wrench_limits": [200.0, 200.0, 200.0, 100.0, 100.0, 100.0],
}

GAINS = {
    "beta": 0.5,
    "k_pd": [40.0, 40.0, 40.0, 8.0, 8.0, 8.0],
    "gamma_phi": 0.5,
    "gamma_d": 0.1,
}


def _agents(vehicle: dict) -> list:
    return [
        {
            "grasp_offset": list(d),
            "gripper_offset": list(GRIPPER_OFFSET),
            "gripper_quaternion": [1.0, 0.0, 0.0, 0.0],
            "vehicle": dict(vehicle),
            "estimator_init": {"phi": [0.0] * 10, "d_hat": [0.0] * 3},
        }
        for d in GRASP_OFFSETS
    ]


def _preset(name: str, gravity: str, vehicle: dict, estimate_bound: float) -> dict:
    return {
        "scenario": {
            "name": name,
            "gravity": gravity,
            "plant": "wrench",
            "grasp_map_form": "paper",
            "estimator_integration": "rk4",
            "gamma_rescale_on_failure": False,
            "lyapunov_share": "active",
            "estimate_bound": estimate_bound,
            "estimate_cap": None,
        },
        "payload": copy.deepcopy(PAYLOAD_PRESET),
        "agents": _agents(vehicle),
        "gains": copy.deepcopy(GAINS),
        "traj": {"omega_x": 0.5, "omega_y": 0.5, "amplitude": 1.0},
        "sim": {"dt": 1e-3, "duration": 20.0, "seed": 0, "init_noise": 0.0},
        "events": [{"kind": "disable_agent", "agent": 0, "t": 10.0}],
    }


PRESETS = {
    "earth": lambda: _preset("earth", "earth", HEXAROTOR, 100.0),
    "space": lambda: _preset("space", "zero", TUG, 100.0),
}

# Schema: key -> (kind, unit).  Kinds: float, int, bool, str, vec3, vec4,
# diag3 (3 values or 3x3), diag6, diag10, list (handled separately), optional
# variants prefixed with "?".
SCHEMA = {
    "scenario": {
        "name": ("str", ""),
        "gravity": ("str", "earth|zero"),
        "plant": ("str", "wrench|rotor"),
        "grasp_map_form": ("str", "paper|conventional"),
        "estimator_integration": ("str", "rk4|euler"),
        "gamma_rescale_on_failure": ("bool", ""),
        "lyapunov_share": ("str", "active|nominal"),
        "estimate_bound": ("float", "estimate units"),
        "estimate_cap": ("?float", "estimate units"),
    },
    "payload": {
        "mass": ("float", "kg"),
        "inertia_cm": ("diag3", "kg*m^2"),
        "com_offset": ("vec3", "m"),
        "initial": (
            "?section",
            {
                "position": ("vec3", "m"),
                "quaternion": ("vec4", "unit quaternion w,x,y,z"),
                "velocity": ("vec3", "m/s"),
                "angular_velocity": ("vec3", "rad/s"),
            },
        ),
    },
    "agents": (
        "list",
        {
            "grasp_offset": ("vec3", "m"),
            "gripper_offset": ("vec3", "m"),
            "gripper_quaternion": ("vec4", "unit quaternion w,x,y,z"),
            "vehicle": (
                "section",
                {
                    "kind": ("str", "hexarotor|tug"),
                    "mass": ("float", "kg"),
                    "inertia": ("diag3", "kg*m^2"),
                    "arm_length": ("?float", "m"),
                    "tilt_axial_deg": ("?float", "deg"),
                    "tilt_radial_deg": ("?float", "deg"),
                    "k_f": ("?float", "N*s^2/rad^2"),
                    "k_m": ("?float", "N*m*s^2/rad^2"),
                    "torque_form": ("str", "conventional|paper"),
                    "wrench_limits": ("?vec6", "N, N*m"),
                },
            ),
            "estimator_init": (
                "section",
                {"phi": ("vec10", "inertial parameter units"), "d_hat": ("vec3", "m")},
            ),
        },
    ),
    "gains": {
        "beta": ("float", "1/s"),
        "k_pd": ("diag6", "N*s/m, N*m*s/rad"),
        "gamma_phi": ("diag10", "adaptation gain"),
        "gamma_d": ("diag3", "adaptation gain"),
    },
    "traj": {
        "omega_x": ("float", "rad/s"),
        "omega_y": ("float", "rad/s"),
        "amplitude": ("float", "m"),
    },
    "sim": {
        "dt": ("float", "s"),
        "duration": ("float", "s"),
        "seed": ("int", ""),
        "init_noise": ("float", "estimate units"),
    },
    "events": ("list", {"kind": ("str", "disable_agent"), "agent": ("int", "index"), "t": ("float", "s")}),
}


def _float(x, key: str, unit: str) -> float:
    if isinstance(x, bool):
        raise ConfigError(f"{key}: expected a number [{unit}], got {x!r}")
    try:
        val = float(x)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number [{unit}], got {x!r}") from None
    if not np.isfinite(val):
        raise ConfigError(f"{key}: expected a finite number [{unit}], got {x!r}")
    return val


def _vector(x, size: int, key: str, unit: str) -> list:
    if not isinstance(x, (list, tuple)) or len(x) != size:
        raise ConfigError(f"{key}: expected a list of {size} numbers [{unit}], got {x!r}")
    return [_float(v, f"{key}[{i}]", unit) for i, v in enumerate(x)]


def _matrix_or_diag(x, size: int, key: str, unit: str):
    """Scalar, diagonal list, or full matrix -> normalized nested list/float."""
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return _float(x, key, unit)
    if isinstance(x, str):
        return _float(x, key, unit)
    if isinstance(x, (list, tuple)) and len(x) == size and all(isinstance(r, (list, tuple)) for r in x):
        return [_vector(r, size, f"{key}[{i}]", unit) for i, r in enumerate(x)]
    return _vector(x, size, key, unit)


def _check(node, schema, key: str):
    """Validate and normalize ``node`` against ``schema``; returns a new tree."""
    if isinstance(schema, tuple):
        kind, sub = schema
        optional = kind.startswith("?")
        kind = kind.lstrip("?")
        if node is None:
            if optional:
                return None
            raise ConfigError(f"{key}: required value missing [{sub if isinstance(sub, str) else 'section'}]")
        if kind == "section":
            return _check(node, sub, key)
        if kind == "list":
            if not isinstance(node, list):
                raise ConfigError(f"{key}: expected a list")
            return [_check(item, sub, f"{key}[{i}]") for i, item in enumerate(node)]
        if kind == "float":
            return _float(node, key, sub)
        if kind == "int":
            if isinstance(node, bool) or not isinstance(node, int):
                raise ConfigError(f"{key}: expected an integer [{sub}], got {node!r}")
            return node
        if kind == "bool":
            if not isinstance(node, bool):
                raise ConfigError(f"{key}: expected true/false, got {node!r}")
            return node
        if kind == "str":
            if not isinstance(node, str):
                raise ConfigError(f"{key}: expected a string ({sub}), got {node!r}")
            return node
        if kind.startswith("vec"):
            return _vector(node, int(kind[3:]), key, sub)
        if kind.startswith("diag"):
            return _matrix_or_diag(node, int(kind[4:]), key, sub)
        raise AssertionError(kind)
    if not isinstance(node, dict):
        raise ConfigError(f"{key or 'config'}: expected a mapping")
    out = {}
    for k in node:
        if k not in schema:
            raise ConfigError(f"unknown key {_join(key, k)}")
    for k, sub in schema.items():
        out[k] = _check(node.get(k), sub, _join(key, k))
    return out


def _join(prefix: str, k) -> str:
    return f"{prefix}.{k}" if prefix else str(k)


def deep_merge(base, over):
    if isinstance(base, dict) and isinstance(over, dict):
        out = dict(base)
        for k, v in over.items():
            out[k] = deep_merge(base[k], v) if k in base else copy.deepcopy(v)
        return out
    return copy.deepcopy(over)


def parse_value(text: str):
    """Parse an override value: numbers first, then YAML."""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return yaml.safe_load(text)


def set_path(tree: dict, dotted: str, value) -> None:
    """Assign ``value`` at ``a.b.0.c`` (integers index lists)."""
    parts = dotted.split(".")
    node = tree
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        where = ".".join(parts[: i + 1])
        if isinstance(node, list):
            try:
                idx = int(part)
                node[idx]
            except (ValueError, IndexError):
                raise ConfigError(f"override {dotted!r}: {where} is not a valid list index") from None
            if last:
                node[idx] = value
            else:
                node = node[idx]
        elif isinstance(node, dict):
            if part not in node:
                raise ConfigError(f"unknown key {where}")
            if last:
                node[part] = value
            else:
                node = node[part]
        else:
            raise ConfigError(f"override {dotted!r}: {where} is not a section")


def resolve_tree(raw: dict, overrides=()) -> dict:
    """Merge a raw tree over its preset, apply overrides, validate."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    raw = dict(raw)
    preset = raw.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r}; available: {sorted(PRESETS)}")
        tree = deep_merge(PRESETS[preset](), raw)
    else:
        tree = raw
    tree = _check(tree, SCHEMA, "")
    for dotted, value in overrides:
        set_path(tree, dotted, value)
    return _check(tree, SCHEMA, "")


def preset_tree(name: str) -> dict:
    return resolve_tree({"preset": name})


def _quat(q, key: str) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not n > 0:
        raise ConfigError(f"{key}: quaternion must be nonzero")
    return quat_to_rot(q / n)


def _build_vehicle(v: dict, key: str) -> VehicleParams:
    try:
        if v["kind"] == "hexarotor":
            for k in ("arm_length", "tilt_axial_deg", "tilt_radial_deg", "k_f", "k_m"):
                if v[k] is None:
                    raise ConfigError(f"{key}.{k}: required for a hexarotor")
            rotors = hexarotor(v["arm_length"], v["tilt_axial_deg"], v["tilt_radial_deg"], v["k_f"], v["k_m"])
            return VehicleParams(v["mass"], _as_matrix(v["inertia"], 3), "hexarotor", rotors, torque_form=v["torque_form"])
        if v["kind"] == "tug":
            if v["wrench_limits"] is None:
                raise ConfigError(f"{key}.wrench_limits: required for a tug [N, N*m]")
            return VehicleParams(v["mass"], _as_matrix(v["inertia"], 3), "tug", wrench_limits=v["wrench_limits"])
        raise ConfigError(f"{key}.kind: expected hexarotor or tug, got {v['kind']!r}")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _as_matrix(x, n: int) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(n)
    if a.ndim == 1:
        return np.diag(a)
    return a


def build_config(tree: dict) -> ScenarioConfig:
    """Turn a validated tree into a :class:`ScenarioConfig`."""
    sc, pl, g, sim = tree["scenario"], tree["payload"], tree["gains"], tree["sim"]
    if sc["gravity"] not in ("earth", "zero"):
        raise ConfigError(f"scenario.gravity: expected earth or zero, got {sc['gravity']!r}")
    try:
        payload = PayloadParams(pl["mass"], _as_matrix(pl["inertia_cm"], 3), np.asarray(pl["com_offset"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    initial = None
    if pl["initial"] is not None:
        ini = pl["initial"]
        initial = PayloadState(
            ini["position"], _quat(ini["quaternion"], "payload.initial.quaternion"), ini["velocity"], ini["angular_velocity"]
        )
    grasps, vehicles, inits = [], [], []
    for i, a in enumerate(tree["agents"]):
        key = f"agents[{i}]"
        try:
            grasps.append(
                GraspGeometry(
                    np.asarray(a["grasp_offset"]),
                    np.asarray(a["gripper_offset"]),
                    _quat(a["gripper_quaternion"], f"{key}.gripper_quaternion"),
                )
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
        vehicles.append(_build_vehicle(a["vehicle"], f"{key}.vehicle"))
        inits.append(AgentEstimator(np.asarray(a["estimator_init"]["phi"]), np.asarray(a["estimator_init"]["d_hat"])))
    try:
        gains = ControllerGains(g["beta"], g["k_pd"], g["gamma_phi"], g["gamma_d"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    tr = tree["traj"]
    return ScenarioConfig(
        name=sc["name"],
        gravity=GravityMode(sc["gravity"]),
        payload=payload,
        grasps=tuple(grasps),
        vehicles=tuple(vehicles),
        gains=gains,
        traj=TrajectoryParams(tr["omega_x"], tr["omega_y"], tr["amplitude"]),
        dt=sim["dt"],
        duration=sim["duration"],
        events=tuple(Event(e["kind"], e["agent"], e["t"]) for e in tree["events"]),
        plant=sc["plant"],
        estimator_init=tuple(inits),
        gamma_rescale_on_failure=sc["gamma_rescale_on_failure"],
        lyapunov_share=sc["lyapunov_share"],
        grasp_map_form=sc["grasp_map_form"],
        estimator_integration=sc["estimator_integration"],
        estimate_bound=sc["estimate_bound"],
        estimate_cap=sc["estimate_cap"],
        initial_state=initial,
        seed=sim["seed"],
        init_noise=sim["init_noise"],
    )


def dump_tree(tree: dict) -> str:
    return yaml.safe_dump(tree, sort_keys=False, default_flow_style=None, width=120)


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def read_tree(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not parseable as YAML: {exc}") from None


def load_config(path, overrides=()) -> tuple[ScenarioConfig, dict]:
    """Load, merge over a preset if named, validate; returns (config, resolved tree)."""
    tree = resolve_tree(read_tree(path), overrides)
    return build_config(tree), tree


def load_preset(name: str, overrides=()) -> tuple[ScenarioConfig, dict]:
    tree = resolve_tree({"preset": name}, overrides)
    return build_config(tree), tree
