"""Vehicle actuation: tilted-hexarotor rotor wrenches, allocation, and tugs.

Wrenches are 6-vectors ``[fx, fy, fz, tx, ty, tz]``.  Rotor actuation is
expressed in squared rotor speeds ``omega_sq`` [rad^2/s^2].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .payload import GravityMode
from .spatial import check_rotation, cross, rot_x, rot_y, rot_z, skew

TORQUE_FORMS = ("conventional", "paper")
EZ = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class RotorConfig:
    position: np.ndarray  # in the vehicle frame [m]
    R_tilt: np.ndarray
    k_f: float  # N s^2/rad^2
    k_m: float  # N m s^2/rad^2, sign gives spin direction

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (3,) or not np.all(np.isfinite(pos)):
            raise ValueError("rotor position must be a finite 3-vector [m]")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "R_tilt", check_rotation(self.R_tilt, "rotor tilt"))
        if not self.k_f > 0:
            raise ValueError("rotor k_f must be > 0 [N*s^2/rad^2]")
        if not abs(self.k_m) > 0:
            raise ValueError("rotor k_m must be nonzero [N*m*s^2/rad^2]")


@dataclass(frozen=True)
class Saturation:
    """Raised-flag diagnostic for clamped actuation (not an error)."""

    residual: float
    clamped: tuple[int, ...]


def rotor_wrench(rotors, omega_sq, form: str = "conventional") -> np.ndarray:
    """Body-frame wrench about the vehicle center of mass from all rotors."""
    omega_sq = np.asarray(omega_sq, dtype=float)
    if np.any(omega_sq < 0):
        raise ValueError("rotor_wrench: squared rotor speeds must be >= 0")
    f_total = np.zeros(3)
    tau_total = np.zeros(3)
    for rotor, w2 in zip(rotors, omega_sq):
        f = rotor.R_tilt @ (EZ * (rotor.k_f * w2))
        if form == "conventional":
            arm = cross(rotor.position, f)
        elif form == "paper":
            arm = skew(f) @ rotor.position
        else:
            raise ValueError(f"unknown rotor torque form {form!r}")
        f_total += f
        tau_total += arm + rotor.R_tilt @ (EZ * (rotor.k_m * w2))
    return np.concatenate((f_total, tau_total))


def allocation_matrix(rotors, form: str = "conventional") -> np.ndarray:
    """Matrix ``A`` with ``rotor_wrench(rotors, x) == A @ x``."""
    n = len(rotors)
    return np.column_stack([rotor_wrench(rotors, np.eye(n)[j], form) for j in range(n)])


def allocate(A, w_desired) -> tuple[np.ndarray, Optional[Saturation]]:
    """Invert the allocation; negative squared speeds are clamped to zero."""
    A = np.asarray(A, dtype=float)
    if np.linalg.matrix_rank(A) < A.shape[0]:
        raise np.linalg.LinAlgError("allocate: allocation matrix is singular")
    w_desired = np.asarray(w_desired, dtype=float)
    x = np.linalg.solve(A, w_desired)
    neg = x < 0
    if not np.any(neg):
        return x, None
    x = np.where(neg, 0.0, x)
    residual = float(np.linalg.norm(A @ x - w_desired))
    return x, Saturation(residual, tuple(int(i) for i in np.flatnonzero(neg)))


def hexarotor(
    arm_length: float = 0.3,
    tilt_axial_deg: float = 20.0,
    tilt_radial_deg: float = 10.0,
    k_f: float = 8.5e-6,
    k_m: float = 1.4e-7,
) -> tuple[RotorConfig, ...]:
    """Six rotors on a regular hexagon with alternating tilt and spin.

    Rotor ``j`` sits at azimuth ``60 j`` deg.  Its thrust axis is rolled by
    ``+-tilt_axial`` about the arm and pitched by ``tilt_radial`` toward the
    arm.  Zero tilts give the classic coplanar (under-actuated) layout.
    """
    a = math.radians(tilt_axial_deg)
    b = math.radians(tilt_radial_deg)
    rotors = []
    for j in range(6):
        psi = j * math.pi / 3
        sign = 1.0 if j % 2 == 0 else -1.0
        pos = arm_length * np.array([math.cos(psi), math.sin(psi), 0.0])
        R = rot_z(psi) @ rot_x(sign * a) @ rot_y(b)
        rotors.append(RotorConfig(pos, R, k_f, sign * k_m))
    return tuple(rotors)


@dataclass(frozen=True)
class VehicleParams:
    """A hexarotor (``rotors`` set) or a tug (``wrench_limits`` set)."""

    mass: float
    inertia: np.ndarray
    kind: str = "hexarotor"
    rotors: tuple = ()
    wrench_limits: Optional[np.ndarray] = None
    torque_form: str = "conventional"
    allocation: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=float)
        object.__setattr__(self, "inertia", J)
        if not (np.isfinite(self.mass) and self.mass > 0):
            raise ValueError(f"vehicle mass must be > 0 kg, got {self.mass}")
        if J.shape != (3, 3) or np.max(np.abs(J - J.T)) > 1e-9 or np.linalg.eigvalsh(J).min() <= 0:
            raise ValueError("vehicle inertia must be a symmetric positive definite 3x3 [kg*m^2]")
        if self.kind == "hexarotor":
            if len(self.rotors) != 6:
                raise ValueError("hexarotor needs exactly 6 rotors")
            A = allocation_matrix(self.rotors, self.torque_form)
            if np.linalg.matrix_rank(A) < 6:
                raise ValueError("hexarotor allocation matrix has rank < 6 (not fully actuated)")
            A.setflags(write=False)
            object.__setattr__(self, "allocation", A)
        elif self.kind == "tug":
            lim = np.asarray(self.wrench_limits, dtype=float)
            if lim.shape != (6,) or not np.all(lim > 0):
                raise ValueError("tug wrench_limits must be 6 positive values [N, N*m]")
            object.__setattr__(self, "wrench_limits", lim)
            object.__setattr__(self, "allocation", None)
        else:
            raise ValueError(f"unknown vehicle kind {self.kind!r}; expected hexarotor or tug")


def vehicle_world_wrench(params: VehicleParams, R_U, vdot, w, wdot, w_p, mode: GravityMode) -> np.ndarray:
    """World-frame wrench the vehicle transmits through its grasp.

    ``vdot`` is the world-frame acceleration of the vehicle center of mass;
    ``w`` and ``wdot`` are body-frame angular velocity and acceleration;
    ``w_p`` is the body-frame rotor wrench.
    """
    J = params.inertia
    f_p, tau_p = w_p[:3], w_p[3:]
    f = R_U @ f_p - params.mass * np.asarray(vdot) + params.mass * mode.vector
    tau = R_U @ (tau_p - J @ wdot - cross(w, J @ w))
    return np.concatenate((f, tau))


def required_rotor_wrench(params: VehicleParams, R_U, vdot, w, wdot, w_desired, mode: GravityMode) -> np.ndarray:
    """Inverse of :func:`vehicle_world_wrench` in the rotor wrench."""
    J = params.inertia
    f_i, tau_i = w_desired[:3], w_desired[3:]
    f_p = R_U.T @ (f_i + params.mass * np.asarray(vdot) - params.mass * mode.vector)
    tau_p = R_U.T @ tau_i + J @ wdot + cross(w, J @ w)
    return np.concatenate((f_p, tau_p))


def tug_wrench(limits, w_desired) -> tuple[np.ndarray, bool]:
    limits = np.asarray(limits, dtype=float)
    if np.any(limits <= 0):
        raise ValueError("tug limits must be positive")
    w = np.clip(w_desired, -limits, limits)
    return w, bool(np.any(w != w_desired))
