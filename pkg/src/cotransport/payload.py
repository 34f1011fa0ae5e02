"""Rigid payload dynamics expressed about the shared measurement point P_s.

The generalized velocity is ``qdot = (v, w)``: the world-frame velocity of
P_s and the world-frame angular velocity of the payload.  The equations of
motion are

    M(R) qddot + C(R, qdot) qdot + g(R) = w_total

with ``w_total`` the applied wrench about P_s (gravity excluded).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .spatial import check_rotation, cross, parallel_axis, skew

G0 = 9.81
MAX_CONDITION = 1e12


class DegenerateDynamicsError(RuntimeError):
    pass


class GravityMode(enum.Enum):
    EARTH = "earth"
    ZERO = "zero"

    @property
    def vector(self) -> np.ndarray:
        if self is GravityMode.EARTH:
            return np.array([0.0, 0.0, -G0])
        return np.zeros(3)


@dataclass(frozen=True)
class PayloadParams:
    """True inertial properties of the transported object.

    ``com_offset`` is the vector from P_s to the center of mass, in the body
    frame; ``inertia_cm`` is taken about the center of mass.
    """

    mass: float
    inertia_cm: np.ndarray
    com_offset: np.ndarray

    def __post_init__(self):
        J = np.asarray(self.inertia_cm, dtype=float)
        d = np.asarray(self.com_offset, dtype=float)
        object.__setattr__(self, "inertia_cm", J)
        object.__setattr__(self, "com_offset", d)
        if not (np.isfinite(self.mass) and self.mass > 0):
            raise ValueError(f"payload.mass must be > 0 kg, got {self.mass}")
        if J.shape != (3, 3) or not np.all(np.isfinite(J)):
            raise ValueError("payload.inertia_cm must be a finite 3x3 matrix [kg*m^2]")
        if np.max(np.abs(J - J.T)) > 1e-9:
            raise ValueError("payload.inertia_cm must be symmetric")
        if np.linalg.eigvalsh(J).min() <= 0:
            raise ValueError("payload.inertia_cm must be positive definite")
        if d.shape != (3,) or not np.all(np.isfinite(d)):
            raise ValueError("payload.com_offset must be a finite 3-vector [m]")

    @cached_property
    def inertia_ps(self) -> np.ndarray:
        """Inertia about P_s in the body frame (parallel-axis shifted)."""
        return parallel_axis(self.inertia_cm, self.mass, self.com_offset)

    @cached_property
    def condition(self) -> float:
        """Condition number of the inertia matrix; rotation-invariant."""
        return float(np.linalg.cond(inertia_matrix(self, np.eye(3))))

    @cached_property
    def inertia_cm_inv(self) -> np.ndarray:
        return np.linalg.inv(self.inertia_cm)

    def phi(self) -> np.ndarray:
        """Inertial parameter vector ``[m, m*dbar, Jd_xx, Jd_yy, Jd_zz, Jd_xy, Jd_xz, Jd_yz]``."""
        return np.concatenate(([self.mass], self.mass * self.com_offset, pack_sym(self.inertia_ps)))


def pack_sym(J) -> np.ndarray:
    return np.array([J[0, 0], J[1, 1], J[2, 2], J[0, 1], J[0, 2], J[1, 2]])


def unpack_sym(j) -> np.ndarray:
    xx, yy, zz, xy, xz, yz = j
    return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])


@dataclass
class PayloadState:
    p: np.ndarray
    R: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.R = check_rotation(self.R, "payload R", tol=1e-8)
        self.v = np.asarray(self.v, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        for name in ("p", "v", "w"):
            x = getattr(self, name)
            if x.shape != (3,) or not np.all(np.isfinite(x)):
                raise ValueError(f"payload state {name} must be a finite 3-vector")

    @property
    def qdot(self) -> np.ndarray:
        return np.concatenate((self.v, self.w))

    def copy(self) -> "PayloadState":
        return PayloadState(self.p.copy(), self.R.copy(), self.v.copy(), self.w.copy())


def inertia_matrix(params: PayloadParams, R) -> np.ndarray:
    m = params.mass
    S = skew(R @ params.com_offset)
    M = np.empty((6, 6))
    M[:3, :3] = m * np.eye(3)
    M[:3, 3:] = -m * S
    M[3:, :3] = m * S
    M[3:, 3:] = R @ params.inertia_ps @ R.T
    return M


def coriolis_matrix(params: PayloadParams, R, w, v) -> np.ndarray:
    """Coriolis/centripetal matrix with ``Mdot - 2C`` skew-symmetric."""
    m = params.mass
    r = R @ params.com_offset
    W = skew(w)
    WS = W @ skew(r)
    C = np.zeros((6, 6))
    C[:3, 3:] = -m * WS
    C[3:, :3] = m * WS
    C[3:, 3:] = W @ R @ params.inertia_ps @ R.T + m * skew(cross(r, v))
    return C


def gravity_wrench(params: PayloadParams, R, mode: GravityMode) -> np.ndarray:
    if mode is GravityMode.ZERO:
        return np.zeros(6)
    weight = params.mass * mode.vector
    return -np.concatenate((weight, cross(R @ params.com_offset, weight)))


def forward_dynamics(
    params: PayloadParams, state: PayloadState, total_wrench, mode: GravityMode
) -> tuple[np.ndarray, np.ndarray]:
    """Solve the Euler-Lagrange equations for ``(vdot, wdot)``.

    Uses the block structure of ``M``: its Schur complement is the world
    inertia about the center of mass, ``R J_cm R^T``, so only a 3x3 inverse
    (cached in the body frame) is needed.
    """
    if params.condition > MAX_CONDITION:
        raise DegenerateDynamicsError("payload inertia matrix is numerically singular")
    m = params.mass
    R, w = state.R, state.w
    wr = np.asarray(total_wrench, dtype=float)
    r = R @ params.com_offset
    # C(R, qdot) qdot = [-m w x (r x w); w x (J w)] and g = -[m g0; r x m g0].
    weight = m * mode.vector
    f = wr[:3] + m * cross(w, cross(r, w)) + weight
    tau = wr[3:] - cross(w, R @ (params.inertia_ps @ (R.T @ w))) + cross(r, weight)
    wdot = R @ (params.inertia_cm_inv @ (R.T @ (tau - cross(r, f))))
    vdot = f / m + cross(r, wdot)
    return vdot, wdot


def kinetic_energy(params: PayloadParams, state: PayloadState) -> float:
    qd = state.qdot
    return 0.5 * float(qd @ inertia_matrix(params, state.R) @ qd)
