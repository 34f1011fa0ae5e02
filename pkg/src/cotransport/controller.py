"""Decentralized adaptive transport controller.

Each agent holds its own estimate of the payload inertial parameters
(scaled by its workload share) and of its own grasp offset, and computes
its wrench from the shared payload measurement and reference only.

Sign convention: the composite error is ``s = qdot - qdot_r`` (measured
minus reference velocity), where the reference velocity carries the pose
correction.  With it the control law is ``w_hat = Y_phi phi_hat - K_PD s``
and both adaptation laws descend along ``-Gamma Y^T s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grasp import GraspGeometry, coupling_apply
from .payload import GravityMode, PayloadState
from .spatial import cross, skew

N_PHI = 10


class DivergenceError(RuntimeError):
    pass


def _spd(A, name: str, n: int) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim == 0:
        A = float(A) * np.eye(n)
    elif A.ndim == 1:
        A = np.diag(A)
    if A.shape != (n, n) or np.max(np.abs(A - A.T)) > 1e-12 or np.linalg.eigvalsh(A).min() <= 0:
        raise ValueError(f"gains.{name} must be a symmetric positive definite {n}x{n} matrix")
    return A


@dataclass(frozen=True)
class ControllerGains:
    """Gains; matrices may be given as scalars or diagonals."""

    beta: float
    k_pd: np.ndarray
    gamma_phi: np.ndarray
    gamma_d: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"gains.beta must satisfy 0 < beta < 1 [1/s], got {self.beta}")
        object.__setattr__(self, "k_pd", _spd(self.k_pd, "k_pd", 6))
        object.__setattr__(self, "gamma_phi", _spd(self.gamma_phi, "gamma_phi", N_PHI))
        object.__setattr__(self, "gamma_d", _spd(self.gamma_d, "gamma_d", 3))


@dataclass
class AgentEstimator:
    phi: np.ndarray = field(default_factory=lambda: np.zeros(N_PHI))
    d_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        self.d_hat = np.asarray(self.d_hat, dtype=float)
        if self.phi.shape != (N_PHI,) or self.d_hat.shape != (3,):
            raise ValueError("estimator needs phi (10,) and d_hat (3,)")


@dataclass(frozen=True)
class ReferenceSample:
    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))
    wdot: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def qdot(self) -> np.ndarray:
        return np.concatenate((self.v, self.w))

    @property
    def qddot(self) -> np.ndarray:
        return np.concatenate((self.a, self.wdot))


def _attitude_error(R, R_d) -> np.ndarray:
    # vee(R_e - R_e^T) for R_e = R_d^T R; the difference is skew by construction.
    E = R_d.T @ R
    return np.array([E[2, 1] - E[1, 2], E[0, 2] - E[2, 0], E[1, 0] - E[0, 1]])


def composite_error(state: PayloadState, ref: ReferenceSample, beta: float) -> np.ndarray:
    eps = (state.v - ref.v) + beta * (state.p - ref.p)
    o = (state.w - ref.w) + 0.5 * beta * ref.R @ _attitude_error(state.R, ref.R)
    return np.concatenate((eps, o))


def reference_velocity(state: PayloadState, ref: ReferenceSample, beta: float):
    """Reference velocity ``qdot_r`` and its time derivative ``qddot_r``.

    ``composite_error == state.qdot - qdot_r`` holds exactly.
    """
    v_r = ref.v - beta * (state.p - ref.p)
    a_r = ref.a - beta * (state.v - ref.v)
    x = _attitude_error(state.R, ref.R)
    E = ref.R.T @ skew(state.w - ref.w) @ state.R
    x_dot = np.array([E[2, 1] - E[1, 2], E[0, 2] - E[2, 0], E[1, 0] - E[0, 1]])
    w_r = ref.w - 0.5 * beta * ref.R @ x
    wdot_r = ref.wdot - 0.5 * beta * (cross(ref.w, ref.R @ x) + ref.R @ x_dot)
    return np.concatenate((v_r, w_r)), np.concatenate((a_r, wdot_r))


def rotation_error_metric(R_e) -> float:
    return float(np.trace(R_e) - 3.0)


def _inertia_columns(x) -> np.ndarray:
    # J @ x == _inertia_columns(x) @ [xx, yy, zz, xy, xz, yz]
    x1, x2, x3 = x
    return np.array(
        [
            [x1, 0.0, 0.0, x2, x3, 0.0],
            [0.0, x2, 0.0, x1, 0.0, x3],
            [0.0, 0.0, x3, 0.0, x1, x2],
        ]
    )


def regressor_phi(state: PayloadState, vel, acc, mode: GravityMode) -> np.ndarray:
    """Regressor with ``Y @ phi == M acc + C(state) vel + g`` for all ``phi``.

    ``phi = [m, m*dbar, packed J_d]`` (see ``PayloadParams.phi``).
    """
    R, v, w = state.R, state.v, state.w
    a_v, a_w = acc[:3], acc[3:]
    b_v, b_w = vel[:3], vel[3:]
    g = mode.vector
    Y = np.zeros((6, N_PHI))
    Y[:3, 0] = a_v - g
    # skew(a) skew(b) = b a^T - (a.b) I keeps the products cheap.
    top = skew(a_w) + np.outer(b_w, w)
    top[np.diag_indices(3)] -= w @ b_w
    bot = np.outer(v, b_w) - np.outer(b_v, w) - skew(a_v - g)
    bot[np.diag_indices(3)] += w @ b_v - b_w @ v
    Y[:3, 1:4] = top @ R
    Y[3:, 1:4] = bot @ R
    Y[3:, 4:] = R @ _inertia_columns(R.T @ a_w) + skew(w) @ R @ _inertia_columns(R.T @ b_w)
    return Y


def gripper_world_rotation(R_B, geom: GraspGeometry) -> np.ndarray:
    # Vehicles are mounted with their frame aligned to the payload body frame.
    return R_B @ geom.R_gripper


def regressor_d(w_hat, R_B, R_E, l_g, form: str = "paper") -> np.ndarray:
    """Regressor with ``Y_d @ delta == -(G(d + delta) - G(d)) @ w_hat``."""
    return regressor_d_lever(w_hat, R_B, R_E @ np.asarray(l_g, dtype=float), form)


def regressor_d_lever(w_hat, R_B, lever, form: str = "paper") -> np.ndarray:
    """:func:`regressor_d` with the world gripper lever ``R_E @ l_g`` precomputed."""
    f_hat = w_hat[:3]
    Y = np.zeros((6, 3))
    if form == "paper":
        Y[3:, :] = skew(cross(lever, f_hat)) @ R_B
    elif form == "conventional":
        Y[3:, :] = skew(f_hat) @ R_B
    else:
        raise ValueError(f"unknown grasp_map_form {form!r}")
    return Y


def wrench_command(agent: AgentEstimator, Y_phi, s, R_B, geom: GraspGeometry, gains: ControllerGains, form: str = "paper"):
    """Agent wrench from the shared regressor and composite error.

    Returns ``(w_hat, w_apply)``: the wrench about P_s and the wrench the
    agent applies at its gripper after undoing its estimated grasp map.
    """
    w_hat = Y_phi @ agent.phi - gains.k_pd @ s
    # Closed-form inverse of the estimated grasp map [[I, 0], [B, I]].
    w_apply = w_hat.copy()
    w_apply[3:] -= coupling_apply(R_B @ agent.d_hat, R_B @ geom.lever_body, w_hat[:3], form)
    return w_hat, w_apply


def agent_control(
    agent: AgentEstimator,
    state: PayloadState,
    ref: ReferenceSample,
    gains: ControllerGains,
    geom: GraspGeometry,
    mode: GravityMode,
    form: str = "paper",
):
    s = composite_error(state, ref, gains.beta)
    vel_r, acc_r = reference_velocity(state, ref, gains.beta)
    Y_phi = regressor_phi(state, vel_r, acc_r, mode)
    return wrench_command(agent, Y_phi, s, state.R, geom, gains, form)


def _cross_rows(A, B) -> np.ndarray:
    out = np.empty_like(A)
    out[:, 0] = A[:, 1] * B[:, 2] - A[:, 2] * B[:, 1]
    out[:, 1] = A[:, 2] * B[:, 0] - A[:, 0] * B[:, 2]
    out[:, 2] = A[:, 0] * B[:, 1] - A[:, 1] * B[:, 0]
    return out


def team_commands(phi, d_hat, Y_phi, s, R_B, lever_body, gains: ControllerGains, form: str = "paper"):
    """Row-stacked :func:`wrench_command` and ``d_hat`` adaptation rate for several agents.

    Row ``i`` of every output depends only on row ``i`` of ``phi``, ``d_hat``
    and ``lever_body`` plus the shared signals; this is a vectorized map over
    independent agents, not a coupling between them.  The grasp terms are
    evaluated in the payload body frame, where the gripper levers are fixed.
    Returns ``(w_hat, w_apply, d_rate)`` with shapes (n, 6), (n, 6), (n, 3).
    """
    w_hat = phi @ Y_phi.T - gains.k_pd @ s
    f_b = w_hat[:, :3] @ R_B
    if form == "paper":
        u_b = _cross_rows(lever_body, f_b)
        b_b = _cross_rows(d_hat, u_b)
    elif form == "conventional":
        u_b = f_b
        b_b = _cross_rows(d_hat + lever_body, f_b)
    else:
        raise ValueError(f"unknown grasp_map_form {form!r}")
    w_apply = w_hat.copy()
    w_apply[:, 3:] -= b_b @ R_B.T
    # Y_d^T s = -R_B^T (u x s_w) = (R_B^T s_w) x u_b, written row-wise.
    ydts = u_b @ skew(R_B.T @ s[3:]).T
    return w_hat, w_apply, -ydts @ gains.gamma_d.T


def adaptation_rates(Y_phi, Y_d, s, gains: ControllerGains):
    return -gains.gamma_phi @ (Y_phi.T @ s), -gains.gamma_d @ (Y_d.T @ s)


def adapt(agent: AgentEstimator, Y_phi, Y_d, s, gains: ControllerGains, dt: float) -> AgentEstimator:
    """One explicit-Euler step of both adaptation laws."""
    if not dt > 0:
        raise ValueError("adapt: dt must be > 0")
    dphi, dd = adaptation_rates(Y_phi, Y_d, s, gains)
    out = AgentEstimator(agent.phi + dt * dphi, agent.d_hat + dt * dd)
    if not (np.all(np.isfinite(out.phi)) and np.all(np.isfinite(out.d_hat))):
        raise DivergenceError("adaptation produced non-finite estimates")
    return out
