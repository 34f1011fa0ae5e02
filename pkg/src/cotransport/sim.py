"""Closed-loop scenario execution and Lyapunov/tracking diagnostics.

The payload pose, twist and every active agent's estimates are integrated
together with a Lie-group RK4 scheme (Munthe-Kaas): within a step the
rotation is ``exp(theta) R0`` and ``theta`` is integrated in the Lie algebra.
Control and adaptation are re-evaluated at each stage, which keeps the
closed loop fourth-order in ``dt``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .controller import (
    AgentEstimator,
    ControllerGains,
    ReferenceSample,
    reference_velocity,
    regressor_phi,
    rotation_error_metric,
    team_commands,
    N_PHI,
)
from .grasp import GRASP_FORMS, coupling_block
from .payload import (
    GravityMode,
    PayloadParams,
    DegenerateDynamicsError,
    PayloadState,
    forward_dynamics,
    inertia_matrix,
)
from .spatial import cross, dexp_inv_so3, exp_so3, orthonormalize
from .vehicle import (
    VehicleParams,
    allocate,
    required_rotor_wrench,
    tug_wrench,
    vehicle_world_wrench,
)

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e9
PLANTS = ("wrench", "rotor")
INTEGRATORS = ("rk4", "euler")
LYAPUNOV_SHARES = ("active", "nominal")


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending key."""


@dataclass(frozen=True)
class Event:
    kind: str
    agent: int
    t: float


@dataclass(frozen=True)
class TrajectoryParams:
    omega_x: float = 0.5
    omega_y: float = 0.5
    amplitude: float = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    gravity: GravityMode
    payload: PayloadParams
    grasps: tuple
    vehicles: tuple
    gains: ControllerGains
    traj: TrajectoryParams = TrajectoryParams()
    dt: float = 1e-3
    duration: float = 20.0
    events: tuple = ()
    plant: str = "wrench"
    estimator_init: tuple = ()
    gamma_rescale_on_failure: bool = False
    lyapunov_share: str = "active"
    grasp_map_form: str = "paper"
    estimator_integration: str = "rk4"
    estimate_bound: float = 1e3
    estimate_cap: Optional[float] = None
    initial_state: Optional[PayloadState] = None
    seed: int = 0
    init_noise: float = 0.0

    def __post_init__(self):
        n = len(self.grasps)
        if n < 1:
            raise ConfigError("agents: at least one agent is required")
        if len(self.vehicles) != n:
            raise ConfigError("agents: every agent needs a vehicle")
        if self.estimator_init and len(self.estimator_init) != n:
            raise ConfigError("agents[].estimator_init: one entry per agent")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError(f"sim.dt must be > 0 [s], got {self.dt}")
        if not (math.isfinite(self.duration) and self.duration >= self.dt * (1 - 1e-9)):
            raise ConfigError(f"sim.duration must be >= sim.dt [s], got {self.duration}")
        for k, ev in enumerate(self.events):
            if ev.kind != "disable_agent":
                raise ConfigError(f"events[{k}].kind must be 'disable_agent', got {ev.kind!r}")
            if not 0 <= ev.agent < n:
                raise ConfigError(f"events[{k}].agent must be an index in [0, {n}), got {ev.agent}")
            if not 0.0 <= ev.t <= self.duration:
                raise ConfigError(f"events[{k}].t must lie in [0, sim.duration] [s], got {ev.t}")
        if self.plant not in PLANTS:
            raise ConfigError(f"scenario.plant must be one of {PLANTS}, got {self.plant!r}")
        if self.grasp_map_form not in GRASP_FORMS:
            raise ConfigError(f"scenario.grasp_map_form must be one of {GRASP_FORMS}")
        if self.estimator_integration not in INTEGRATORS:
            raise ConfigError(f"scenario.estimator_integration must be one of {INTEGRATORS}")
        if self.lyapunov_share not in LYAPUNOV_SHARES:
            raise ConfigError(f"scenario.lyapunov_share must be one of {LYAPUNOV_SHARES}")
        if not self.estimate_bound > 0:
            raise ConfigError("scenario.estimate_bound must be > 0")
        if self.estimate_cap is not None and not self.estimate_cap > 0:
            raise ConfigError("scenario.estimate_cap must be > 0 when set")

    @property
    def n(self) -> int:
        return len(self.grasps)

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.duration / self.dt)))


@dataclass
class StepRecord:
    t: float
    state: PayloadState
    s: np.ndarray
    e_p: np.ndarray
    rot_err: float
    phi: np.ndarray  # (n, 10)
    d_hat: np.ndarray  # (n, 3)
    w_hat: np.ndarray  # (n, 6)
    w_apply: np.ndarray  # (n, 6)
    active: np.ndarray  # (n,) bool
    omega_sq: Optional[np.ndarray]  # (n, 6), rotor plant only
    saturated: np.ndarray  # (n,) bool
    V: float
    dV: float


@dataclass
class SimLog:
    config: ScenarioConfig
    records: list
    termination: str = "Completed"
    diverged_at: Optional[float] = None
    reason: str = ""
    final_state: Optional[PayloadState] = None
    final_estimators: list = field(default_factory=list)


def reference_trajectory(t: float, omega_x: float, omega_y: float, amplitude: float = 1.0) -> ReferenceSample:
    """Planar sinusoidal circuit at fixed (identity) orientation."""
    if t < 0:
        raise ValueError("reference_trajectory: t must be >= 0")
    sx, cx = math.sin(omega_x * t), math.cos(omega_x * t)
    sy, cy = math.sin(omega_y * t), math.cos(omega_y * t)
    A = amplitude
    return ReferenceSample(
        p=np.array([A * sx, A * cy, 0.0]),
        v=np.array([A * omega_x * cx, -A * omega_y * sy, 0.0]),
        a=np.array([-A * omega_x**2 * sx, -A * omega_y**2 * cy, 0.0]),
    )


def lyapunov(s, R, estimators, payload: PayloadParams, grasps, gains: ControllerGains, included=None, share=None) -> float:
    """Lyapunov-like function of the closed loop (needs the true parameters).

    ``V = 1/2 [s^T M s + sum_i (phi_err_i^T Gamma_phi^-1 phi_err_i
    + d_err_i^T Gamma_d^-1 d_err_i)]`` with ``phi_err_i = phi_hat_i - share*phi``.
    ``included`` masks which agents enter the sum; ``share`` defaults to 1/n.
    """
    phi_hat = np.array([e.phi for e in estimators])
    d_hat = np.array([e.d_hat for e in estimators])
    return _lyapunov_arrays(
        np.asarray(s, dtype=float), R, phi_hat, d_hat, payload, np.array([g.d for g in grasps]),
        np.linalg.inv(gains.gamma_phi), np.linalg.inv(gains.gamma_d), included, share,
    )


def _lyapunov_arrays(s, R, phi_hat, d_hat, payload, d_true, Gp_inv, Gd_inv, included=None, share=None) -> float:
    n = len(phi_hat)
    share = 1.0 / n if share is None else share
    ep = phi_hat - share * payload.phi()
    ed = d_hat - d_true
    if included is not None:
        mask = np.asarray(included, dtype=bool)
        ep, ed = ep[mask], ed[mask]
    V = float(s @ inertia_matrix(payload, R) @ s)
    V += float(np.einsum("ij,jk,ik->", ep, Gp_inv, ep)) + float(np.einsum("ij,jk,ik->", ed, Gd_inv, ed))
    return 0.5 * V


class _Diverged(Exception):
    pass


class Simulator:
    """Stepper holding the mutable run state for one scenario.

    Agent estimates are kept row-stacked in ``phi`` (n, 10) and ``d_hat`` (n, 3).
    """

    def __init__(self, config: ScenarioConfig):
        self.cfg = config
        n = config.n
        if config.initial_state is not None:
            self.state = config.initial_state.copy()
        else:
            ref0 = self.reference(0.0)
            self.state = PayloadState(ref0.p.copy(), ref0.R.copy(), np.zeros(3), np.zeros(3))
        if config.estimator_init:
            self.phi = np.array([e.phi for e in config.estimator_init], dtype=float)
            self.d_hat = np.array([e.d_hat for e in config.estimator_init], dtype=float)
        else:
            self.phi = np.zeros((n, N_PHI))
            self.d_hat = np.zeros((n, 3))
        if config.init_noise > 0:
            rng = np.random.default_rng(config.seed)
            for i in range(n):
                self.phi[i] += config.init_noise * rng.standard_normal(N_PHI)
                self.d_hat[i] += config.init_noise * rng.standard_normal(3)
        self.active = np.ones(n, dtype=bool)
        self.acc_prev = np.zeros(6)
        self._event_steps = sorted(
            (max(0, math.ceil(ev.t / config.dt - 1e-9)), ev.agent) for ev in config.events
        )
        self._vehicle_offsets = [g.l_g - g.d for g in config.grasps]
        self._lever_body = np.array([g.lever_body for g in config.grasps])
        self._d_true = np.array([g.d for g in config.grasps])
        eye = np.eye(3)
        self._B_body = np.hstack(
            [coupling_block(eye, g.R_gripper, g.d, g.l_g, config.grasp_map_form) for g in config.grasps]
        )
        self._Gp_inv = np.linalg.inv(config.gains.gamma_phi)
        self._Gd_inv = np.linalg.inv(config.gains.gamma_d)
        tugs = [v.kind == "tug" for v in config.vehicles]
        self._all_tugs = all(tugs)
        self._tug_limits = np.array([v.wrench_limits for v in config.vehicles]) if self._all_tugs else None

    @property
    def estimators(self) -> list:
        return [AgentEstimator(a.copy(), b.copy()) for a, b in zip(self.phi, self.d_hat)]

    def reference(self, t: float) -> ReferenceSample:
        tr = self.cfg.traj
        return reference_trajectory(t, tr.omega_x, tr.omega_y, tr.amplitude)

    def apply_events(self, k: int) -> None:
        for k_ev, agent in self._event_steps:
            if k_ev == k and self.active[agent]:
                n_before = int(self.active.sum())
                self.active[agent] = False
                n_after = int(self.active.sum())
                log.info("step %d: agent %d disabled (%d active)", k, agent, n_after)
                if self.cfg.gamma_rescale_on_failure and n_after > 0:
                    self.phi[self.active] *= n_before / n_after

    # -- plant -----------------------------------------------------------

    def _actuate(self, i: int, w_apply, state: PayloadState):
        """Wrench actually delivered by agent ``i``; returns (w, omega_sq, saturated)."""
        cfg = self.cfg
        if cfg.plant == "wrench":
            return w_apply, None, False
        veh: VehicleParams = cfg.vehicles[i]
        if veh.kind == "tug":
            w, sat = tug_wrench(veh.wrench_limits, w_apply)
            return w, None, sat
        # Rigidly mounted hexarotor; accelerations are taken quasi-statically
        # from the previous step to break the algebraic loop.
        R = state.R
        rho = R @ self._vehicle_offsets[i]
        vdot, wdot = self.acc_prev[:3], self.acc_prev[3:]
        a_i = vdot + cross(wdot, rho) + cross(state.w, cross(state.w, rho))
        w_b = R.T @ state.w
        wdot_b = R.T @ wdot
        w_p = required_rotor_wrench(veh, R, a_i, w_b, wdot_b, w_apply, cfg.gravity)
        omega_sq, sat = allocate(veh.allocation, w_p)
        w_p_act = veh.allocation @ omega_sq
        w = vehicle_world_wrench(veh, R, a_i, w_b, wdot_b, w_p_act, cfg.gravity)
        return w, omega_sq, sat is not None

    def evaluate(self, t: float, state: PayloadState, phi, d_hat, detail: bool = False):
        """Closed-loop derivatives at ``(t, state, phi, d_hat)``.

        Returns ``(vdot, wdot, dphi, dd)`` and, if ``detail``, a dict of the
        intermediate signals used for logging.  Disabled agents apply no
        wrench and their estimates are frozen.
        """
        cfg = self.cfg
        gains = cfg.gains
        ref = self.reference(t)
        vel_r, acc_r = reference_velocity(state, ref, gains.beta)
        s = np.concatenate((state.v, state.w)) - vel_r
        Y_phi = regressor_phi(state, vel_r, acc_r, cfg.gravity)
        R = state.R
        n = cfg.n
        form = cfg.grasp_map_form
        act = self.active
        w_hat, w_apply, dd = team_commands(phi, d_hat, Y_phi, s, R, self._lever_body, gains, form)
        dphi = np.zeros((n, N_PHI))
        dphi[act] = -(gains.gamma_phi @ (Y_phi.T @ s))
        dd[~act] = 0.0
        w_hat[~act] = 0.0
        w_apply[~act] = 0.0
        omega_sq = np.zeros((n, 6)) if cfg.plant == "rotor" else None
        saturated = np.zeros(n, dtype=bool)
        if cfg.plant == "wrench":
            w_act = w_apply
        elif self._all_tugs:
            w_act = np.clip(w_apply, -self._tug_limits, self._tug_limits)
            saturated = np.any(w_act != w_apply, axis=1)
        else:
            w_act = np.zeros((n, 6))
            for i in np.flatnonzero(act):
                w_act[i], osq, saturated[i] = self._actuate(i, w_apply[i], state)
                if osq is not None:
                    omega_sq[i] = osq
        # True grasp maps applied in closed form: [f; tau + B f], where
        # B = R B_body R^T with B_body fixed per agent.  Inactive rows are zero.
        f_act = w_act[:, :3]
        b = R @ (self._B_body @ (f_act @ R).ravel())
        total = np.concatenate((f_act.sum(axis=0), w_act[:, 3:].sum(axis=0) + b))
        vdot, wdot = forward_dynamics(cfg.payload, state, total, cfg.gravity)
        out = (vdot, wdot, dphi, dd)
        if not detail:
            return out
        info = dict(ref=ref, s=s, w_hat=w_hat, w_apply=w_apply, omega_sq=omega_sq, saturated=saturated)
        return out, info

    # -- integration -----------------------------------------------------

    def _stage(self, t, p0, R0, v0, w0, phi0, d0, dy, h):
        """Evaluate derivatives at ``y0 + h*dy``."""
        p = p0 + h * dy[0]
        th = h * dy[1]
        if not (np.all(np.isfinite(th)) and np.all(np.isfinite(dy[2])) and np.all(np.isfinite(dy[3]))):
            raise _Diverged("stage derivative left the finite range")
        v = v0 + h * dy[2]
        w = w0 + h * dy[3]
        phi = phi0 + h * dy[4]
        dh = d0 + h * dy[5]
        state = PayloadState.__new__(PayloadState)
        state.p, state.R, state.v, state.w = p, exp_so3(th) @ R0, v, w
        vdot, wdot, dphi, dd = self.evaluate(t, state, phi, dh)
        return [v, dexp_inv_so3(th, w), vdot, wdot, dphi, dd]

    def advance(self, t: float, k1):
        """One RK4 step of length dt from the current state; ``k1`` is the derivative at t."""
        cfg = self.cfg
        h = cfg.dt
        st = self.state
        p0, R0, v0, w0 = st.p, st.R, st.v, st.w
        phi0, d0 = self.phi, self.d_hat
        euler = cfg.estimator_integration == "euler"
        k1 = list(k1)
        adapt_phi, adapt_d = k1[4], k1[5]
        if euler:
            # Estimates held over the step, then one explicit Euler update.
            k1[4] = np.zeros_like(phi0)
            k1[5] = np.zeros_like(d0)
        k2 = self._stage(t + h / 2, p0, R0, v0, w0, phi0, d0, k1, h / 2)
        if euler:
            k2[4], k2[5] = k1[4], k1[5]
        k3 = self._stage(t + h / 2, p0, R0, v0, w0, phi0, d0, k2, h / 2)
        if euler:
            k3[4], k3[5] = k1[4], k1[5]
        k4 = self._stage(t + h, p0, R0, v0, w0, phi0, d0, k3, h)
        if euler:
            k4[4], k4[5] = k1[4], k1[5]
        inc = [(a + 2 * b + 2 * c + d) / 6.0 for a, b, c, d in zip(k1, k2, k3, k4)]
        p = p0 + h * inc[0]
        R = orthonormalize(exp_so3(h * inc[1]) @ R0)
        v = v0 + h * inc[2]
        w = w0 + h * inc[3]
        if euler:
            phi = phi0 + h * adapt_phi
            dh = d0 + h * adapt_d
        else:
            phi = phi0 + h * inc[4]
            dh = d0 + h * inc[5]
        if cfg.estimate_cap is not None:
            norms = np.linalg.norm(phi, axis=1, keepdims=True)
            phi = np.where(norms > cfg.estimate_cap, phi * cfg.estimate_cap / np.maximum(norms, 1e-300), phi)
        for x in (p, R, v, w, phi, dh):
            if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
                raise _Diverged("state or estimate left the finite range")
        new = PayloadState.__new__(PayloadState)
        new.p, new.R, new.v, new.w = p, R, v, w
        self.state = new
        self.phi, self.d_hat = phi, dh

    def lyapunov_now(self, s) -> float:
        """V of the current closed loop.

        With ``lyapunov_share="active"`` the sum runs over active agents and
        each parameter error is taken against ``phi / n_active``: the loop that
        remains after a failure is certified on its own, and the frozen error of
        a disabled agent leaves V.  ``"nominal"`` keeps all agents and ``1/n``.
        """
        cfg = self.cfg
        if cfg.lyapunov_share == "active" or cfg.gamma_rescale_on_failure:
            included, share = self.active, 1.0 / max(1, int(self.active.sum()))
        else:
            included, share = None, 1.0 / cfg.n
        return _lyapunov_arrays(
            s, self.state.R, self.phi, self.d_hat, cfg.payload, self._d_true,
            self._Gp_inv, self._Gd_inv, included, share,
        )

    def step(self, k: int, V_prev: Optional[float]):
        """Log the state at ``t_k`` and advance it to ``t_{k+1}``."""
        cfg = self.cfg
        t = k * cfg.dt
        self.apply_events(k)
        st = self.state
        (vdot, wdot, dphi, dd), info = self.evaluate(t, st, self.phi, self.d_hat, detail=True)
        k1 = [st.v, st.w, vdot, wdot, dphi, dd]
        ref = info["ref"]
        s = info["s"]
        V = self.lyapunov_now(s)
        rec = StepRecord(
            t=t,
            state=st,
            s=s,
            e_p=ref.p - st.p,
            rot_err=rotation_error_metric(ref.R.T @ st.R),
            phi=self.phi.copy(),
            d_hat=self.d_hat.copy(),
            w_hat=info["w_hat"],
            w_apply=info["w_apply"],
            active=self.active.copy(),
            omega_sq=info["omega_sq"],
            saturated=info["saturated"],
            V=V,
            dV=0.0 if V_prev is None else V - V_prev,
        )
        self.advance(t, k1)
        self.acc_prev = np.concatenate((vdot, wdot))
        return rec


def run(config: ScenarioConfig) -> SimLog:
    """Execute a scenario; deterministic for a given config."""
    sim = Simulator(config)
    out = SimLog(config=config, records=[])
    V_prev = None
    for k in range(config.n_steps):
        try:
            rec = sim.step(k, V_prev)
        except (_Diverged, DegenerateDynamicsError, np.linalg.LinAlgError, ArithmeticError) as exc:
            out.termination = "Diverged"
            out.diverged_at = k * config.dt
            out.reason = str(exc)
            log.warning("run diverged at t=%.6f: %s", out.diverged_at, exc)
            break
        out.records.append(rec)
        V_prev = rec.V
    out.final_state = sim.state
    out.final_estimators = sim.estimators
    return out
