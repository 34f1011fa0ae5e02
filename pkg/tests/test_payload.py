import numpy as np
import pytest

from conftest import random_payload, random_rotation, random_state
from cotransport.payload import (
    DegenerateDynamicsError,
    GravityMode,
    PayloadParams,
    PayloadState,
    coriolis_matrix,
    forward_dynamics,
    gravity_wrench,
    inertia_matrix,
    kinetic_energy,
    pack_sym,
    unpack_sym,
)
from cotransport.spatial import exp_so3, parallel_axis, skew

PRESET = PayloadParams(5.0, np.diag([1.4255, 1.4255, 0.8411]), np.array([0.74, 0.01, -0.2]))


def test_param_validation_names_field():
    with pytest.raises(ValueError, match="payload.mass"):
        PayloadParams(-1.0, np.eye(3), np.zeros(3))
    with pytest.raises(ValueError, match="positive definite"):
        PayloadParams(1.0, np.diag([1.0, -1.0, 1.0]), np.zeros(3))


def test_pack_unpack():
    J = np.array([[1.0, 0.1, 0.2], [0.1, 2.0, 0.3], [0.2, 0.3, 3.0]])
    assert np.array_equal(unpack_sym(pack_sym(J)), J)


def test_inertia_matrix_zero_offset():
    J = np.diag([1.0, 2.0, 3.0])
    M = inertia_matrix(PayloadParams(2.0, J, np.zeros(3)), np.eye(3))
    expected = np.zeros((6, 6))
    expected[:3, :3] = 2.0 * np.eye(3)
    expected[3:, 3:] = J
    assert np.array_equal(M, expected)


def test_inertia_matrix_preset_values():
    M = inertia_matrix(PRESET, np.eye(3))
    S = skew(PRESET.com_offset)
    assert np.allclose(M[:3, 3:], -5.0 * S)
    assert np.allclose(M[3:, :3], 5.0 * S)
    assert np.allclose(M[3:, 3:], parallel_axis(PRESET.inertia_cm, 5.0, PRESET.com_offset))


def test_inertia_matrix_symmetric_pd(rng):
    for _ in range(100):
        params = random_payload(rng)
        M = inertia_matrix(params, random_rotation(rng))
        assert np.max(np.abs(M - M.T)) <= 1e-12
        assert np.linalg.eigvalsh(M).min() > 0


def test_kinetic_energy_matches_point_masses(rng):
    # Oracle: sum of 1/2 m |v_k|^2 over a point cloud moving rigidly.
    pts = rng.standard_normal((300, 3))
    masses = rng.uniform(0.1, 1.0, 300)
    m = masses.sum()
    com = masses @ pts / m
    J_cm = sum(mk * ((r @ r) * np.eye(3) - np.outer(r, r)) for mk, r in zip(masses, pts - com))
    params = PayloadParams(m, J_cm, com)  # P_s at the body origin
    st = random_state(rng)
    world = (st.R @ pts.T).T
    vel = st.v + np.cross(st.w, world)
    assert np.isclose(kinetic_energy(params, st), 0.5 * np.sum(masses * np.sum(vel**2, axis=1)), rtol=1e-10)


def test_coriolis_examples(rng):
    params = random_payload(rng)
    R = random_rotation(rng)
    assert np.array_equal(coriolis_matrix(params, R, np.zeros(3), np.zeros(3)), np.zeros((6, 6)))
    p0 = PayloadParams(2.0, np.diag([1.0, 2.0, 3.0]), np.zeros(3))
    w, v = rng.standard_normal(3), rng.standard_normal(3)
    C = coriolis_matrix(p0, R, w, v)
    expected = np.zeros((6, 6))
    expected[3:, 3:] = skew(w) @ R @ p0.inertia_cm @ R.T
    assert np.allclose(C, expected)


def test_skew_symmetry_certificate(rng):
    h = 1e-6
    for _ in range(100):
        params = random_payload(rng)
        st = random_state(rng)
        Mp = inertia_matrix(params, exp_so3(h * st.w) @ st.R)
        Mm = inertia_matrix(params, exp_so3(-h * st.w) @ st.R)
        Mdot = (Mp - Mm) / (2 * h)
        N = Mdot - 2 * coriolis_matrix(params, st.R, st.w, st.v)
        x = rng.standard_normal(6)
        assert abs(x @ N @ x) <= 1e-5


def test_gravity_examples():
    R = random_rotation(np.random.default_rng(3))
    assert np.array_equal(gravity_wrench(PRESET, R, GravityMode.ZERO), np.zeros(6))
    g = gravity_wrench(PayloadParams(5.0, np.eye(3), np.zeros(3)), np.eye(3), GravityMode.EARTH)
    assert np.allclose(g, [0, 0, 49.05, 0, 0, 0])
    g = gravity_wrench(PRESET, np.eye(3), GravityMode.EARTH)
    d = PRESET.com_offset
    weight = np.array([0.0, 0.0, -49.05])
    hand = -np.array([d[1] * weight[2] - d[2] * weight[1], d[2] * weight[0] - d[0] * weight[2], 0.0])
    assert np.allclose(g[3:], hand)


def test_forward_dynamics_equilibrium(rng):
    for mode in GravityMode:
        st = PayloadState(np.zeros(3), random_rotation(rng), np.zeros(3), np.zeros(3))
        vdot, wdot = forward_dynamics(PRESET, st, gravity_wrench(PRESET, st.R, mode), mode)
        assert np.allclose(vdot, 0, atol=1e-12) and np.allclose(wdot, 0, atol=1e-12)


def test_forward_dynamics_point_mass(rng):
    params = PayloadParams(2.0, np.eye(3), np.zeros(3))
    st = PayloadState(np.zeros(3), random_rotation(rng), rng.standard_normal(3), np.zeros(3))
    f = np.array([1.0, -2.0, 4.0])
    vdot, wdot = forward_dynamics(params, st, np.r_[f, 0, 0, 0], GravityMode.ZERO)
    assert np.allclose(vdot, f / 2.0) and np.allclose(wdot, 0)


def test_forward_dynamics_residual(rng):
    for _ in range(200):
        params = random_payload(rng)
        st = random_state(rng)
        mode = GravityMode.EARTH if rng.random() < 0.5 else GravityMode.ZERO
        w = 10 * rng.standard_normal(6)
        qdd = np.concatenate(forward_dynamics(params, st, w, mode))
        lhs = (
            inertia_matrix(params, st.R) @ qdd
            + coriolis_matrix(params, st.R, st.w, st.v) @ st.qdot
            + gravity_wrench(params, st.R, mode)
        )
        assert np.linalg.norm(lhs - w) <= 1e-9


def test_forward_dynamics_frame_covariance(rng):
    Q = random_rotation(rng)
    for _ in range(20):
        params = random_payload(rng)
        st = random_state(rng)
        w = rng.standard_normal(6)
        vdot, wdot = forward_dynamics(params, st, w, GravityMode.ZERO)
        rot = PayloadState(Q @ st.p, Q @ st.R, Q @ st.v, Q @ st.w)
        vdot2, wdot2 = forward_dynamics(params, rot, np.r_[Q @ w[:3], Q @ w[3:]], GravityMode.ZERO)
        assert np.allclose(vdot2, Q @ vdot, atol=1e-10)
        assert np.allclose(wdot2, Q @ wdot, atol=1e-10)


def test_degenerate_payload_rejected():
    params = PayloadParams(1e-14, np.eye(3), np.zeros(3))
    st = PayloadState(np.zeros(3), np.eye(3), np.zeros(3), np.zeros(3))
    with pytest.raises(DegenerateDynamicsError):
        forward_dynamics(params, st, np.zeros(6), GravityMode.ZERO)


def test_energy_conserved_free_flight():
    # Every agent is disabled at t = 0, so the payload tumbles freely under
    # the simulator's own integrator.
    from dataclasses import replace

    from cotransport.config import load_preset
    from cotransport.sim import Event, run

    cfg, _ = load_preset("space", [("events", []), ("sim.duration", 2.0)])
    st0 = PayloadState(np.zeros(3), np.eye(3), np.array([0.2, -0.1, 0.05]), np.array([0.3, 1.1, -0.7]))
    cfg = replace(cfg, initial_state=st0, events=tuple(Event("disable_agent", i, 0.0) for i in range(cfg.n)))
    log = run(cfg)
    E = np.array([kinetic_energy(cfg.payload, r.state) for r in log.records])
    drift = np.max(np.abs(E - E[0])) / E[0]
    assert drift <= 1e-6 * 2.0
