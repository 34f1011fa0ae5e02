import functools
import time

import numpy as np
import pytest

from dataclasses import replace

from cotransport.config import load_preset
from cotransport.controller import AgentEstimator
from cotransport.payload import PayloadParams, PayloadState
from cotransport.sim import Simulator, run
from cotransport.spatial import exp_so3


def random_rotation(rng) -> np.ndarray:
    return exp_so3(rng.uniform(-np.pi, np.pi) * _unit(rng))


def _unit(rng) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def random_spd(rng, scale=1.0) -> np.ndarray:
    A = rng.standard_normal((3, 3))
    return scale * (A @ A.T + 0.5 * np.eye(3))


def random_payload(rng) -> PayloadParams:
    return PayloadParams(rng.uniform(0.5, 10.0), random_spd(rng), rng.uniform(-1, 1, 3))


def random_state(rng) -> PayloadState:
    return PayloadState(rng.standard_normal(3), random_rotation(rng), rng.standard_normal(3), rng.standard_normal(3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


PRESET_RUNTIME = {}
ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def preset_run(name: str):
    """Full preset run with no overrides, cached for the whole session."""
    cfg, tree = load_preset(name)
    start = time.perf_counter()
    log = run(cfg)
    PRESET_RUNTIME[name] = time.perf_counter() - start
    return log, tree


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def near_reference(cfg, phi_scale=0.95, d_offset=0.01, p_offset=0.0):
    """``cfg`` started on its reference with estimates near the truth.

    From here the preset hexarotors stay inside their allocation range, so
    the rotor plant runs without saturation while adaptation is still active.
    """
    ref = Simulator(cfg).reference(0.0)
    init = tuple(AgentEstimator(phi_scale * cfg.payload.phi() / cfg.n, g.d + d_offset) for g in cfg.grasps)
    start = PayloadState(ref.p + p_offset, ref.R, ref.v, ref.w)
    return replace(cfg, estimator_init=init, initial_state=start)
