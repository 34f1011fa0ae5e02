"""Grasp map between an agent's applied wrench and the wrench about P_s."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .spatial import check_rotation, cross, skew

log = logging.getLogger(__name__)

GRASP_FORMS = ("paper", "conventional")


@dataclass(frozen=True)
class GraspGeometry:
    """Per-agent grasp description.

    ``d`` runs from the grasp point to P_s and ``l_g`` is the gripper offset,
    both in the payload body frame.  ``R_gripper`` orients the gripper frame
    in the vehicle frame.
    """

    d: np.ndarray
    l_g: np.ndarray
    R_gripper: np.ndarray = field(default_factory=lambda: np.eye(3))
    lever_body: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("d", "l_g"):
            x = np.asarray(getattr(self, name), dtype=float)
            if x.shape != (3,) or not np.all(np.isfinite(x)):
                raise ValueError(f"grasp {name} must be a finite 3-vector [m]")
            object.__setattr__(self, name, x)
        object.__setattr__(self, "R_gripper", check_rotation(self.R_gripper, "gripper rotation"))
        # Gripper offset in the payload body frame; world lever is R_B @ lever_body.
        object.__setattr__(self, "lever_body", self.R_gripper @ self.l_g)


def coupling_block(R_B, R_E, d, l_g, form: str = "paper") -> np.ndarray:
    if form == "paper":
        return skew(R_B @ d) @ skew(R_E @ l_g)
    if form == "conventional":
        return skew(R_B @ d + R_E @ l_g)
    raise ValueError(f"unknown grasp_map_form {form!r}; expected one of {GRASP_FORMS}")


def coupling_apply(r_d, lever, f, form: str = "paper") -> np.ndarray:
    """``coupling_block(...) @ f`` from world vectors ``r_d = R_B d`` and ``lever = R_E l_g``."""
    if form == "paper":
        return cross(r_d, cross(lever, f))
    if form == "conventional":
        return cross(r_d + lever, f)
    raise ValueError(f"unknown grasp_map_form {form!r}; expected one of {GRASP_FORMS}")


def grasp_map(R_B, R_E, d, l_g, form: str = "paper") -> np.ndarray:
    """6x6 unit lower-block-triangular grasp map ``[[I, 0], [B, I]]``."""
    G = np.eye(6)
    G[3:, :3] = coupling_block(R_B, R_E, np.asarray(d, float), np.asarray(l_g, float), form)
    return G


def invert_grasp_map(G, tol: float = 1e-12) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    I3 = np.eye(3)
    if (
        G.shape != (6, 6)
        or np.max(np.abs(G[:3, :3] - I3)) > tol
        or np.max(np.abs(G[3:, 3:] - I3)) > tol
        or np.max(np.abs(G[:3, 3:])) > tol
    ):
        raise ValueError("invert_grasp_map: G is not of the form [[I, 0], [B, I]]")
    Gi = np.eye(6)
    Gi[3:, :3] = -G[3:, :3]
    return Gi


def aggregate_wrench(contributions) -> np.ndarray:
    """Sum ``G_i @ w_i`` over agents in list order."""
    total = np.zeros(6)
    n = 0
    for G, w in contributions:
        total = total + G @ np.asarray(w, dtype=float)
        n += 1
    if n == 0:
        log.warning("aggregate_wrench: no contributing agents, total wrench is zero")
    return total
