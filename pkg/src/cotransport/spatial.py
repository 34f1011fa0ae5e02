"""SO(3) and vector utilities shared by the dynamics and control modules.

Conventions
-----------
- Rotation matrices map body coordinates to world coordinates.
- Quaternions are scalar-first Hamilton ``(w, x, y, z)``.
- Roll-pitch-yaw is the Z-Y-X intrinsic composition ``Rz(yaw) Ry(pitch) Rx(roll)``.
"""

from __future__ import annotations

import math

import numpy as np

ORTHO_TOL = 1e-9
GIMBAL_MARGIN = 1e-6


def skew(v) -> np.ndarray:
    """Hat map R^3 -> so(3), so that ``skew(v) @ u == np.cross(v, u)``."""
    x, y, z = np.asarray(v, dtype=float).tolist()
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def cross(a, b) -> np.ndarray:
    """Cross product of two 3-vectors (faster than ``np.cross`` at this size)."""
    # Python floats are much faster than numpy scalars for this arithmetic.
    a0, a1, a2 = np.asarray(a, dtype=float).tolist()
    b0, b1, b2 = np.asarray(b, dtype=float).tolist()
    return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])


def vee(S, tol: float = ORTHO_TOL) -> np.ndarray:
    """Inverse of :func:`skew`. Rejects matrices that are not skew-symmetric."""
    S = np.asarray(S, dtype=float)
    if S.shape != (3, 3):
        raise ValueError(f"vee expects a 3x3 matrix, got shape {S.shape}")
    if tol != np.inf and np.linalg.norm(S + S.T) > tol:
        raise ValueError("vee: matrix is not skew-symmetric")
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def is_rotation(R, tol: float = ORTHO_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return (
        np.max(np.abs(R.T @ R - np.eye(3))) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


def check_rotation(R, name: str = "R", tol: float = ORTHO_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol):
        raise ValueError(f"{name} is not a proper rotation matrix")
    return R


def orthonormalize(R) -> np.ndarray:
    """Project a near-rotation onto SO(3) (closest in Frobenius norm)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.linalg.det(U @ Vt)])
    return U @ D @ Vt


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rpy_to_rot(roll: float, pitch: float, yaw: float) -> np.ndarray:
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def rot_to_rpy(R) -> tuple[float, float, float]:
    """Inverse of :func:`rpy_to_rot`.

    Raises ``ValueError`` when pitch is within ``GIMBAL_MARGIN`` of +-pi/2,
    where roll and yaw are not separable.
    """
    R = np.asarray(R, dtype=float)
    pitch = math.asin(max(-1.0, min(1.0, -R[2, 0])))
    if abs(pitch) >= math.pi / 2 - GIMBAL_MARGIN:
        raise ValueError(f"rot_to_rpy: pitch {pitch:.9f} rad is at gimbal lock")
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return roll, pitch, yaw


def canonical_quat(q) -> np.ndarray:
    """Normalize and move to the w >= 0 hemisphere (ties: first nonzero > 0)."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise ValueError("quaternion has zero or non-finite norm")
    q = q / n
    for c in q:
        if abs(c) > 1e-15:
            return q if c > 0 else -q
    return q


def quat_to_rot(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (4,) or abs(np.linalg.norm(q) - 1.0) > ORTHO_TOL:
        raise ValueError("quat_to_rot expects a unit quaternion (w, x, y, z)")
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rot_to_quat(R) -> np.ndarray:
    # Shepperd's method: branch on the largest diagonal term for stability.
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > max(R[0, 0], R[1, 1], R[2, 2]):
        s = 2.0 * math.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] >= R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return canonical_quat(q)


def exp_so3(phi) -> np.ndarray:
    """Rodrigues formula for the rotation by the axis-angle vector ``phi``."""
    phi = np.asarray(phi, dtype=float)
    th2 = float(phi @ phi)
    K = skew(phi)
    if th2 < 1e-12:
        # Taylor coefficients; truncation error O(th^4).
        a = 1.0 - th2 / 6.0
        b = 0.5 - th2 / 24.0
    else:
        th = math.sqrt(th2)
        a = math.sin(th) / th
        b = (1.0 - math.cos(th)) / th2
    return np.eye(3) + a * K + b * (K @ K)


def dexp_inv_so3(phi, w) -> np.ndarray:
    """Apply the inverse left Jacobian of SO(3) at ``phi`` to ``w``.

    If ``R(t) = exp(phi(t)) R0`` and ``dR/dt = skew(w) R``, then
    ``dphi/dt = dexp_inv_so3(phi, w)``.
    """
    phi = np.asarray(phi, dtype=float)
    th2 = float(phi @ phi)
    pw = cross(phi, w)
    if th2 < 1e-8:
        c = 1.0 / 12.0 + th2 / 720.0
    else:
        th = math.sqrt(th2)
        c = (1.0 - 0.5 * th / math.tan(0.5 * th)) / th2
    return w - 0.5 * pw + c * cross(phi, pw)


def parallel_axis(J_cm, m: float, d) -> np.ndarray:
    """Inertia about a point displaced by ``d`` from the center of mass."""
    J_cm = np.asarray(J_cm, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.max(np.abs(J_cm - J_cm.T)) > ORTHO_TOL:
        raise ValueError("parallel_axis: J_cm is not symmetric")
    if m < 0:
        raise ValueError("parallel_axis: negative mass")
    return J_cm + m * ((d @ d) * np.eye(3) - np.outer(d, d))
