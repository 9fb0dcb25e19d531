"""Rotation and frame algebra shared by every other module.

Conventions, fixed once for the whole codebase:

* Active rotations, column vectors, NED inertial frame with e3 = [0, 0, 1]
  pointing down; gravity is +g*e3.
* End-effector attitude (alpha, beta, gamma) composes as
  R = Rx(alpha) @ Ry(beta) @ Rz(gamma).
* Base attitude (phi, theta, psi) composes as
  R = Rz(psi) @ Ry(theta) @ Rx(phi),
  which is the convention the Euler-rate map Q (body rates from angle
  rates) belongs to; the two have to match or the attitude kinematics
  would not integrate consistently.
"""

from __future__ import annotations

import numpy as np

from .errors import GimbalSingularity

GIMBAL_TOL = 1e-6


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_from_euler(angles) -> np.ndarray:
    """Rotation from X-Y-Z Euler angles: Rx(a) @ Ry(b) @ Rz(c).

    This is the end-effector convention (alpha, beta, gamma).
    """
    a, b, c = angles
    return rot_x(a) @ rot_y(b) @ rot_z(c)


def euler_from_rot(R: np.ndarray) -> np.ndarray:
    """X-Y-Z Euler angles (alpha, beta, gamma) of R, beta in (-pi/2, pi/2)."""
    beta = np.arcsin(np.clip(R[0, 2], -1.0, 1.0))
    alpha = np.arctan2(-R[1, 2], R[2, 2])
    gamma = np.arctan2(-R[0, 1], R[0, 0])
    return np.array([alpha, beta, gamma])


def rot_from_rpy(angles) -> np.ndarray:
    """Rotation from roll-pitch-yaw: Rz(psi) @ Ry(theta) @ Rx(phi).

    This is the quadcopter-base convention (phi, theta, psi).
    """
    phi, theta, psi = angles
    return rot_z(psi) @ rot_y(theta) @ rot_x(phi)


def rpy_from_rot(R: np.ndarray) -> np.ndarray:
    """Roll-pitch-yaw (phi, theta, psi) of R, theta in (-pi/2, pi/2)."""
    theta = -np.arcsin(np.clip(R[2, 0], -1.0, 1.0))
    phi = np.arctan2(R[2, 1], R[2, 2])
    psi = np.arctan2(R[1, 0], R[0, 0])
    return np.array([phi, theta, psi])


def euler_rate_matrix(angles) -> np.ndarray:
    """Map Q from base Euler-angle rates to body angular velocity.

    omega_body = Q @ d/dt[phi, theta, psi].
    """
    phi, theta = angles[0], angles[1]
    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [1.0, 0.0, -sth],
            [0.0, cphi, cth * sphi],
            [0.0, -sphi, cth * cphi],
        ]
    )


def euler_rate_matrix_inv(angles) -> np.ndarray:
    """Inverse of the Euler-rate map; errors near the theta = +-pi/2 singularity."""
    theta = angles[1]
    if abs(np.cos(theta)) < GIMBAL_TOL:
        raise GimbalSingularity(f"|cos(theta)| < {GIMBAL_TOL:g} at theta={theta:.6f}")
    return np.linalg.inv(euler_rate_matrix(angles))


def skew(v) -> np.ndarray:
    """Skew-symmetric matrix [v]_x with [v]_x @ w = v x w."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_from_axis_angle(v) -> np.ndarray:
    """Rotation matrix exp([v]_x) for a rotation-vector v (Rodrigues)."""
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        return np.eye(3) + skew(v)
    axis = v / angle
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rotation_error_vector(E: np.ndarray) -> np.ndarray:
    """Axis-angle (matrix-log) vector of a rotation-error matrix E.

    Returns theta * axis with theta in [0, pi]; zero iff E is the identity.
    Near theta = pi the axis comes from the diagonal (the skew part vanishes).
    """
    tr = np.trace(E)
    c = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(c)
    if angle < 1e-10:
        # first-order: log(E) ~ skew part
        return 0.5 * np.array([E[2, 1] - E[1, 2], E[0, 2] - E[2, 0], E[1, 0] - E[0, 1]])
    if np.pi - angle > 1e-6:
        axis = np.array([E[2, 1] - E[1, 2], E[0, 2] - E[2, 0], E[1, 0] - E[0, 1]])
        axis /= 2.0 * np.sin(angle)
        return angle * axis
    # angle ~ pi: (E + I)/2 ~ axis axis^T, so any strong column is the axis
    A = (E + np.eye(3)) / 2.0
    k = int(np.argmax(np.diag(A)))
    axis = A[:, k] / np.sqrt(A[k, k])
    axis /= np.linalg.norm(axis)
    return angle * axis


def assert_rotation(R: np.ndarray, tol: float = 1e-10) -> None:
    """Raise ValueError unless R is orthonormal with determinant +1."""
    R = np.asarray(R)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got shape {R.shape}")
    err = np.max(np.abs(R.T @ R - np.eye(3)))
    if err > tol:
        raise ValueError(f"matrix is not orthonormal (max |R^T R - I| = {err:.3e})")
    d = np.linalg.det(R)
    if abs(d - 1.0) > tol:
        raise ValueError(f"matrix has det {d:.12f}, expected +1")
