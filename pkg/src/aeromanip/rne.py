"""Recursive Newton-Euler engine for the arm hanging from a moving base.

One jitted two-pass recursion serves four consumers: the coupling wrench
the arm exerts on the quadcopter (force in the inertial frame, torque in
the body frame), the joint torques for the simulation plant, the arm
inertia matrix (unit-acceleration columns) and the bias vector for the
computed-torque controller.

The gravity trick is the usual one: the base "acceleration" fed into the
recursion is the proper acceleration (vdot_B - g e3, NED gravity points
along +e3), so gravity loads every link without extra terms, and the
published gravity correction is applied when converting the root force
into the coupling wrench.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import ArmModel

E3 = np.array([0.0, 0.0, 1.0])


@dataclass
class BaseMotion:
    """Base pose/twist/acceleration as the recursion consumes it."""

    R_B: np.ndarray  # body-to-inertial rotation (3,3)
    vdot_B: np.ndarray  # base linear acceleration, inertial frame (3,)
    omega_B: np.ndarray  # base angular velocity, body frame (3,)
    omegadot_B: np.ndarray  # base angular acceleration, body frame (3,)

    @classmethod
    def at_rest(cls) -> "BaseMotion":
        return cls(np.eye(3), np.zeros(3), np.zeros(3), np.zeros(3))


@dataclass
class Wrench:
    """Paired coupling force (inertial frame, N) and torque (body frame, N*m)."""

    force: np.ndarray
    torque: np.ndarray

    @classmethod
    def zero(cls) -> "Wrench":
        return cls(np.zeros(3), np.zeros(3))


_PACK_CACHE: dict = {}


def packed_params(arm: ArmModel):
    """(5,17) per-link constants + mount pose, cached per arm instance."""
    ent = _PACK_CACHE.get(id(arm))
    if ent is not None:
        ref, payload = ent
        if ref() is arm:
            return payload
    params = np.empty((5, 17))
    for i, link in enumerate(arm.links):
        params[i, 0] = link.alpha
        params[i, 1] = link.a
        params[i, 2] = link.d
        params[i, 3] = link.theta_offset
        params[i, 4] = link.mass
        params[i, 5:8] = link.com
        params[i, 8:17] = np.asarray(link.inertia, dtype=float).ravel()
    payload = (params, np.ascontiguousarray(arm.mount_rot), np.ascontiguousarray(arm.mount_pos))
    _PACK_CACHE[id(arm)] = (weakref.ref(arm), payload)
    return payload


# Tiny-vector helpers.  BLAS dispatch on 3x3 operands costs more than the
# arithmetic, so everything below is written out by hand and inlined.


@njit(inline="always")
def _cross_into(ax, ay, az, bx, by, bz, out, k):
    out[k + 0] = ay * bz - az * by
    out[k + 1] = az * bx - ax * bz
    out[k + 2] = ax * by - ay * bx


@njit(inline="always")
def _matvec(M, x, y, z, out, k):
    out[k + 0] = M[0, 0] * x + M[0, 1] * y + M[0, 2] * z
    out[k + 1] = M[1, 0] * x + M[1, 1] * y + M[1, 2] * z
    out[k + 2] = M[2, 0] * x + M[2, 1] * y + M[2, 2] * z


@njit(inline="always")
def _mattvec(M, x, y, z, out, k):
    out[k + 0] = M[0, 0] * x + M[1, 0] * y + M[2, 0] * z
    out[k + 1] = M[0, 1] * x + M[1, 1] * y + M[2, 1] * z
    out[k + 2] = M[0, 2] * x + M[1, 2] * y + M[2, 2] * z


@njit(cache=True)
def _rne_core(params, mount_R, mount_p, R_B, vdot_B, om_B, omdot_B, q, dq, ddq, g):
    """Two-pass recursion.  Returns (f_D, tau_D_body, tau_joints, f_stack, n_stack)."""
    # per-row rotations (frame i+1 coords -> frame i coords) and translations p_{i+1}^i
    Rots = np.empty((5, 3, 3))
    trans = np.empty((5, 3))
    for i in range(5):
        alpha = params[i, 0]
        a = params[i, 1]
        d = params[i, 2]
        th = q[i] + params[i, 3]
        ct, st = np.cos(th), np.sin(th)
        ca, sa = np.cos(alpha), np.sin(alpha)
        Rots[i, 0, 0] = ct
        Rots[i, 0, 1] = -st
        Rots[i, 0, 2] = 0.0
        Rots[i, 1, 0] = st * ca
        Rots[i, 1, 1] = ct * ca
        Rots[i, 1, 2] = -sa
        Rots[i, 2, 0] = st * sa
        Rots[i, 2, 1] = ct * sa
        Rots[i, 2, 2] = ca
        trans[i, 0] = a
        trans[i, 1] = -sa * d
        trans[i, 2] = ca * d

    buf = np.empty(18)  # w | wd | vd | t1 | t2 | t3

    # link 0: mount frame, proper acceleration of the mount point
    _mattvec(mount_R, om_B[0], om_B[1], om_B[2], buf, 0)
    _mattvec(mount_R, omdot_B[0], omdot_B[1], omdot_B[2], buf, 3)
    _mattvec(R_B, vdot_B[0], vdot_B[1], vdot_B[2] - g, buf, 9)  # t1 = R_B^T (vdot - g e3)
    _cross_into(omdot_B[0], omdot_B[1], omdot_B[2], mount_p[0], mount_p[1], mount_p[2], buf, 12)
    _cross_into(om_B[0], om_B[1], om_B[2], mount_p[0], mount_p[1], mount_p[2], buf, 15)
    _cross_into(om_B[0], om_B[1], om_B[2], buf[15], buf[16], buf[17], buf, 15)
    ax = buf[9] + buf[12] + buf[15]
    ay = buf[10] + buf[13] + buf[16]
    az = buf[11] + buf[14] + buf[17]
    _mattvec(mount_R, ax, ay, az, buf, 6)  # vd in mount frame

    ws = np.empty((5, 3))
    wds = np.empty((5, 3))
    vdcs = np.empty((5, 3))
    for i in range(5):
        R = Rots[i]
        # w' = R^T w + dq e3 ; wd' = R^T wd + ddq e3 + dq (R^T w) x e3
        _mattvec(R, buf[0], buf[1], buf[2], buf, 9)  # t1 = R^T w
        _mattvec(R, buf[3], buf[4], buf[5], buf, 12)  # t2 = R^T wd
        wx, wy, wz = buf[9], buf[10], buf[11]
        wdx = buf[12] + dq[i] * wy  # (R^T w) x e3 = (wy, -wx, 0)
        wdy = buf[13] - dq[i] * wx
        wdz = buf[14] + ddq[i]
        # vd' = R^T (vd + wd x p + w x (w x p))
        _cross_into(buf[3], buf[4], buf[5], trans[i, 0], trans[i, 1], trans[i, 2], buf, 12)
        _cross_into(buf[0], buf[1], buf[2], trans[i, 0], trans[i, 1], trans[i, 2], buf, 15)
        _cross_into(buf[0], buf[1], buf[2], buf[15], buf[16], buf[17], buf, 15)
        vx = buf[6] + buf[12] + buf[15]
        vy = buf[7] + buf[13] + buf[16]
        vz = buf[8] + buf[14] + buf[17]
        _mattvec(R, vx, vy, vz, buf, 6)  # vd'
        wz = wz + dq[i]
        buf[0], buf[1], buf[2] = wx, wy, wz
        buf[3], buf[4], buf[5] = wdx, wdy, wdz
        ws[i, 0], ws[i, 1], ws[i, 2] = wx, wy, wz
        wds[i, 0], wds[i, 1], wds[i, 2] = wdx, wdy, wdz
        # CoM acceleration: vd' + wd' x c + w' x (w' x c)
        cx, cy, cz = params[i, 5], params[i, 6], params[i, 7]
        _cross_into(wdx, wdy, wdz, cx, cy, cz, buf, 12)
        _cross_into(wx, wy, wz, cx, cy, cz, buf, 15)
        _cross_into(wx, wy, wz, buf[15], buf[16], buf[17], buf, 15)
        vdcs[i, 0] = buf[6] + buf[12] + buf[15]
        vdcs[i, 1] = buf[7] + buf[13] + buf[16]
        vdcs[i, 2] = buf[8] + buf[14] + buf[17]

    f_stack = np.empty((5, 3))
    n_stack = np.empty((5, 3))
    tau = np.empty(5)
    fnx = fny = fnz = 0.0
    nnx = nny = nnz = 0.0
    for i in range(4, -1, -1):
        m = params[i, 4]
        cx, cy, cz = params[i, 5], params[i, 6], params[i, 7]
        zx = m * vdcs[i, 0]
        zy = m * vdcs[i, 1]
        zz = m * vdcs[i, 2]
        # chi = I wd + w x (I w)
        i00, i01, i02 = params[i, 8], params[i, 9], params[i, 10]
        i10, i11, i12 = params[i, 11], params[i, 12], params[i, 13]
        i20, i21, i22 = params[i, 14], params[i, 15], params[i, 16]
        wx, wy, wz = ws[i, 0], ws[i, 1], ws[i, 2]
        wdx, wdy, wdz = wds[i, 0], wds[i, 1], wds[i, 2]
        iwx = i00 * wx + i01 * wy + i02 * wz
        iwy = i10 * wx + i11 * wy + i12 * wz
        iwz = i20 * wx + i21 * wy + i22 * wz
        chix = i00 * wdx + i01 * wdy + i02 * wdz + wy * iwz - wz * iwy
        chiy = i10 * wdx + i11 * wdy + i12 * wdz + wz * iwx - wx * iwz
        chiz = i20 * wdx + i21 * wdy + i22 * wdz + wx * iwy - wy * iwx
        if i < 4:
            R = Rots[i + 1]
            _matvec(R, fnx, fny, fnz, buf, 9)  # t1 = R f_next
            _matvec(R, nnx, nny, nnz, buf, 12)  # t2 = R n_next
            px, py, pz = trans[i + 1, 0], trans[i + 1, 1], trans[i + 1, 2]
            _cross_into(px, py, pz, buf[9], buf[10], buf[11], buf, 15)
        else:
            buf[9:18] = 0.0
        fx = zx + buf[9]
        fy = zy + buf[10]
        fz = zz + buf[11]
        nx = chix + buf[12] + (cy * zz - cz * zy) + buf[15]
        ny = chiy + buf[13] + (cz * zx - cx * zz) + buf[16]
        nz = chiz + buf[14] + (cx * zy - cy * zx) + buf[17]
        f_stack[i, 0], f_stack[i, 1], f_stack[i, 2] = fx, fy, fz
        n_stack[i, 0], n_stack[i, 1], n_stack[i, 2] = nx, ny, nz
        tau[i] = nz
        fnx, fny, fnz = fx, fy, fz
        nnx, nny, nnz = nx, ny, nz

    # coupling wrench on the quadcopter
    m_arm = params[0, 4] + params[1, 4] + params[2, 4] + params[3, 4] + params[4, 4]
    f_D = np.empty(3)
    tau_D = np.empty(3)
    _matvec(Rots[0], fnx, fny, fnz, buf, 9)  # f1 in mount frame
    _matvec(mount_R, buf[9], buf[10], buf[11], buf, 12)  # f1 in body frame
    _matvec(R_B, buf[12], buf[13], buf[14], buf, 15)  # f1 in inertial frame
    f_D[0] = -buf[15]
    f_D[1] = -buf[16]
    f_D[2] = -buf[17] - m_arm * g
    _matvec(Rots[0], nnx, nny, nnz, buf, 9)
    _matvec(mount_R, buf[9], buf[10], buf[11], buf, 9)  # n1 in body frame
    _cross_into(mount_p[0], mount_p[1], mount_p[2], buf[12], buf[13], buf[14], buf, 15)
    tau_D[0] = -buf[15] - buf[9]
    tau_D[1] = -buf[16] - buf[10]
    tau_D[2] = -buf[17] - buf[11]
    return f_D, tau_D, tau, f_stack, n_stack


def rne_coupling(arm: ArmModel, base: BaseMotion, q, dq, ddq, gravity: float = 9.81) -> Wrench:
    """Coupling wrench the arm exerts on the base (force inertial, torque body)."""
    params, mR, mp = packed_params(arm)
    f_D, tau_D, _, _, _ = _rne_core(
        params,
        mR,
        mp,
        np.ascontiguousarray(base.R_B),
        np.asarray(base.vdot_B, dtype=float),
        np.asarray(base.omega_B, dtype=float),
        np.asarray(base.omegadot_B, dtype=float),
        np.asarray(q, dtype=float),
        np.asarray(dq, dtype=float),
        np.asarray(ddq, dtype=float),
        float(gravity),
    )
    return Wrench(force=f_D, torque=tau_D)


def rne_joint_torques(arm: ArmModel, base: BaseMotion, q, dq, ddq, gravity: float = 9.81) -> np.ndarray:
    """Joint torques realizing ddq given the base motion (inverse dynamics)."""
    params, mR, mp = packed_params(arm)
    _, _, tau, _, _ = _rne_core(
        params,
        mR,
        mp,
        np.ascontiguousarray(base.R_B),
        np.asarray(base.vdot_B, dtype=float),
        np.asarray(base.omega_B, dtype=float),
        np.asarray(base.omegadot_B, dtype=float),
        np.asarray(q, dtype=float),
        np.asarray(dq, dtype=float),
        np.asarray(ddq, dtype=float),
        float(gravity),
    )
    return tau


def rne_link_wrenches(arm: ArmModel, base: BaseMotion, q, dq, ddq, gravity: float = 9.81):
    """Per-link internal force/torque stacks (link frames), for debugging dumps."""
    params, mR, mp = packed_params(arm)
    _, _, _, f_stack, n_stack = _rne_core(
        params,
        mR,
        mp,
        np.ascontiguousarray(base.R_B),
        np.asarray(base.vdot_B, dtype=float),
        np.asarray(base.omega_B, dtype=float),
        np.asarray(base.omegadot_B, dtype=float),
        np.asarray(q, dtype=float),
        np.asarray(dq, dtype=float),
        np.asarray(ddq, dtype=float),
        float(gravity),
    )
    return f_stack, n_stack


@njit(cache=True)
def _mass_matrix_core(params, mR, mp, q):
    eye3 = np.eye(3)
    z3 = np.zeros(3)
    z5 = np.zeros(5)
    M = np.empty((5, 5))
    for j in range(5):
        ddq = np.zeros(5)
        ddq[j] = 1.0
        _, _, tau, _, _ = _rne_core(params, mR, mp, eye3, z3, z3, z3, q, z5, ddq, 0.0)
        for i in range(5):
            M[i, j] = tau[i]
    return M


def arm_inertia_matrix(arm: ArmModel, q) -> np.ndarray:
    """Joint-space inertia matrix via unit-acceleration columns (gravity off,
    zero rates, base at rest)."""
    params, mR, mp = packed_params(arm)
    return _mass_matrix_core(params, mR, mp, np.asarray(q, dtype=float))


def arm_bias(arm: ArmModel, base: BaseMotion, q, dq, gravity: float = 9.81) -> np.ndarray:
    """Bias torques C (centrifugal + Coriolis + gravity + base-motion terms):
    inverse dynamics with ddq = 0."""
    return rne_joint_torques(arm, base, q, dq, np.zeros(5), gravity)
