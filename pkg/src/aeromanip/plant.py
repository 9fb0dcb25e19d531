"""Ground-truth simulation of the coupled quadcopter + arm system.

The base translational/rotational equations and the arm joint equations
share the unknown accelerations (vdot_B, omegadot_B, qddot): the coupling
wrench and the joint torques both depend on them through the rigid-body
recursion.  Because the recursion is affine in accelerations, the plant
assembles the exact 11x11 linear system by probing the recursion with
unit accelerations and solves it directly each evaluation; the residual
of the coupled equations at the solution is at solver precision (~1e-12),
which keeps the energy balance exact up to integrator error.

Base equations (inertial force balance for the quadcopter alone, with the
arm reaction expressed through the coupling wrench):

    m_B vdot_B = -f R_B e3 + m_S g e3 + f_D + f_ext
    I_B omegadot_B = tau_B + tau_D^B + tau_ext - omega x I_B omega
    tau_rne(q, qdot, qddot; base motion) = tau_M

Integration is fixed-step RK4 with commands and disturbances held over
the step (the controllers run at the step rate anyway).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import GimbalProximity
from .model import SystemModel
from .rne import BaseMotion, Wrench, _rne_core, packed_params

GIMBAL_MARGIN = 1e-3


@dataclass
class FullState:
    """Simulation truth: base pose/twist plus joint positions/rates."""

    t: float
    p_B: np.ndarray  # inertial position (3,)
    v_B: np.ndarray  # inertial velocity (3,)
    att: np.ndarray  # base attitude (phi, theta, psi)
    omega_B: np.ndarray  # body angular velocity (3,)
    q: np.ndarray  # joint angles (5,)
    dq: np.ndarray  # joint rates (5,)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.p_B, self.v_B, self.att, self.omega_B, self.q, self.dq])

    @classmethod
    def unpack(cls, t: float, y: np.ndarray) -> "FullState":
        return cls(
            t=t,
            p_B=y[0:3].copy(),
            v_B=y[3:6].copy(),
            att=y[6:9].copy(),
            omega_B=y[9:12].copy(),
            q=y[12:17].copy(),
            dq=y[17:22].copy(),
        )


@dataclass
class ActuatorCommand:
    f: float  # total thrust (N), >= 0
    tau_B: np.ndarray  # base torque, body frame (3,)
    tau_M: np.ndarray  # joint torques (5,)

    def __post_init__(self):
        if self.f < 0.0:
            raise ValueError(f"thrust must be nonnegative, got {self.f}")

    @classmethod
    def zero(cls) -> "ActuatorCommand":
        return cls(0.0, np.zeros(3), np.zeros(5))


@dataclass
class Derivative:
    """State derivative plus the solved accelerations and coupling wrench."""

    ydot: np.ndarray  # (22,)
    vdot_B: np.ndarray
    omegadot_B: np.ndarray
    ddq: np.ndarray
    coupling: Wrench
    residual: float


@njit(cache=True)
def _rpy_to_R(att):
    phi, theta, psi = att[0], att[1], att[2]
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    R = np.empty((3, 3))
    R[0, 0] = cp * ct
    R[0, 1] = cp * st * sf - sp * cf
    R[0, 2] = cp * st * cf + sp * sf
    R[1, 0] = sp * ct
    R[1, 1] = sp * st * sf + cp * cf
    R[1, 2] = sp * st * cf - cp * sf
    R[2, 0] = -st
    R[2, 1] = ct * sf
    R[2, 2] = ct * cf
    return R


@njit(cache=True)
def _euler_rate_Q(att):
    phi, theta = att[0], att[1]
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    Q = np.empty((3, 3))
    Q[0, 0] = 1.0
    Q[0, 1] = 0.0
    Q[0, 2] = -st
    Q[1, 0] = 0.0
    Q[1, 1] = cf
    Q[1, 2] = ct * sf
    Q[2, 0] = 0.0
    Q[2, 1] = -sf
    Q[2, 2] = ct * cf
    return Q


@njit(cache=True)
def _solve_accel(params, mR, mp, y, mB, mS, IB, g, f, tauB, tauM, f_ext, tau_ext):
    """Solve the coupled accelerations at state y.  Returns (x, f_D, tau_D, resid)."""
    v = y[3:6]
    att = y[6:9]
    om = y[9:12]
    q = y[12:17]
    dq = y[17:22]
    R_B = _rpy_to_R(att)
    e3 = np.array([0.0, 0.0, 1.0])
    thrust_w = -f * (R_B @ e3)
    rhs1 = thrust_w + mS * g * e3 + f_ext
    gyro = np.empty(3)
    Iom = IB @ om
    gyro[0] = om[1] * Iom[2] - om[2] * Iom[1]
    gyro[1] = om[2] * Iom[0] - om[0] * Iom[2]
    gyro[2] = om[0] * Iom[1] - om[1] * Iom[0]
    rhs2 = tauB + tau_ext - gyro

    z3 = np.zeros(3)
    z5 = np.zeros(5)
    r0 = np.empty(11)
    rj = np.empty(11)
    f_D, tau_D, tau, _, _ = _rne_core(params, mR, mp, R_B, z3, om, z3, q, dq, z5, g)
    r0[0:3] = -f_D - rhs1
    r0[3:6] = -tau_D - rhs2
    r0[6:11] = tau - tauM
    A = np.empty((11, 11))
    for j in range(11):
        vd = np.zeros(3)
        omd = np.zeros(3)
        ddq = np.zeros(5)
        if j < 3:
            vd[j] = 1.0
        elif j < 6:
            omd[j - 3] = 1.0
        else:
            ddq[j - 6] = 1.0
        f_D, tau_D, tau, _, _ = _rne_core(params, mR, mp, R_B, vd, om, omd, q, dq, ddq, g)
        rj[0:3] = mB * vd - f_D - rhs1
        rj[3:6] = IB @ omd - tau_D - rhs2
        rj[6:11] = tau - tauM
        for k in range(11):
            A[k, j] = rj[k] - r0[k]
    x = np.linalg.solve(A, -r0)
    f_D, tau_D, tau, _, _ = _rne_core(params, mR, mp, R_B, x[0:3], om, x[3:6], q, dq, x[6:11], g)
    r = np.empty(11)
    r[0:3] = mB * x[0:3] - f_D - rhs1
    r[3:6] = IB @ x[3:6] - tau_D - rhs2
    r[6:11] = tau - tauM
    resid = 0.0
    for k in range(11):
        if abs(r[k]) > resid:
            resid = abs(r[k])
    return x, f_D, tau_D, resid


@njit(cache=True)
def _ydot(params, mR, mp, y, mB, mS, IB, g, f, tauB, tauM, f_ext, tau_ext):
    x, f_D, tau_D, resid = _solve_accel(params, mR, mp, y, mB, mS, IB, g, f, tauB, tauM, f_ext, tau_ext)
    yd = np.empty(22)
    yd[0:3] = y[3:6]
    yd[3:6] = x[0:3]
    Q = _euler_rate_Q(y[6:9])
    yd[6:9] = np.linalg.solve(Q, y[9:12].copy())
    yd[9:12] = x[3:6]
    yd[12:17] = y[17:22]
    yd[17:22] = x[6:11]
    return yd, x, f_D, tau_D, resid


@njit(cache=True)
def _rk4(params, mR, mp, y, dt, mB, mS, IB, g, f, tauB, tauM, f_ext, tau_ext):
    """One RK4 step with held commands.  Returns (y_next, stage-1 accel info, status)."""
    status = 0
    half_pi = np.pi / 2.0
    k1, x1, fD1, tauD1, resid1 = _ydot(params, mR, mp, y, mB, mS, IB, g, f, tauB, tauM, f_ext, tau_ext)
    y2 = y + 0.5 * dt * k1
    if abs(y2[7]) > half_pi - GIMBAL_MARGIN:
        status = 1
    k2, _, _, _, _ = _ydot(params, mR, mp, y2, mB, mS, IB, g, f, tauB, tauM, f_ext, tau_ext)
    y3 = y + 0.5 * dt * k2
    if abs(y3[7]) > half_pi - GIMBAL_MARGIN:
        status = 1
    k3, _, _, _, _ = _ydot(params, mR, mp, y3, mB, mS, IB, g, f, tauB, tauM, f_ext, tau_ext)
    y4 = y + dt * k3
    if abs(y4[7]) > half_pi - GIMBAL_MARGIN:
        status = 1
    k4, _, _, _, _ = _ydot(params, mR, mp, y4, mB, mS, IB, g, f, tauB, tauM, f_ext, tau_ext)
    y_next = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if abs(y_next[7]) > half_pi - GIMBAL_MARGIN:
        status = 1
    return y_next, x1, fD1, tauD1, resid1, status


def _quad_consts(model: SystemModel):
    return (
        float(model.quad.mass),
        float(model.m_total),
        np.ascontiguousarray(model.quad.inertia),
        float(model.quad.gravity),
    )


def derivative(state: FullState, cmd: ActuatorCommand, dist: Wrench, model: SystemModel) -> Derivative:
    """Time derivative of the full state under held commands and disturbance."""
    if abs(state.att[1]) > np.pi / 2.0 - GIMBAL_MARGIN:
        raise GimbalProximity(f"pitch {state.att[1]:.4f} rad too close to +-pi/2")
    params, mR, mp = packed_params(model.arm)
    mB, mS, IB, g = _quad_consts(model)
    y = state.pack()
    yd, x, f_D, tau_D, resid = _ydot(
        params, mR, mp, y, mB, mS, IB, g,
        float(cmd.f), np.asarray(cmd.tau_B, dtype=float), np.asarray(cmd.tau_M, dtype=float),
        np.asarray(dist.force, dtype=float), np.asarray(dist.torque, dtype=float),
    )
    return Derivative(
        ydot=yd,
        vdot_B=x[0:3].copy(),
        omegadot_B=x[3:6].copy(),
        ddq=x[6:11].copy(),
        coupling=Wrench(force=f_D, torque=tau_D),
        residual=float(resid),
    )


def step(state: FullState, cmd: ActuatorCommand, dist: Wrench, model: SystemModel, dt: float) -> FullState:
    """Advance one RK4 step; commands and disturbance are held over the step."""
    next_state, _ = step_with_info(state, cmd, dist, model, dt)
    return next_state


def step_with_info(state: FullState, cmd: ActuatorCommand, dist: Wrench, model: SystemModel, dt: float):
    """RK4 step returning the next state plus the stage-1 Derivative (for
    sensors and logging)."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    params, mR, mp = packed_params(model.arm)
    mB, mS, IB, g = _quad_consts(model)
    y = state.pack()
    y_next, x1, fD1, tauD1, resid1, status = _rk4(
        params, mR, mp, y, float(dt), mB, mS, IB, g,
        float(cmd.f), np.asarray(cmd.tau_B, dtype=float), np.asarray(cmd.tau_M, dtype=float),
        np.asarray(dist.force, dtype=float), np.asarray(dist.torque, dtype=float),
    )
    if status != 0:
        raise GimbalProximity(f"pitch approached +-pi/2 during step at t={state.t:.4f}")
    info = Derivative(
        ydot=np.empty(0),
        vdot_B=x1[0:3].copy(),
        omegadot_B=x1[3:6].copy(),
        ddq=x1[6:11].copy(),
        coupling=Wrench(force=fD1, torque=tauD1),
        residual=float(resid1),
    )
    return FullState.unpack(state.t + dt, y_next), info


def link_twists_body(arm, q, dq):
    """Per-link CoM velocity and angular velocity in the body frame (base at
    rest), from axis-by-axis propagation.  Used by the energy diagnostics."""
    from .kinematics import forward_kinematics

    chain = forward_kinematics(arm, q)
    out = []
    for i, link in enumerate(arm.links):
        p_ci = chain.positions[i + 1] + chain.rotations[i + 1] @ link.com
        w = np.zeros(3)
        v = np.zeros(3)
        for j in range(i + 1):
            zj = chain.joint_axes[j]
            pj = chain.positions[j + 1]
            w += zj * dq[j]
            v += np.cross(zj, p_ci - pj) * dq[j]
        out.append((v, w, chain.rotations[i + 1], p_ci))
    return out


def mechanical_energy(model: SystemModel, state: FullState):
    """Total kinetic and potential energy (NED: PE = -m g z)."""
    from .spatial import rot_from_rpy

    g = model.quad.gravity
    R_B = rot_from_rpy(state.att)
    omega_w = R_B @ state.omega_B
    ke = 0.5 * model.quad.mass * float(state.v_B @ state.v_B)
    ke += 0.5 * float(state.omega_B @ (model.quad.inertia @ state.omega_B))
    pe = -model.quad.mass * g * state.p_B[2]
    for (v_rel, w_rel, R_link, p_ci), link in zip(
        link_twists_body(model.arm, state.q, state.dq), model.arm.links
    ):
        p_ci_w = state.p_B + R_B @ p_ci
        v_ci = state.v_B + np.cross(omega_w, R_B @ p_ci) + R_B @ v_rel
        w_i = omega_w + R_B @ w_rel
        R_i_w = R_B @ R_link
        I_w = R_i_w @ link.inertia @ R_i_w.T
        ke += 0.5 * link.mass * float(v_ci @ v_ci) + 0.5 * float(w_i @ (I_w @ w_i))
        pe += -link.mass * g * p_ci_w[2]
    return ke, pe


def actuator_power(model: SystemModel, state: FullState, cmd: ActuatorCommand, dist: Wrench) -> float:
    """Instantaneous power injected by thrust, torques and disturbances."""
    from .spatial import rot_from_rpy

    R_B = rot_from_rpy(state.att)
    thrust_w = -cmd.f * (R_B @ np.array([0.0, 0.0, 1.0]))
    p = float(thrust_w @ state.v_B)
    p += float(np.asarray(cmd.tau_B) @ state.omega_B)
    p += float(np.asarray(cmd.tau_M) @ state.dq)
    p += float(np.asarray(dist.force) @ state.v_B)
    p += float(np.asarray(dist.torque) @ state.omega_B)
    return p

@dataclass
class NoiseConfig:
    """Sensor rates and noise levels.

    Acceleration channels carry zero-mean Gaussian noise; position and
    attitude optionally carry uniform noise (half-range, used by the
    disturbance-rejection experiment).  Zero values disable a noise source.
    """

    pos_rate: float = 100.0  # Hz, position/velocity channel
    imu_rate: float = 200.0  # Hz, attitude/rates/accelerations
    joint_rate: float = 200.0  # Hz, joint angles/rates/accelerations
    accel_std: float = 0.02  # m/s^2
    ang_accel_std: float = 0.01  # rad/s^2
    joint_accel_std: float = 0.01  # rad/s^2
    pos_uniform: float = 0.0  # m, half-range of uniform position noise
    att_uniform: float = 0.0  # rad, half-range of uniform attitude noise

    @classmethod
    def noiseless(cls) -> "NoiseConfig":
        return cls(accel_std=0.0, ang_accel_std=0.0, joint_accel_std=0.0)


@dataclass
class SensorSample:
    """Held (zero-order-hold) measurement set the controllers read."""

    p_B: np.ndarray
    v_B: np.ndarray
    att: np.ndarray
    omega_B: np.ndarray
    vdot_B: np.ndarray
    omegadot_B: np.ndarray
    q: np.ndarray
    dq: np.ndarray
    ddq: np.ndarray
    t_pos: float
    t_imu: float
    t_joint: float


class Sensors:
    """Rate-gated noisy measurements of the plant truth.

    measure() updates the held sample with whichever channels tick at time
    t and returns it, or returns None between ticks.  Channel rates that
    do not divide the step rate are rounded to the nearest step multiple.
    """

    def __init__(self, cfg: NoiseConfig, dt: float, rng: np.random.Generator):
        self.cfg = cfg
        self.dt = float(dt)
        self.rng = rng
        self._every_pos = max(1, int(round(1.0 / (cfg.pos_rate * dt))))
        self._every_imu = max(1, int(round(1.0 / (cfg.imu_rate * dt))))
        self._every_joint = max(1, int(round(1.0 / (cfg.joint_rate * dt))))
        self.held: SensorSample | None = None

    def measure(self, state: FullState, accels: Derivative, t: float) -> SensorSample | None:
        cfg = self.cfg
        k = int(round(t / self.dt))
        tick_pos = k % self._every_pos == 0
        tick_imu = k % self._every_imu == 0
        tick_joint = k % self._every_joint == 0
        if self.held is None:
            self.held = SensorSample(
                p_B=state.p_B.copy(),
                v_B=state.v_B.copy(),
                att=state.att.copy(),
                omega_B=state.omega_B.copy(),
                vdot_B=accels.vdot_B.copy(),
                omegadot_B=accels.omegadot_B.copy(),
                q=state.q.copy(),
                dq=state.dq.copy(),
                ddq=accels.ddq.copy(),
                t_pos=t,
                t_imu=t,
                t_joint=t,
            )
            tick_pos = tick_imu = tick_joint = True
        held = self.held
        if not (tick_pos or tick_imu or tick_joint):
            return None
        rng = self.rng
        if tick_pos:
            held.p_B = state.p_B.copy()
            if cfg.pos_uniform > 0.0:
                held.p_B += rng.uniform(-cfg.pos_uniform, cfg.pos_uniform, 3)
            held.v_B = state.v_B.copy()
            held.t_pos = t
        if tick_imu:
            held.att = state.att.copy()
            if cfg.att_uniform > 0.0:
                held.att += rng.uniform(-cfg.att_uniform, cfg.att_uniform, 3)
            held.omega_B = state.omega_B.copy()
            held.vdot_B = accels.vdot_B.copy()
            if cfg.accel_std > 0.0:
                held.vdot_B += rng.normal(0.0, cfg.accel_std, 3)
            held.omegadot_B = accels.omegadot_B.copy()
            if cfg.ang_accel_std > 0.0:
                held.omegadot_B += rng.normal(0.0, cfg.ang_accel_std, 3)
            held.t_imu = t
        if tick_joint:
            held.q = state.q.copy()
            held.dq = state.dq.copy()
            held.ddq = accels.ddq.copy()
            if cfg.joint_accel_std > 0.0:
                held.ddq += rng.normal(0.0, cfg.joint_accel_std, 5)
            held.t_joint = t
        return held
