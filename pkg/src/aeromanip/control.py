"""Flight and arm controllers plus the coupling estimator.

The flight side is a nonlinear cascade: a position loop produces a thrust
vector, total thrust and commanded roll/pitch are extracted given the
desired yaw, and an attitude loop produces the body torque.  Both loops
feed the estimated coupling wrench forward (scaled to acceleration units
by the respective inertia, which is what makes the error dynamics clean).
The arm runs a computed-torque law on the rigid-body model, with the base
motion entering the bias term so base disturbances are compensated.

Reference-signal derivatives are not provided by the planners; they come
from first-order low-pass filtered backward differences (the references
are piecewise smooth, the filter keeps noise amplification bounded).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AsinDomainError, DegenerateThrust
from .model import ArmModel
from .rne import BaseMotion, Wrench, arm_bias, arm_inertia_matrix, rne_coupling
from .spatial import euler_rate_matrix, euler_rate_matrix_inv

E3 = np.array([0.0, 0.0, 1.0])


@dataclass
class Gains:
    """Diagonal controller gains (entries must all be positive)."""

    k_p: np.ndarray = field(default_factory=lambda: np.full(3, 2.2))
    k_v: np.ndarray = field(default_factory=lambda: np.full(3, 2.0))
    k_att: np.ndarray = field(default_factory=lambda: np.full(3, 24.0))
    k_omega: np.ndarray = field(default_factory=lambda: np.full(3, 16.0))
    k_arm_p: np.ndarray = field(default_factory=lambda: np.full(5, 100.0))
    k_arm_v: np.ndarray = field(default_factory=lambda: np.full(5, 100.0))

    def __post_init__(self):
        for name in ("k_p", "k_v", "k_att", "k_omega", "k_arm_p", "k_arm_v"):
            vec = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, vec)
            if np.any(vec <= 0.0):
                raise ValueError(f"gain {name} must be positive everywhere, got {vec}")


class DiffFilter:
    """Backward difference through a first-order low-pass (time constant tau)."""

    def __init__(self, dt: float, tau: float = 0.02, dim: int = 3):
        self.dt = float(dt)
        self.alpha = self.dt / (float(tau) + self.dt)
        self.prev = None
        self.value = np.zeros(dim)

    def update(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.prev is None:
            self.prev = x.copy()
            return self.value.copy()
        raw = (x - self.prev) / self.dt
        self.value += self.alpha * (raw - self.value)
        self.prev = x.copy()
        return self.value.copy()


class LowPass:
    """First-order low-pass, initialized at the first input.

    Applied to the measured acceleration channels before they enter the
    coupling estimator and the arm bias term: feeding raw one-step-delayed
    accelerations straight back into acceleration-level compensation forms
    an algebraic loop whose gain exceeds one for this mass distribution.
    """

    def __init__(self, dt: float, tau: float = 0.02, dim: int = 3):
        self.alpha = float(dt) / (float(tau) + float(dt))
        self.dim = dim
        self.value = None

    def update(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.value is None:
            self.value = x.copy()
        else:
            self.value += self.alpha * (x - self.value)
        return self.value.copy()


def position_control(p_err, v_err, vdot_r, coupling_accel, gains: Gains, m_total: float, gravity: float) -> np.ndarray:
    """Thrust force vector from the position loop.

    coupling_accel is the estimated coupling force divided by the total
    mass (acceleration units); at equilibrium the output is m_total*g*e3.
    """
    return m_total * (
        gravity * E3
        - np.asarray(vdot_r, dtype=float)
        + gains.k_v * np.asarray(v_err, dtype=float)
        + np.asarray(p_err, dtype=float)
        + np.asarray(coupling_accel, dtype=float)
    )


def thrust_attitude_extract(f_vec, psi_d: float, strict: bool = False):
    """Split a thrust vector into total thrust and roll/pitch commands."""
    f_vec = np.asarray(f_vec, dtype=float)
    f = float(np.linalg.norm(f_vec))
    if f <= 1e-6:
        raise DegenerateThrust(f"thrust magnitude {f:.3e} N below 1e-6 N")
    sp, cp = math.sin(psi_d), math.cos(psi_d)
    arg = (f_vec[0] * sp - f_vec[1] * cp) / f
    if abs(arg) > 1.0:
        if strict:
            raise AsinDomainError(f"asin argument {arg:.6f} outside [-1, 1]")
        warnings.warn(f"asin argument {arg:.4f} clamped to [-1, 1]", RuntimeWarning)
        arg = max(-1.0, min(1.0, arg))
    phi_c = math.asin(arg)
    if abs(f_vec[2]) < 1e-9:
        raise DegenerateThrust("vertical thrust component vanished in pitch extraction")
    theta_c = math.atan((f_vec[0] * cp + f_vec[1] * sp) / f_vec[2])
    return f, phi_c, theta_c


def attitude_control(att_err, omega_err, omegadot_r, omega, coupling_angacc, gains: Gains, inertia, att) -> np.ndarray:
    """Body torque from the attitude loop.

    coupling_angacc is the estimated coupling torque premultiplied by the
    inverse base inertia (angular-acceleration units).
    """
    omega = np.asarray(omega, dtype=float)
    Qinv = euler_rate_matrix_inv(att)
    inner = (
        np.asarray(omegadot_r, dtype=float)
        - gains.k_omega * np.asarray(omega_err, dtype=float)
        - Qinv @ np.asarray(att_err, dtype=float)
        - np.asarray(coupling_angacc, dtype=float)
    )
    inertia = np.asarray(inertia, dtype=float)
    return np.cross(omega, inertia @ omega) + inertia @ inner


def computed_torque(arm: ArmModel, base_meas: BaseMotion, q_err, dq_err, ddq_d, q, dq, gains: Gains, gravity: float) -> np.ndarray:
    """Computed-torque joint command: M (qddot_d - Kv eq_dot - Kp eq) + C."""
    M = arm_inertia_matrix(arm, q)
    C = arm_bias(arm, base_meas, q, dq, gravity)
    inner = (
        np.asarray(ddq_d, dtype=float)
        - gains.k_arm_v * np.asarray(dq_err, dtype=float)
        - gains.k_arm_p * np.asarray(q_err, dtype=float)
    )
    return M @ inner + C


@dataclass
class CouplingEstimator:
    """Coupling wrench estimate from measured base motion and joint signals.

    With `ablate` set the estimate is forced to zero, which is the
    no-compensation baseline controller.
    """

    arm: ArmModel
    gravity: float = 9.81
    ablate: bool = False

    def estimate(self, base_meas: BaseMotion, q, dq, ddq) -> Wrench:
        if self.ablate:
            return Wrench.zero()
        return rne_coupling(self.arm, base_meas, q, dq, ddq, self.gravity)


class FlightController:
    """Stateful cascade wiring position -> thrust/attitude -> torque.

    Reference derivatives are constructed, not differenced, wherever an
    exact expression exists: d/dt v_r = d/dt p_dot_d - K_p (v - p_dot_d)
    uses the measured velocity, and d/dt omega_r uses the measured body
    rate through the Euler-rate map.  Naive filtered differences of v_r
    and omega_r would amplify every zero-order-hold measurement step by
    1/dt and destabilize the cascade at flight gains.  Only the genuinely
    unknown rates (trajectory feedforward, attitude-command rate) go
    through low-pass differentiators, and the attitude-command second
    derivative is dropped (zero mean, step-like otherwise).
    """

    def __init__(self, gains: Gains, m_total: float, inertia, gravity: float, dt: float, psi_d: float = 0.0):
        self.gains = gains
        self.m_total = float(m_total)
        self.inertia = np.asarray(inertia, dtype=float)
        self.inertia_inv = np.linalg.inv(self.inertia)
        self.gravity = float(gravity)
        self.psi_d = float(psi_d)
        self._dv_d = DiffFilter(dt, dim=3)  # trajectory acceleration feedforward
        self._datt_d = DiffFilter(dt, tau=0.05, dim=3)  # attitude-command rate

    def update(self, p_meas, v_meas, att_meas, omega_meas, p_d, v_d, coupling: Wrench):
        """One control tick.  Returns (f, tau_B, att_d)."""
        g = self.gains
        p_meas = np.asarray(p_meas, dtype=float)
        v_meas = np.asarray(v_meas, dtype=float)
        att_meas = np.asarray(att_meas, dtype=float)
        omega_meas = np.asarray(omega_meas, dtype=float)
        v_d = np.asarray(v_d, dtype=float)
        p_err = p_meas - np.asarray(p_d, dtype=float)
        v_r = v_d - g.k_p * p_err
        v_err = v_meas - v_r
        a_d = self._dv_d.update(v_d)
        vdot_r = a_d - g.k_p * (v_meas - v_d)
        f_vec = position_control(
            p_err, v_err, vdot_r, coupling.force / self.m_total, g, self.m_total, self.gravity
        )
        f, phi_c, theta_c = thrust_attitude_extract(f_vec, self.psi_d)
        att_d = np.array([phi_c, theta_c, self.psi_d])
        attd_rate = self._datt_d.update(att_d)
        att_err = att_meas - att_d
        Q = euler_rate_matrix(att_meas)
        omega_r = Q @ (attd_rate - g.k_att * att_err)
        omega_err = omega_meas - omega_r
        att_err_rate = euler_rate_matrix_inv(att_meas) @ omega_meas - attd_rate
        omegadot_r = Q @ (-g.k_att * att_err_rate)
        tau_B = attitude_control(
            att_err,
            omega_err,
            omegadot_r,
            omega_meas,
            self.inertia_inv @ coupling.torque,
            g,
            self.inertia,
            att_meas,
        )
        return f, tau_B, att_d
