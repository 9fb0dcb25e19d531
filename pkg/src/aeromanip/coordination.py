"""Dual-mode coordination: turn end-effector goals into base and joint setpoints.

Hover mode keeps the base position setpoint fixed and re-targets the arm
from the measured base pose every tick, so base pose errors are absorbed
at the kinematic level (this is the head-stabilization mechanism).
Cooperation mode additionally drives the base so that the arm can stay at
its workspace center while the end-effector rides the goal trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kinematics import (
    desired_joint_velocity,
    inverse_kinematics,
    jacobians,
    sample_workspace,
    tool_axis_from_attitude,
    workspace_density_mode,
)
from .model import ArmModel


@dataclass
class EndEffectorGoal:
    """Desired end-effector pose (world frame) with optional rates."""

    p: np.ndarray
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    alpha: float = 0.0
    beta: float = 0.0
    alpha_rate: float = 0.0
    beta_rate: float = 0.0


@dataclass
class BasePoseTwist:
    """Measured base pose/twist as coordination consumes it."""

    p: np.ndarray
    R: np.ndarray
    v: np.ndarray
    omega_body: np.ndarray


@dataclass
class CoordinationOutput:
    mode: str
    p_B_d: np.ndarray | None  # base position setpoint (cooperation only)
    q_d: np.ndarray
    dq_d: np.ndarray


def _arm_setpoints(goal: EndEffectorGoal, base: BasePoseTwist, arm: ArmModel, q_prev, sigma_tol: float):
    p_E_d_B = base.R.T @ (np.asarray(goal.p, dtype=float) - base.p)
    # express the world-frame attitude goal in the body frame for the IK
    a_body = base.R.T @ tool_axis_from_attitude(goal.alpha, goal.beta)
    beta_b = math.asin(max(-1.0, min(1.0, a_body[0])))
    alpha_b = math.atan2(-a_body[1], a_body[2])
    q_d = inverse_kinematics(arm, p_E_d_B, alpha_b, beta_b, branch="auto", q_prev=q_prev)
    stack = jacobians(arm, q_d, R_B=base.R, p_B=base.p, alpha=goal.alpha, beta=goal.beta)
    eta_E_d = np.concatenate([np.asarray(goal.v, dtype=float), [goal.alpha_rate, goal.beta_rate]])
    eta_B = np.concatenate([base.v, base.R @ base.omega_body])
    dq_d = desired_joint_velocity(stack, eta_E_d, eta_B, sigma_tol=sigma_tol)
    return q_d, dq_d


def coordinate_hover(goal: EndEffectorGoal, base: BasePoseTwist, arm: ArmModel, q_prev=None, sigma_tol: float = 1e-6) -> CoordinationOutput:
    """Hover mode: base holds position, the arm tracks the goal."""
    q_d, dq_d = _arm_setpoints(goal, base, arm, q_prev, sigma_tol)
    return CoordinationOutput(mode="hover", p_B_d=None, q_d=q_d, dq_d=dq_d)


def coordinate_cooperation(goal: EndEffectorGoal, base: BasePoseTwist, arm: ArmModel, p_C_B, q_prev=None, sigma_tol: float = 1e-6) -> CoordinationOutput:
    """Cooperation mode: base carries the workspace center along the goal."""
    p_C_B = np.asarray(p_C_B, dtype=float)
    p_B_d = np.asarray(goal.p, dtype=float) - base.R @ p_C_B
    q_d, dq_d = _arm_setpoints(goal, base, arm, q_prev, sigma_tol)
    return CoordinationOutput(mode="cooperation", p_B_d=p_B_d, q_d=q_d, dq_d=dq_d)


def workspace_center(arm: ArmModel, n: int = 10000, seed: int = 0, bandwidth="scott", bandwidth_scale: float = 4.0) -> np.ndarray:
    """Body-frame point of highest end-effector reachability density that the
    arm can actually hold with a level tool.

    Argmax of a (scaled-bandwidth) Gaussian kernel density estimate over a
    uniform joint-space sample cloud, restricted to the lattice nodes where
    the level-attitude inverse kinematics succeeds: the unrestricted mode
    sits in the fold-limited core the closed-form IK cannot reach.  Callers
    should cache the result; scenario configs bake it in.
    """
    from .kinematics import ik_branches, kde_density, scott_bandwidth
    from .errors import UnreachableTarget

    cloud = sample_workspace(arm, n, seed)
    # the joint limits are symmetric in q1 and q3, so the reachability
    # density is exactly mirror-symmetric in y; estimating it from the
    # symmetrized sample removes the azimuthal sampling jitter that would
    # otherwise wander the argmax along the near-flat ridge
    cloud = np.vstack([cloud, cloud * np.array([1.0, -1.0, 1.0])])
    h = scott_bandwidth(cloud) if bandwidth == "scott" else float(bandwidth)
    h *= float(bandwidth_scale)

    margin = 0.015  # the nominal posture keeps a perturbation margin to the
    # workspace boundary so tracking errors do not immediately defeat the IK
    probes = margin * np.array(
        [[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
    )

    def feasible(p):
        for d in probes:
            try:
                if not ik_branches(arm, p + d, 0.0, 0.0):
                    return False
            except UnreachableTarget:
                return False
        return True

    def masked_argmax(nodes):
        mask = np.array([feasible(p) for p in nodes])
        if not np.any(mask):
            raise UnreachableTarget("no level-reachable lattice node in the workspace")
        good = nodes[mask]
        dens = kde_density(cloud, good, bandwidth=h)
        return good[int(np.argmax(dens))]

    reach = float(np.max(np.linalg.norm(cloud, axis=1)))
    coarse = 0.03
    ax = np.arange(-reach, reach + coarse / 2, coarse)
    az = np.arange(min(0.0, float(cloud[:, 2].min())), reach + coarse / 2, coarse)
    X, Y, Z = np.meshgrid(ax, ax, az, indexing="ij")
    grid = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    grid = grid[np.linalg.norm(grid, axis=1) <= reach + coarse]
    anchor = masked_argmax(grid)
    fine = 0.005
    offs = np.arange(-6, 7) * fine
    Xf, Yf, Zf = np.meshgrid(offs, offs, offs, indexing="ij")
    local = anchor + np.column_stack([Xf.ravel(), Yf.ravel(), Zf.ravel()])
    return masked_argmax(local)
