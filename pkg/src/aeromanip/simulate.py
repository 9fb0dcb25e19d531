"""Closed-loop scenario execution, metrics, and CSV reports.

One run wires together: trajectory -> coordination -> flight + arm
controllers -> plant RK4 step, with rate-gated noisy sensors in the
feedback path.  Everything is seeded and single-threaded, so outputs are
bit-identical for equal (scenario, seed).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

import numpy as np

from .control import CouplingEstimator, FlightController, LowPass, computed_torque
from .coordination import (
    BasePoseTwist,
    coordinate_cooperation,
    coordinate_hover,
    workspace_center,
)
from .errors import AeroManipError, NoFeasibleBranch, ScenarioError, UnreachableTarget
from .kinematics import forward_kinematics
from .model import load_model
from .plant import ActuatorCommand, FullState, Sensors, derivative, step_with_info
from .rne import BaseMotion
from .scenario import Scenario
from .spatial import euler_from_rot, rot_from_euler, rot_from_rpy, rotation_error_vector
from .trajectories import Trajectory

# time-series CSV layout (one row per logged control tick)
TIMESERIES_COLUMNS = (
    ["t"]
    + [f"p_B_{a}" for a in "xyz"]
    + [f"v_B_{a}" for a in "xyz"]
    + ["phi", "theta", "psi"]
    + [f"omega_{a}" for a in "xyz"]
    + [f"q{i}" for i in range(1, 6)]
    + [f"dq{i}" for i in range(1, 6)]
    + [f"p_E_{a}" for a in "xyz"]
    + ["alpha", "beta", "gamma"]
    + [f"p_Bd_{a}" for a in "xyz"]
    + [f"q_d{i}" for i in range(1, 6)]
    + [f"p_Ed_{a}" for a in "xyz"]
    + ["alpha_d", "beta_d"]
    + [f"fD_hat_{a}" for a in "xyz"]
    + [f"tauD_hat_{a}" for a in "xyz"]
    + [f"fD_{a}" for a in "xyz"]
    + [f"tauD_{a}" for a in "xyz"]
    + ["e_Ep", "e_Ea"]
)


@dataclass
class Metrics:
    """Run summary over the post-settle window."""

    mean_e_ee_pos: float
    max_e_ee_pos: float
    mean_e_ee_att: float
    max_e_ee_att: float
    mean_e_base_pos: float
    max_e_base_pos: float
    mean_est_force_err: float
    mean_est_torque_err: float
    max_base_disp_x: float
    max_base_disp_y: float
    max_base_disp_z: float

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def metrics_from_timeseries(data: np.ndarray, settle_time: float) -> Metrics:
    """Metrics recomputed from a time-series array in TIMESERIES_COLUMNS order."""
    col = {name: i for i, name in enumerate(TIMESERIES_COLUMNS)}
    t = data[:, col["t"]]
    sel = t >= settle_time - 1e-12
    if not np.any(sel):
        raise ScenarioError("settle time leaves no samples for metrics")
    d = data[sel]

    def v3(prefix, names=("x", "y", "z")):
        return d[:, [col[f"{prefix}_{a}"] for a in names]]

    e_ep = d[:, col["e_Ep"]]
    e_ea = d[:, col["e_Ea"]]
    p_err = v3("p_B") - v3("p_Bd")
    base_norm = np.linalg.norm(p_err, axis=1)
    f_err = np.linalg.norm(v3("fD_hat") - v3("fD"), axis=1)
    tau_err = np.linalg.norm(v3("tauD_hat") - v3("tauD"), axis=1)
    disp = np.max(np.abs(p_err), axis=0)
    return Metrics(
        mean_e_ee_pos=float(np.mean(e_ep)),
        max_e_ee_pos=float(np.max(e_ep)),
        mean_e_ee_att=float(np.mean(e_ea)),
        max_e_ee_att=float(np.max(e_ea)),
        mean_e_base_pos=float(np.mean(base_norm)),
        max_e_base_pos=float(np.max(base_norm)),
        mean_est_force_err=float(np.mean(f_err)),
        mean_est_torque_err=float(np.mean(tau_err)),
        max_base_disp_x=float(disp[0]),
        max_base_disp_y=float(disp[1]),
        max_base_disp_z=float(disp[2]),
    )


def metrics_from_csv(path, settle_time: float) -> Metrics:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return metrics_from_timeseries(np.atleast_2d(data), settle_time)


@dataclass
class RunResult:
    metrics: Metrics
    timeseries: np.ndarray
    timeseries_path: str | None
    metrics_path: str | None


def run_scenario(scn: Scenario, out_dir=None, seed=None, ablate=None, duration=None) -> RunResult:
    """Execute a scenario; optionally write timeseries.csv and metrics.csv."""
    model = load_model(scn.model_path)
    arm = model.arm
    g = model.quad.gravity
    dt = scn.dt
    seed = scn.seed if seed is None else int(seed)
    ablate = scn.ablate_coupling if ablate is None else bool(ablate)
    duration = scn.duration if duration is None else float(duration)

    p_C_B = scn.workspace_center
    if p_C_B is None:
        p_C_B = workspace_center(arm)

    params = dict(scn.trajectory_params)
    for key in ("center", "position"):
        if key in params and isinstance(params[key], str) and params[key] == "auto":
            params[key] = (np.asarray(scn.base_position) + p_C_B).tolist()
    traj = Trajectory(scn.trajectory_kind, params)

    rng = np.random.default_rng(seed)
    sensors = Sensors(scn.noise, dt, rng)
    flight = FlightController(scn.gains, model.m_total, model.quad.inertia, g, dt, psi_d=scn.psi_d)
    estimator = CouplingEstimator(arm, gravity=g, ablate=ablate)

    # initial condition: level base at its setpoint, arm on the initial goal
    goal0 = traj.goal(0.0)
    if scn.mode == "hover":
        p_B0 = np.asarray(scn.base_position, dtype=float)
    else:
        p_B0 = np.asarray(goal0.p, dtype=float) - p_C_B
    base0 = BasePoseTwist(p=p_B0, R=np.eye(3), v=np.zeros(3), omega_body=np.zeros(3))
    coord0 = (
        coordinate_hover(goal0, base0, arm)
        if scn.mode == "hover"
        else coordinate_cooperation(goal0, base0, arm, p_C_B)
    )
    state = FullState(
        t=0.0,
        p_B=p_B0.copy(),
        v_B=np.zeros(3),
        att=np.zeros(3),
        omega_B=np.zeros(3),
        q=coord0.q_d.copy(),
        dq=np.zeros(5),
    )
    # equilibrium-consistent initial command: gravity-holding joint torques
    # plus a base torque balancing the arm's static moment, so the first
    # measured accelerations describe a trimmed vehicle
    from .rne import arm_bias, rne_coupling

    tau_M0 = arm_bias(arm, BaseMotion.at_rest(), state.q, np.zeros(5), g)
    w_static = rne_coupling(arm, BaseMotion.at_rest(), state.q, np.zeros(5), np.zeros(5), g)
    hover_cmd = ActuatorCommand(model.m_total * g, -w_static.torque, tau_M0)
    accinfo = derivative(state, hover_cmd, scn.disturbance.wrench(0.0), model)

    n_steps = int(round(duration / dt))
    rows = []
    held = None
    q_prev_d = coord0.q_d.copy()
    gamma_d = scn.psi_d
    coord = coord0
    # state-estimation stage: the noisy position/attitude channels and all
    # acceleration channels pass first-order low-passes before any
    # model-based consumer (coordination, flight control, estimator, bias);
    # raw zero-order-hold noise through the stiff gains would otherwise
    # chatter every actuator at the measurement rate
    lp_pos = LowPass(dt, dim=3)
    lp_att = LowPass(dt, dim=3)
    lp_vdot = LowPass(dt, dim=3)
    lp_omdot = LowPass(dt, dim=3)
    lp_ddq = LowPass(dt, dim=5)
    # transient IK misses (noise briefly pushing the body-frame target out of
    # the reachable set) hold the previous arm setpoint; persistent failure aborts
    ik_miss_budget = max(1, int(round(0.25 / dt)))
    ik_misses = 0

    for k in range(n_steps):
        t = k * dt
        fresh = sensors.measure(state, accinfo, t)
        held = fresh if fresh is not None else held
        goal = traj.goal(t)
        p_hat = lp_pos.update(held.p_B)
        att_hat = lp_att.update(held.att)
        R_meas = rot_from_rpy(att_hat)
        base_meas = BasePoseTwist(p=p_hat, R=R_meas, v=held.v_B, omega_body=held.omega_B)
        try:
            if scn.mode == "hover":
                try:
                    coord = coordinate_hover(goal, base_meas, arm, q_prev=q_prev_d)
                    ik_misses = 0
                except (UnreachableTarget, NoFeasibleBranch):
                    ik_misses += 1
                    if ik_misses > ik_miss_budget:
                        raise
                p_B_d = np.asarray(scn.base_position, dtype=float)
                v_B_d = np.zeros(3)
            else:
                try:
                    coord = coordinate_cooperation(goal, base_meas, arm, p_C_B, q_prev=q_prev_d)
                    ik_misses = 0
                except (UnreachableTarget, NoFeasibleBranch):
                    ik_misses += 1
                    if ik_misses > ik_miss_budget:
                        raise
                p_B_d = np.asarray(goal.p, dtype=float) - R_meas @ p_C_B
                v_B_d = np.asarray(goal.v, dtype=float)
            q_prev_d = coord.q_d

            motion_meas = BaseMotion(
                R_B=R_meas,
                vdot_B=lp_vdot.update(held.vdot_B),
                omega_B=held.omega_B,
                omegadot_B=lp_omdot.update(held.omegadot_B),
            )
            coupling_hat = estimator.estimate(motion_meas, held.q, held.dq, lp_ddq.update(held.ddq))
            f, tau_B, _ = flight.update(
                p_hat, held.v_B, att_hat, held.omega_B, p_B_d, v_B_d, coupling_hat
            )
            tau_M = computed_torque(
                arm,
                motion_meas,
                held.q - coord.q_d,
                held.dq - coord.dq_d,
                np.zeros(5),
                held.q,
                held.dq,
                scn.gains,
                g,
            )
            cmd = ActuatorCommand(max(f, 0.0), tau_B, tau_M)
            dist = scn.disturbance.wrench(t)
            next_state, accinfo = step_with_info(state, cmd, dist, model, dt)
        except AeroManipError as exc:
            raise ScenarioError(f"scenario {scn.name!r} failed at t={t:.4f}s (tick {k}): {exc}") from exc

        if k % scn.log_every == 0:
            chain = forward_kinematics(arm, state.q)
            R_B = rot_from_rpy(state.att)
            p_E = state.p_B + R_B @ chain.p_E
            R_E = R_B @ chain.R_E
            ee_angles = euler_from_rot(R_E)
            R_E_d = rot_from_euler([goal.alpha, goal.beta, gamma_d])
            e_ea = float(np.linalg.norm(rotation_error_vector(R_E_d.T @ R_E)))
            e_ep = float(np.linalg.norm(p_E - goal.p))
            rows.append(
                np.concatenate(
                    [
                        [t],
                        state.p_B,
                        state.v_B,
                        state.att,
                        state.omega_B,
                        state.q,
                        state.dq,
                        p_E,
                        ee_angles,
                        p_B_d,
                        coord.q_d,
                        goal.p,
                        [goal.alpha, goal.beta],
                        coupling_hat.force,
                        coupling_hat.torque,
                        accinfo.coupling.force,
                        accinfo.coupling.torque,
                        [e_ep, e_ea],
                    ]
                )
            )
        state = next_state

    data = np.vstack(rows)
    metrics = metrics_from_timeseries(data, scn.settle_time)
    ts_path = met_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        ts_path = os.path.join(out_dir, f"{scn.name}_timeseries.csv")
        met_path = os.path.join(out_dir, f"{scn.name}_metrics.csv")
        write_csv(ts_path, TIMESERIES_COLUMNS, data)
        md = metrics.as_dict()
        write_csv(met_path, list(md.keys()), [list(md.values())])
    return RunResult(metrics=metrics, timeseries=data, timeseries_path=ts_path, metrics_path=met_path)


def compare(scenarios: list, out_dir) -> str:
    """Run related scenarios and emit one comparison row each plus reductions
    relative to the first (reference) row."""
    if len(scenarios) < 2:
        raise ScenarioError("compare needs at least two scenarios")
    ref = scenarios[0]
    for s in scenarios[1:]:
        if os.path.abspath(s.model_path) != os.path.abspath(ref.model_path):
            raise ScenarioError("compare: scenarios use different models")
        if s.trajectory_kind != ref.trajectory_kind or s.trajectory_params != ref.trajectory_params:
            raise ScenarioError("compare: scenarios use different trajectories")
    os.makedirs(out_dir, exist_ok=True)
    results = [run_scenario(s, out_dir=os.path.join(out_dir, s.name)) for s in scenarios]
    header = ["name"] + list(results[0].metrics.as_dict().keys()) + [
        "reduction_mean_e_ee_pos_pct",
        "reduction_mean_e_base_pos_pct",
    ]
    base = results[0].metrics
    path = os.path.join(out_dir, "comparison.csv")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for s, r in zip(scenarios, results):
            m = r.metrics
            red_ee = 100.0 * (1.0 - base.mean_e_ee_pos / m.mean_e_ee_pos) if m.mean_e_ee_pos > 0 else 0.0
            red_b = 100.0 * (1.0 - base.mean_e_base_pos / m.mean_e_base_pos) if m.mean_e_base_pos > 0 else 0.0
            vals = [m.as_dict()[k] for k in results[0].metrics.as_dict().keys()]
            fh.write(",".join([s.name] + [_fmt(v) for v in vals + [red_ee, red_b]]) + "\n")
    return path
