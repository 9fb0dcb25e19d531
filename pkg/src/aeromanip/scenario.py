"""Scenario configs: what to simulate, with which noise, disturbance and gains."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .control import Gains
from .errors import ScenarioError
from .plant import NoiseConfig
from .rne import Wrench

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class DisturbanceSpec:
    """External force on the base: none, sinusoid, or step along one axis."""

    kind: str = "none"
    axis: str = "x"
    amplitude: float = 0.0  # N
    frequency: float = 1.0  # rad/s (sinusoid)
    onset: float = 0.0  # s (step)

    def wrench(self, t: float) -> Wrench:
        f = np.zeros(3)
        if self.kind == "sinusoid":
            f[_AXES[self.axis]] = self.amplitude * math.sin(self.frequency * t)
        elif self.kind == "step":
            if t >= self.onset:
                f[_AXES[self.axis]] = self.amplitude
        return Wrench(force=f, torque=np.zeros(3))


@dataclass
class Scenario:
    name: str
    model_path: str
    mode: str  # hover | cooperation
    trajectory_kind: str
    trajectory_params: dict
    disturbance: DisturbanceSpec
    noise: NoiseConfig
    duration: float
    dt: float
    seed: int
    gains: Gains
    ablate_coupling: bool = False
    settle_time: float = 1.0
    psi_d: float = 0.0
    base_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    workspace_center: np.ndarray | None = None  # None = compute from the model
    log_every: int = 1


def _noise_from_cfg(cfg: dict) -> NoiseConfig:
    preset = cfg.get("preset", "gaussian")
    if preset == "none":
        noise = NoiseConfig.noiseless()
    elif preset == "gaussian":
        noise = NoiseConfig()
    elif preset == "example1":
        noise = NoiseConfig(pos_uniform=0.02, att_uniform=math.radians(5.0))
    else:
        raise ScenarioError(f"unknown noise preset {preset!r}")
    for key in (
        "pos_rate",
        "imu_rate",
        "joint_rate",
        "accel_std",
        "ang_accel_std",
        "joint_accel_std",
        "pos_uniform",
        "att_uniform",
    ):
        if key in cfg:
            setattr(noise, key, float(cfg[key]))
    return noise


def _gains_from_cfg(cfg: dict) -> Gains:
    kw = {}
    for key, dim in (
        ("k_p", 3),
        ("k_v", 3),
        ("k_att", 3),
        ("k_omega", 3),
        ("k_arm_p", 5),
        ("k_arm_v", 5),
    ):
        if key in cfg:
            val = cfg[key]
            kw[key] = np.full(dim, float(val)) if np.isscalar(val) else np.asarray(val, dtype=float)
    return Gains(**kw)


def load_scenario(path) -> Scenario:
    """Load and validate a scenario config; relative paths resolve next to it."""
    with open(path, "r") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"scenario parse error in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError(f"scenario root must be a mapping in {path}")
    base_dir = os.path.dirname(os.path.abspath(path))
    problems = []

    def need(key):
        if key not in raw:
            problems.append(f"missing key '{key}'")
            return None
        return raw[key]

    model_rel = need("model")
    mode = raw.get("mode", "hover")
    if mode not in ("hover", "cooperation"):
        problems.append(f"mode must be hover or cooperation, got {mode!r}")
    duration = float(need("duration") or 0.0)
    dt = float(raw.get("dt", 1e-3))
    if duration <= 0.0:
        problems.append("duration must be positive")
    if dt <= 0.0:
        problems.append("dt must be positive")
    traj = need("trajectory") or {}
    kind = traj.get("kind")
    params = dict(traj.get("params", {}))
    if kind is None:
        problems.append("trajectory.kind missing")
    if kind == "waypoints" and "file" in params:
        wp = params["file"]
        if not os.path.isabs(wp):
            wp = os.path.join(base_dir, wp)
        params["file"] = wp
        if not os.path.exists(wp):
            problems.append(f"waypoint file not found: {wp}")
    model_path = None
    if model_rel is not None:
        model_path = model_rel if os.path.isabs(model_rel) else os.path.join(base_dir, model_rel)
        if not os.path.exists(model_path):
            problems.append(f"model file not found: {model_path}")
    if problems:
        raise ScenarioError(f"invalid scenario {path}: " + "; ".join(problems))

    dist_cfg = raw.get("disturbance", {}) or {}
    dist = DisturbanceSpec(
        kind=dist_cfg.get("kind", "none"),
        axis=dist_cfg.get("axis", "x"),
        amplitude=float(dist_cfg.get("amplitude", 0.0)),
        frequency=float(dist_cfg.get("frequency", 1.0)),
        onset=float(dist_cfg.get("onset", 0.0)),
    )
    if dist.kind not in ("none", "sinusoid", "step"):
        raise ScenarioError(f"unknown disturbance kind {dist.kind!r}")
    if dist.axis not in _AXES:
        raise ScenarioError(f"disturbance axis must be one of x, y, z, got {dist.axis!r}")

    wc = raw.get("workspace_center", None)
    return Scenario(
        name=raw.get("name", os.path.splitext(os.path.basename(path))[0]),
        model_path=model_path,
        mode=mode,
        trajectory_kind=kind,
        trajectory_params=params,
        disturbance=dist,
        noise=_noise_from_cfg(raw.get("noise", {}) or {}),
        duration=duration,
        dt=dt,
        seed=int(raw.get("seed", 0)),
        gains=_gains_from_cfg(raw.get("gains", {}) or {}),
        ablate_coupling=bool(raw.get("ablate_coupling", False)),
        settle_time=float(raw.get("settle_time", 1.0)),
        psi_d=float(raw.get("psi_d", 0.0)),
        base_position=np.asarray(raw.get("base_position", [0.0, 0.0, 0.0]), dtype=float),
        workspace_center=None if wc in (None, "auto") else np.asarray(wc, dtype=float),
        log_every=int(raw.get("log_every", 1)),
    )
