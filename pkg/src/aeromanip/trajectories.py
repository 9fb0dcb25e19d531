"""End-effector goal trajectories for the experiment scenarios."""

from __future__ import annotations

import csv
import math

import numpy as np

from .coordination import EndEffectorGoal
from .errors import ScenarioError


def load_waypoints(path):
    """Waypoint CSV with header t,x,y,z (seconds, meters), time ascending."""
    rows = []
    with open(path, "r", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames[:4]] != ["t", "x", "y", "z"]:
            raise ScenarioError(f"waypoint file {path} must have header t,x,y,z")
        for row in reader:
            rows.append((float(row["t"]), float(row["x"]), float(row["y"]), float(row["z"])))
    if len(rows) < 2:
        raise ScenarioError(f"waypoint file {path} needs at least two points")
    ts = np.array([r[0] for r in rows])
    if np.any(np.diff(ts) <= 0.0):
        raise ScenarioError(f"waypoint times in {path} must be strictly increasing")
    pts = np.array([[r[1], r[2], r[3]] for r in rows])
    return ts, pts


class Trajectory:
    """Time-parameterized end-effector goal."""

    def __init__(self, kind: str, params: dict):
        self.kind = kind
        self.params = dict(params)
        p = self.params
        self.alpha = float(p.get("alpha", 0.0))
        self.beta = float(p.get("beta", 0.0))
        self.feedforward = bool(p.get("velocity_feedforward", True))
        if kind == "hold":
            self.center = np.asarray(p["position"], dtype=float)
        elif kind == "circle":
            self.center = np.asarray(p["center"], dtype=float)
            self.radius = float(p["radius"])
            self.omega = float(p["omega"])
        elif kind == "lemniscate":
            self.center = np.asarray(p["center"], dtype=float)
            self.amp_x = float(p["amp_x"])
            self.amp_z = float(p["amp_z"])
            self.omega = float(p["omega"])
        elif kind == "waypoints":
            self.times, self.points = load_waypoints(p["file"])
        else:
            raise ScenarioError(f"unknown trajectory kind {kind!r}")

    def goal(self, t: float) -> EndEffectorGoal:
        if t < 0.0:
            raise ValueError("trajectory time must be nonnegative")
        if self.kind == "hold":
            pos, vel = self.center, np.zeros(3)
        elif self.kind == "circle":
            # x-z plane, phase zero at the +x offset
            c, s = math.cos(self.omega * t), math.sin(self.omega * t)
            pos = self.center + self.radius * np.array([c, 0.0, s])
            vel = self.radius * self.omega * np.array([-s, 0.0, c])
        elif self.kind == "lemniscate":
            # figure-8 in the x-z plane: (A sin wt, 0, B sin wt cos wt)
            w = self.omega
            sw, cw = math.sin(w * t), math.cos(w * t)
            pos = self.center + np.array([self.amp_x * sw, 0.0, self.amp_z * sw * cw])
            vel = np.array([self.amp_x * w * cw, 0.0, self.amp_z * w * (cw * cw - sw * sw)])
        else:  # waypoints
            ts, pts = self.times, self.points
            if t <= ts[0]:
                pos, vel = pts[0].copy(), np.zeros(3)
            elif t >= ts[-1]:
                pos, vel = pts[-1].copy(), np.zeros(3)
            else:
                j = int(np.searchsorted(ts, t, side="right")) - 1
                frac = (t - ts[j]) / (ts[j + 1] - ts[j])
                pos = pts[j] + frac * (pts[j + 1] - pts[j])
                vel = (pts[j + 1] - pts[j]) / (ts[j + 1] - ts[j])
        if not self.feedforward:
            vel = np.zeros(3)
        return EndEffectorGoal(p=pos, v=vel, alpha=self.alpha, beta=self.beta)


def trajectory(kind: str, params: dict, t: float) -> EndEffectorGoal:
    """One-shot evaluation (builds the trajectory each call; loops should
    construct a Trajectory once)."""
    return Trajectory(kind, params).goal(t)
