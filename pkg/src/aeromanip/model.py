"""Physical models of the quadcopter and arm, config file I/O, and arm sizing.

The arm is a 5-joint chain described by modified Denavit-Hartenberg rows
(alpha, a, d, theta_offset per joint, Craig convention) plus a fixed tool
transform from the last joint frame to the end-effector tip.  The joint
layout has the first three joint axes intersecting at one fixed shoulder
point (yaw / pitch / roll about the upper arm) and joints four and five
with parallel pitch axes, which is what makes the closed-form inverse
kinematics possible.  Both structural facts are validated numerically on
load rather than assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ModelValidationError, SizingError

J2_MIN, J2_MAX = 0.0, 3.0 * math.pi / 4.0
J_MIN, J_MAX = -3.0 * math.pi / 4.0, 3.0 * math.pi / 4.0

# slender-cylinder radius used when modelling links as uniform rods
ROD_RADIUS = 0.01


@dataclass(frozen=True)
class LinkParams:
    """One MDH row plus the link's mass properties (all SI, angles rad)."""

    a: float
    alpha: float
    d: float
    theta_offset: float
    limit_lo: float
    limit_hi: float
    mass: float
    com: np.ndarray  # CoM position in the link frame (3,)
    inertia: np.ndarray  # inertia tensor about the CoM in the link frame (3,3)


@dataclass(frozen=True)
class ArmModel:
    links: tuple  # 5 LinkParams
    mount_pos: np.ndarray  # origin of the arm base frame in the body frame (3,)
    mount_rot: np.ndarray  # rotation of the arm base frame in the body frame (3,3)
    tool_pos: np.ndarray  # tip offset in the last joint frame (3,)
    tool_rot: np.ndarray  # end-effector frame in the last joint frame (3,3)

    @property
    def n_joints(self) -> int:
        return len(self.links)

    @property
    def total_mass(self) -> float:
        return float(sum(l.mass for l in self.links))

    @property
    def limits_lo(self) -> np.ndarray:
        return np.array([l.limit_lo for l in self.links])

    @property
    def limits_hi(self) -> np.ndarray:
        return np.array([l.limit_hi for l in self.links])

    def clip_to_limits(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.limits_lo, self.limits_hi)

    def in_limits(self, q, tol: float = 1e-9) -> bool:
        links = self.links
        for i in range(len(links)):
            qi = q[i]
            if qi < links[i].limit_lo - tol or qi > links[i].limit_hi + tol:
                return False
        return True


@dataclass(frozen=True)
class QuadModel:
    mass: float
    inertia: np.ndarray  # body-frame inertia tensor (3,3)
    wheelbase: float
    gravity: float


@dataclass(frozen=True)
class SystemModel:
    quad: QuadModel
    arm: ArmModel

    @property
    def m_base(self) -> float:
        return self.quad.mass

    @property
    def m_arm(self) -> float:
        return self.arm.total_mass

    @property
    def m_total(self) -> float:
        return self.quad.mass + self.arm.total_mass


def _mdh_matrix(alpha: float, a: float, d: float, theta: float) -> np.ndarray:
    """Homogeneous transform of one MDH row (Craig convention)."""
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return np.array(
        [
            [ct, -st, 0.0, a],
            [st * ca, ct * ca, -sa, -sa * d],
            [st * sa, ct * sa, ca, ca * d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def _zero_config_axes(arm: ArmModel):
    """Joint-axis lines (origin, direction) in the mount frame at q = 0."""
    T = np.eye(4)
    lines = []
    for link in arm.links:
        T = T @ _mdh_matrix(link.alpha, link.a, link.d, link.theta_offset)
        lines.append((T[:3, 3].copy(), T[:3, 2].copy()))
    return lines


def _validate_arm(arm: ArmModel, errs: list) -> None:
    if len(arm.links) != 5:
        errs.append(f"arm must have 5 joints, got {len(arm.links)}")
        return
    for i, link in enumerate(arm.links, start=1):
        if not link.limit_lo < link.limit_hi:
            errs.append(f"joint {i}: limit lo {link.limit_lo} must be < hi {link.limit_hi}")
        lo_ok, hi_ok = (J2_MIN, J2_MAX) if i == 2 else (J_MIN, J_MAX)
        if link.limit_lo < lo_ok - 1e-12 or link.limit_hi > hi_ok + 1e-12:
            errs.append(
                f"joint {i}: limits [{link.limit_lo:.4f}, {link.limit_hi:.4f}] exceed "
                f"allowed [{lo_ok:.4f}, {hi_ok:.4f}]"
            )
        if link.mass <= 0.0:
            errs.append(f"link {i}: mass must be positive, got {link.mass}")
        I = np.asarray(link.inertia, dtype=float)
        if I.shape != (3, 3):
            errs.append(f"link {i}: inertia must be 3x3")
            continue
        if np.max(np.abs(I - I.T)) > 1e-9:
            errs.append(f"link {i}: inertia tensor is not symmetric")
        else:
            w = np.linalg.eigvalsh(I)
            if w[0] <= 0.0:
                errs.append(f"link {i}: inertia tensor is not positive definite (min eig {w[0]:.3e})")
    for name, R in (("mount", arm.mount_rot), ("tool", arm.tool_rot)):
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            errs.append(f"{name} rotation is not a proper rotation matrix")
    # structural checks at the zero configuration
    lines = _zero_config_axes(arm)
    (o1, z1), (o2, z2), (o3, z3), (o4, z4), (o5, z5) = lines
    A = np.zeros((3, 3))
    b = np.zeros(3)
    for o, z in ((o1, z1), (o2, z2), (o3, z3)):
        P = np.eye(3) - np.outer(z, z)
        A += P
        b += P @ o
    try:
        p_star = np.linalg.solve(A, b)
        resid = max(
            np.linalg.norm((np.eye(3) - np.outer(z, z)) @ (p_star - o))
            for o, z in ((o1, z1), (o2, z2), (o3, z3))
        )
        if resid > 1e-8:
            errs.append(f"axes of joints 1-3 do not intersect at one point (residual {resid:.3e})")
    except np.linalg.LinAlgError:
        errs.append("axes of joints 1-3 are degenerate (no common-point solve)")
    if np.linalg.norm(np.cross(z4, z5)) > 1e-9:
        errs.append("axes of joints 4 and 5 are not parallel")


def _validate_quad(quad: QuadModel, errs: list) -> None:
    if quad.mass <= 0.0:
        errs.append(f"quad mass must be positive, got {quad.mass}")
    I = np.asarray(quad.inertia, dtype=float)
    if I.shape != (3, 3):
        errs.append("quad inertia must be 3x3")
        return
    if np.max(np.abs(I - I.T)) > 1e-9:
        errs.append("quad inertia tensor is not symmetric")
    else:
        w = np.linalg.eigvalsh(I)
        if w[0] <= 0.0:
            errs.append(f"quad inertia tensor is not positive definite (min eig {w[0]:.3e})")
    if quad.wheelbase <= 0.0:
        errs.append(f"wheelbase must be positive, got {quad.wheelbase}")
    if quad.gravity <= 0.0:
        errs.append(f"gravity must be positive, got {quad.gravity}")


def validate_model(model: SystemModel) -> SystemModel:
    errs: list = []
    _validate_quad(model.quad, errs)
    _validate_arm(model.arm, errs)
    if errs:
        raise ModelValidationError(errs)
    return model


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == (3,):
        return np.diag(arr)
    if arr.shape == (3, 3):
        return arr
    raise ModelValidationError([f"{name} must be a length-3 diagonal or a 3x3 matrix"])


def _require(d: dict, key: str, ctx: str):
    if key not in d:
        raise ModelValidationError([f"missing key '{key}' in {ctx}"])
    return d[key]


def load_model(path) -> SystemModel:
    """Load and fully validate a system model from a YAML config file."""
    with open(path, "r") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ModelValidationError([f"config parse error: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ModelValidationError(["config root must be a mapping"])
    q = _require(raw, "quad", "config")
    quad = QuadModel(
        mass=float(_require(q, "mass", "quad")),
        inertia=_as_matrix(_require(q, "inertia", "quad"), "quad inertia"),
        wheelbase=float(_require(q, "wheelbase", "quad")),
        gravity=float(_require(q, "gravity", "quad")),
    )
    a = _require(raw, "arm", "config")
    mount = _require(a, "mount", "arm")
    tool = _require(a, "tool", "arm")
    links_raw = _require(a, "links", "arm")
    links = []
    for i, lr in enumerate(links_raw, start=1):
        ctx = f"arm link {i}"
        limits = _require(lr, "limits", ctx)
        links.append(
            LinkParams(
                a=float(_require(lr, "a", ctx)),
                alpha=float(_require(lr, "alpha", ctx)),
                d=float(_require(lr, "d", ctx)),
                theta_offset=float(_require(lr, "theta_offset", ctx)),
                limit_lo=float(limits[0]),
                limit_hi=float(limits[1]),
                mass=float(_require(lr, "mass", ctx)),
                com=np.asarray(_require(lr, "com", ctx), dtype=float),
                inertia=np.asarray(_require(lr, "inertia", ctx), dtype=float),
            )
        )
    from .spatial import rot_from_rpy

    if "rpy" in mount:
        mount_rot = rot_from_rpy(np.asarray(mount["rpy"], dtype=float))
    else:
        mount_rot = np.asarray(_require(mount, "rotation", "mount"), dtype=float)
    arm = ArmModel(
        links=tuple(links),
        mount_pos=np.asarray(_require(mount, "position", "mount"), dtype=float),
        mount_rot=mount_rot,
        tool_pos=np.asarray(_require(tool, "position", "tool"), dtype=float),
        tool_rot=np.asarray(_require(tool, "rotation", "tool"), dtype=float),
    )
    return validate_model(SystemModel(quad=quad, arm=arm))


def save_model(model: SystemModel, path) -> None:
    """Write a model back out in the same schema load_model reads."""
    doc = {
        "quad": {
            "mass": float(model.quad.mass),
            "inertia": [[float(x) for x in row] for row in model.quad.inertia],
            "wheelbase": float(model.quad.wheelbase),
            "gravity": float(model.quad.gravity),
        },
        "arm": {
            "mount": {
                "position": [float(x) for x in model.arm.mount_pos],
                "rotation": [[float(x) for x in row] for row in model.arm.mount_rot],
            },
            "tool": {
                "position": [float(x) for x in model.arm.tool_pos],
                "rotation": [[float(x) for x in row] for row in model.arm.tool_rot],
            },
            "links": [
                {
                    "a": float(l.a),
                    "alpha": float(l.alpha),
                    "d": float(l.d),
                    "theta_offset": float(l.theta_offset),
                    "limits": [float(l.limit_lo), float(l.limit_hi)],
                    "mass": float(l.mass),
                    "com": [float(x) for x in l.com],
                    "inertia": [[float(x) for x in row] for row in l.inertia],
                }
                for l in model.arm.links
            ],
        },
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False, default_flow_style=None)


def _rod_inertia(mass: float, length: float, axis: str) -> np.ndarray:
    """Inertia of a slender cylinder (radius ROD_RADIUS) about its CoM."""
    r2 = ROD_RADIUS * ROD_RADIUS
    i_axial = 0.5 * mass * r2
    i_perp = mass * (3.0 * r2 + length * length) / 12.0
    diag = {"x": (i_axial, i_perp, i_perp), "y": (i_perp, i_axial, i_perp), "z": (i_perp, i_perp, i_axial)}
    return np.diag(diag[axis])


DEFAULT_LIMITS = ((J_MIN, J_MAX), (J2_MIN, J2_MAX), (J_MIN, J_MAX), (J_MIN, J_MAX), (J_MIN, J_MAX))

# end-effector frame in the last joint frame: the tool axis (EE z) points
# along the hand so that the arm at rest holds a level end-effector
TOOL_ROT = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def arm_from_lengths(
    lengths,
    total_mass: float = 1.03,
    joint_mass_min: float = 0.05,
    mount_pos=(0.0, 0.0, 0.0),
    limits=DEFAULT_LIMITS,
) -> ArmModel:
    """Build the standard 5-joint arm from its five link lengths.

    Geometry: yaw about the mount z (link 1 drops the shoulder by l1),
    shoulder pitch, roll about the upper arm (links 2+3 span shoulder to
    elbow), elbow pitch (link 4), wrist pitch parallel to the elbow
    (link 5 is the hand out to the tool tip).  Masses are apportioned as a
    fixed per-joint actuator mass plus a share proportional to link length;
    each link is a uniform slender rod.
    """
    l1, l2, l3, l4, l5 = (float(x) for x in lengths)
    if min(l1, l2, l3, l4, l5) < 0.0:
        raise ValueError("link lengths must be nonnegative")
    total_len = l1 + l2 + l3 + l4 + l5
    if total_len <= 0.0:
        raise ValueError("total arm length must be positive")
    spare = total_mass - 5.0 * joint_mass_min
    if spare < 0.0:
        raise ValueError("total_mass too small for the per-joint minimum")
    ls = (l1, l2, l3, l4, l5)
    masses = [joint_mass_min + spare * l / total_len for l in ls]
    # CoM of each rod in its own link frame; rod axis per the MDH layout
    coms = [
        np.array([0.0, 0.0, -l1 / 2.0]),
        np.array([0.0, -l2 / 2.0, 0.0]),
        np.array([0.0, 0.0, -l3 / 2.0]),
        np.array([l4 / 2.0, 0.0, 0.0]),
        np.array([l5 / 2.0, 0.0, 0.0]),
    ]
    axes = ["z", "y", "z", "x", "x"]
    rows = [
        # (a, alpha, d, theta_offset)
        (0.0, 0.0, l1, 0.0),
        (0.0, -math.pi / 2.0, 0.0, 0.0),
        (0.0, math.pi / 2.0, l2 + l3, 0.0),
        (0.0, -math.pi / 2.0, 0.0, -math.pi / 2.0),
        (l4, 0.0, 0.0, 0.0),
    ]
    links = tuple(
        LinkParams(
            a=rows[i][0],
            alpha=rows[i][1],
            d=rows[i][2],
            theta_offset=rows[i][3],
            limit_lo=limits[i][0],
            limit_hi=limits[i][1],
            mass=masses[i],
            com=coms[i],
            inertia=_rod_inertia(masses[i], ls[i], axes[i]),
        )
        for i in range(5)
    )
    return ArmModel(
        links=links,
        mount_pos=np.asarray(mount_pos, dtype=float),
        mount_rot=np.eye(3),
        tool_pos=np.array([l5, 0.0, 0.0]),
        tool_rot=TOOL_ROT.copy(),
    )


@dataclass
class SizingResult:
    total_length: float
    link_lengths: np.ndarray
    iterations: int
    coverage: float
    history: list = field(default_factory=list)


def size_arm(
    body_length: float,
    ratio: float,
    target_radius: float,
    grid_points: int = 200,
    step: float = 0.002,
    min_lengths=(0.0, 0.02, 0.02, 0.02, 0.02),
    max_iter: int = 400,
) -> SizingResult:
    """Size the arm from the base body length and the body-to-arm ratio.

    The total length is body_length / ratio.  Starting from a zero first
    link and four equal links, length is shifted out of the first three
    links and into the last two until the end-effector covers a target
    hemisphere of the given radius below the mount (checked by inverse
    kinematics on a Fibonacci surface grid with a level end-effector;
    azimuth is normalised away since base yaw supplies it in flight).
    """
    if body_length <= 0.0 or ratio <= 0.0:
        raise ValueError("body_length and ratio must be positive")
    total = body_length / ratio
    if target_radius > total:
        raise ValueError(
            f"target radius {target_radius} exceeds the total arm length {total:.4f}"
        )
    from . import kinematics  # deferred: kinematics imports this module

    lengths = np.array([0.0, total / 4.0, total / 4.0, total / 4.0, total / 4.0])
    floors = np.asarray(min_lengths, dtype=float)
    grid = _hemisphere_grid(grid_points, target_radius)

    def coverage_of(ls):
        arm = arm_from_lengths(ls)
        misses = []
        for p in grid:
            if not kinematics.reachable_with_level_tool(arm, p):
                misses.append(p)
        frac = 1.0 - len(misses) / len(grid) if len(grid) else 1.0
        return frac, misses, arm

    history = []
    coverage, misses, arm = coverage_of(lengths)
    it = 0
    while coverage < 1.0 and it < max_iter:
        it += 1
        l1, l2, l3, l4, l5 = lengths
        # diagnose each miss against the shoulder-to-wrist reach: "far"
        # misses (level-tool wrist point beyond reach) are cured by folding
        # hand length into the forearm; "near" misses (inside the fold
        # limit) by shifting length from the first three links to the last two
        reach = (l2 + l3) + l4
        shoulder = np.array([0.0, 0.0, l1])
        far = any(
            np.linalg.norm(p - np.array([0.0, 0.0, l5]) - shoulder) > reach - 1e-12
            for p in misses
        )
        near = any(
            np.linalg.norm(p - np.array([0.0, 0.0, l5]) - shoulder) <= reach - 1e-12
            for p in misses
        )
        take5 = min(step, l5 - floors[4]) if far else 0.0
        take2 = min(step / 2.0, l2 - floors[1]) if near else 0.0
        take3 = min(step / 2.0, l3 - floors[2]) if near else 0.0
        if take5 + take2 + take3 <= 1e-12:
            raise SizingError("sizing stalled at the minimum link lengths", coverage)
        lengths = np.array(
            [l1, l2 - take2, l3 - take3, l4 + take5 + (take2 + take3) / 2.0, l5 - take5 + (take2 + take3) / 2.0]
        )
        coverage, misses, arm = coverage_of(lengths)
        history.append((lengths.copy(), coverage))
    if coverage < 1.0:
        raise SizingError(f"no full coverage after {it} iterations", coverage)
    return SizingResult(
        total_length=total,
        link_lengths=lengths,
        iterations=it,
        coverage=coverage,
        history=history,
    )


def _hemisphere_grid(n: int, radius: float) -> np.ndarray:
    """Fibonacci lattice on the lower hemisphere surface (z down is +z)."""
    if radius <= 0.0 or n <= 0:
        return np.zeros((0, 3))
    golden = (1.0 + math.sqrt(5.0)) / 2.0
    pts = np.empty((n, 3))
    for k in range(n):
        # z from just above the equator plane down to the pole
        z = (k + 0.5) / n  # (0, 1): fraction toward the pole
        rho = math.sqrt(max(0.0, 1.0 - z * z))
        phi = 2.0 * math.pi * ((k / golden) % 1.0)
        pts[k] = (radius * rho * math.cos(phi), radius * rho * math.sin(phi), radius * z)
    return pts
