"""Design-phase analyses: workspace sampling, error amplification, arm sizing."""

from __future__ import annotations

import math
import os

import numpy as np

from .coordination import workspace_center
from .kinematics import error_amplification_mc, kde_density, sample_workspace
from .model import load_model, size_arm
from .simulate import write_csv


def analyze_workspace(model_path, out_dir, n: int = 10000, seed: int = 0) -> dict:
    """Sample the reachable cloud, estimate its density, locate the center."""
    model = load_model(model_path)
    cloud = sample_workspace(model.arm, n, seed)
    os.makedirs(out_dir, exist_ok=True)
    cloud_path = os.path.join(out_dir, "workspace_cloud.csv")
    write_csv(cloud_path, ["x", "y", "z"], cloud)
    # density on a coarse fixed lattice for external plotting
    pitch = 0.03
    reach = float(np.max(np.linalg.norm(cloud, axis=1))) + pitch
    ax = np.arange(-reach, reach + pitch / 2, pitch)
    az = np.arange(min(0.0, cloud[:, 2].min()), reach + pitch / 2, pitch)
    X, Y, Z = np.meshgrid(ax, ax, az, indexing="ij")
    grid = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    grid = grid[np.linalg.norm(grid, axis=1) <= reach]
    dens = kde_density(cloud, grid)
    dens_path = os.path.join(out_dir, "workspace_density.csv")
    write_csv(dens_path, ["x", "y", "z", "density"], np.column_stack([grid, dens]))
    center = workspace_center(model.arm, n=n, seed=seed)
    center_path = os.path.join(out_dir, "workspace_center.csv")
    write_csv(center_path, ["x", "y", "z"], [center])
    return {"cloud": cloud_path, "density": dens_path, "center": center_path}


def analyze_amplification(
    model_path,
    out_dir,
    pos_range: float = 0.02,
    att_range_deg: float = 5.0,
    n: int = 1000,
    seed: int = 0,
) -> dict:
    """Monte-Carlo error amplification, both modes, with summary ratios."""
    model = load_model(model_path)
    att_range = math.radians(att_range_deg)
    both = error_amplification_mc(model.arm, pos_range, att_range, n, "both", seed)
    att_only = error_amplification_mc(model.arm, pos_range, att_range, n, "attitude_only", seed)
    os.makedirs(out_dir, exist_ok=True)
    samples_path = os.path.join(out_dir, "amplification_samples.csv")
    write_csv(
        samples_path,
        ["e_base_pos", "e_ee_pos", "e_base_att", "e_ee_att", "e_ee_pos_att_only"],
        np.column_stack(
            [both.e_base_pos, both.e_ee_pos, both.e_base_att, both.e_ee_att, att_only.e_ee_pos]
        ),
    )
    stats_path = os.path.join(out_dir, "amplification_stats.csv")
    ratio = both.mean_ee_pos / both.mean_base_pos
    std_amp = att_only.std_ee_pos / both.std_base_pos
    header = [
        "mean_base_pos",
        "mean_ee_pos",
        "pos_ratio",
        "mean_base_att",
        "mean_ee_att",
        "att_only_std_ee_pos",
        "std_base_pos",
        "att_only_std_amplification",
    ]
    write_csv(
        stats_path,
        header,
        [
            [
                both.mean_base_pos,
                both.mean_ee_pos,
                ratio,
                both.mean_base_att,
                both.mean_ee_att,
                att_only.std_ee_pos,
                both.std_base_pos,
                std_amp,
            ]
        ],
    )
    return {"samples": samples_path, "stats": stats_path, "ratio": ratio, "std_amp": std_amp}


def analyze_design(out_dir, body_length: float = 0.93, ratio: float = 1.7, target_radius: float = 0.5) -> dict:
    """Run the sizing iteration and report the resulting link lengths."""
    res = size_arm(body_length, ratio, target_radius)
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "sizing_report.csv")
    write_csv(
        report_path,
        ["total_length", "l1", "l2", "l3", "l4", "l5", "iterations", "coverage"],
        [[res.total_length, *res.link_lengths, res.iterations, res.coverage]],
    )
    hist_path = os.path.join(out_dir, "sizing_history.csv")
    write_csv(
        hist_path,
        ["iteration", "l1", "l2", "l3", "l4", "l5", "coverage"],
        [[i + 1, *ls, cov] for i, (ls, cov) in enumerate(res.history)],
    )
    return {"report": report_path, "history": hist_path, "result": res}
