"""Command-line interface: simulate scenarios, compare them, run analyses."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .errors import AeroManipError


def _default_out() -> str:
    return os.environ.get("AEROMANIP_OUT", "out")


def _cmd_simulate(args) -> int:
    from .scenario import load_scenario
    from .simulate import run_scenario

    scn = load_scenario(args.scenario)
    if args.validate:
        print(f"{scn.name}: scenario OK")
        return 0
    result = run_scenario(
        scn,
        out_dir=args.out,
        seed=args.seed,
        ablate=True if args.ablate_coupling else None,
    )
    for key, val in result.metrics.as_dict().items():
        print(f"{key}: {val:.6g}")
    print(f"wrote {result.timeseries_path}")
    print(f"wrote {result.metrics_path}")
    return 0


def _cmd_compare(args) -> int:
    from .scenario import load_scenario
    from .simulate import compare

    scns = [load_scenario(p) for p in args.scenarios]
    path = compare(scns, args.out)
    print(f"wrote {path}")
    return 0


def _cmd_analyze(args) -> int:
    from .analyze import analyze_amplification, analyze_design, analyze_workspace

    if args.kind == "workspace":
        out = analyze_workspace(args.model, args.out, n=args.samples, seed=args.seed)
    elif args.kind == "amplification":
        out = analyze_amplification(
            args.model,
            args.out,
            pos_range=args.pos_range,
            att_range_deg=args.att_range_deg,
            n=args.samples,
            seed=args.seed,
        )
        print(f"position amplification ratio: {out['ratio']:.4f}")
        print(f"attitude-only std amplification: {out['std_amp']:.4f}")
    else:  # design
        out = analyze_design(
            args.out,
            body_length=args.body_length,
            ratio=args.ratio,
            target_radius=args.target_radius,
        )
        res = out["result"]
        print(f"total length: {res.total_length:.4f} m")
        print(f"link lengths: {np.round(res.link_lengths, 4).tolist()}")
        print(f"iterations: {res.iterations}, coverage: {res.coverage:.3f}")
    for key, val in out.items():
        if isinstance(val, str):
            print(f"wrote {val}")
    return 0


def _cmd_rne_dump(args) -> int:
    from .model import load_model
    from .rne import BaseMotion, rne_coupling, rne_link_wrenches
    from .simulate import write_csv

    model = load_model(args.model)
    q = np.asarray([float(x) for x in args.q.split(",")]) if args.q else np.zeros(5)
    dq = np.asarray([float(x) for x in args.dq.split(",")]) if args.dq else np.zeros(5)
    ddq = np.asarray([float(x) for x in args.ddq.split(",")]) if args.ddq else np.zeros(5)
    base = BaseMotion.at_rest()
    f_stack, n_stack = rne_link_wrenches(model.arm, base, q, dq, ddq, model.quad.gravity)
    w = rne_coupling(model.arm, base, q, dq, ddq, model.quad.gravity)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "rne_dump.csv")
    rows = [[i + 1, *f_stack[i], *n_stack[i]] for i in range(5)]
    write_csv(path, ["link", "f_x", "f_y", "f_z", "n_x", "n_y", "n_z"], rows)
    print(f"coupling force (inertial): {w.force.tolist()}")
    print(f"coupling torque (body): {w.torque.tolist()}")
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aeromanip", description=__doc__)
    parser.add_argument("--version", action="version", version=f"aeromanip {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario config")
    p.add_argument("scenario", help="scenario YAML file")
    p.add_argument("--out", default=_default_out(), help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--ablate-coupling", action="store_true", help="zero the coupling estimate")
    p.add_argument("--validate", action="store_true", help="parse and validate only")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("compare", help="run scenarios and tabulate reductions vs the first")
    p.add_argument("scenarios", nargs="+", help="two or more scenario YAML files")
    p.add_argument("--out", default=_default_out())
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("analyze", help="workspace / amplification / design analyses")
    p.add_argument("kind", choices=["workspace", "amplification", "design"])
    p.add_argument("--model", default=None, help="model YAML (workspace/amplification)")
    p.add_argument("--out", default=_default_out())
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pos-range", type=float, default=0.02, help="m, uniform half-range")
    p.add_argument("--att-range-deg", type=float, default=5.0)
    p.add_argument("--body-length", type=float, default=0.93)
    p.add_argument("--ratio", type=float, default=1.7)
    p.add_argument("--target-radius", type=float, default=0.5)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("rne-dump", help="dump per-link recursion wrenches as CSV")
    p.add_argument("model", help="model YAML file")
    p.add_argument("--q", default=None, help="comma-separated joint angles (rad)")
    p.add_argument("--dq", default=None)
    p.add_argument("--ddq", default=None)
    p.add_argument("--out", default=_default_out())
    p.set_defaults(func=_cmd_rne_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "analyze":
        if args.kind in ("workspace", "amplification") and not args.model:
            parser.error("analyze workspace/amplification requires --model")
        if args.samples is None:
            args.samples = 10000 if args.kind == "workspace" else 1000
    try:
        return args.func(args)
    except AeroManipError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
