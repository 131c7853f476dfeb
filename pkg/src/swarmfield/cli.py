"""Command line entry point: ``swarmfield {train,eval,generalize,render}``.

On failure every subcommand exits with status 1 and prints one JSON line
``{"error": <kind>, "message": <text>}`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import RunConfig, load_config

MODE_CHOICES = ["ctpde", "ctfde", "ctfde-mpc", "dec-ddpg"]


def _train(args):
    from .harness import train_run

    cfg = load_config(args.config) if args.config else RunConfig()
    train = {"mode": args.mode}
    if args.seed is not None:
        train["seed"] = args.seed
    cfg = cfg.with_overrides(train=train)
    res = train_run(cfg, args.out, progress=_progress if args.verbose else None)
    last = res.curve[-1]
    print(json.dumps({"out": str(args.out), "episodes": len(res.curve), "final_return": last["return"]}))


def _progress(row):
    print(f"episode {row['episode']:3d} return {row['return']:10.3f} collisions {row['collisions']}",
          file=sys.stderr)


def _eval(args):
    from .harness import evaluate_run

    m = evaluate_run(args.checkpoint, args.instances, args.interval, args.uavs, seed=args.seed, out_dir=args.out)
    print(json.dumps(m.summary(), sort_keys=True))


def _generalize(args):
    from .harness import generalize_run

    grid = generalize_run(args.checkpoint, uavs=args.uavs, intervals=args.interval, instances=args.instances,
                          seed=args.seed, out_dir=args.out)
    for (n, v), m in grid.items():
        print(json.dumps({"uavs": n, "interval": v, **m.summary()}, sort_keys=True))


def _render(args):
    from .artifacts import render_trajectory_svg
    from .harness import TrajectoryLog

    log = TrajectoryLog.from_json(Path(args.log).read_text(encoding="utf-8"))
    Path(args.out).write_text(render_trajectory_svg(log, args.projection), encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swarmfield", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a policy")
    t.add_argument("--config", type=Path)
    t.add_argument("--mode", choices=MODE_CHOICES, required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("-v", "--verbose", action="store_true")
    t.set_defaults(func=_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--instances", type=int, default=100)
    e.add_argument("--interval", type=int)
    e.add_argument("--uavs", type=int)
    e.add_argument("--seed", type=int, default=12345)
    e.add_argument("--out", type=Path, required=True)
    e.set_defaults(func=_eval)

    g = sub.add_parser("generalize", help="deploy a decentralised policy on larger swarms")
    g.add_argument("--checkpoint", type=Path, required=True)
    g.add_argument("--uavs", type=int, nargs="+", choices=[8, 10, 12], default=[8, 10, 12])
    g.add_argument("--interval", type=int, nargs="+", choices=[5, 10, 15], default=[5, 10, 15])
    g.add_argument("--instances", type=int, default=5)
    g.add_argument("--seed", type=int, default=12345)
    g.add_argument("--out", type=Path, required=True)
    g.set_defaults(func=_generalize)

    r = sub.add_parser("render", help="render a trajectory log to SVG")
    r.add_argument("--log", type=Path, required=True)
    r.add_argument("--projection", choices=["top", "iso"], default="top")
    r.add_argument("--out", type=Path, required=True)
    r.set_defaults(func=_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code:
            print(json.dumps({"error": "usage", "message": "invalid arguments"}), file=sys.stderr)
        return int(exc.code or 0)
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
