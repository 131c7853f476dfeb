"""Train a CTFDE policy at six UAVs, then deploy it unchanged on 8, 10 and 12.

    python scripts/generalize.py --episodes 30 --out runs/generalize
"""
import argparse
from pathlib import Path

from swarmfield.config import RunConfig
from swarmfield.harness import generalize_run, train_run


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--mode", default="ctfde", choices=["ctfde", "ctfde-mpc", "dec-ddpg"])
    p.add_argument("--episodes", type=int, default=30)
    p.add_argument("--steps", type=int, help="per-episode step cap (default env.t_max)")
    p.add_argument("--instances", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("runs/generalize"))
    args = p.parse_args(argv)

    cfg = RunConfig().with_overrides(train={"mode": args.mode, "episodes": args.episodes, "steps": args.steps,
                                            "seed": args.seed})
    train_run(cfg, args.out / "train")
    grid = generalize_run(args.out / "train", instances=args.instances, out_dir=args.out / "grid")
    print(f"{'I':>3} {'V':>3} {'return':>10} {'collisions':>10} {'ms/decision':>12}")
    for (n, v), m in grid.items():
        s = m.summary()
        print(f"{n:3d} {v:3d} {s['return_mean']:10.2f} {s['collisions_mean']:10.2f} "
              f"{s['per_uav_step_latency_s'] * 1e3:12.3f}")


if __name__ == "__main__":
    main()
