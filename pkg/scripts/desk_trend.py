"""Desk-scale mode comparison (two UAVs, one or two hazards, 30 episodes).

    python scripts/desk_trend.py --zeta 0.99 --seeds 0 1 2 --out results/desk_trend_cli.json
"""
import argparse
import json
import sys
from pathlib import Path

from swarmfield.experiments import MODES, desk_sweep, summarize


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--zeta", type=float, default=0.99)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--out", type=Path)
    args = p.parse_args(argv)

    sweep, seconds = desk_sweep(args.zeta, tuple(args.seeds), MODES,
                                progress=lambda m, s: print(f"trained {m} seed {s}", file=sys.stderr))
    s = summarize(sweep)
    reach = s["episodes_to_threshold"]
    print(f"zeta {args.zeta}, {len(args.seeds)} seeds, {seconds:.0f}s")
    print(f"CTFDE-MPC first-5 {s['mpc_improvement']['first5']:.2f} -> last-5 {s['mpc_improvement']['last5']:.2f}")
    print(f"episodes to {reach['threshold']:.2f}: CTFDE-MPC {reach['ctfde-mpc']}, CTFDE {reach['ctfde']}")
    print("final means: " + ", ".join(f"{m} {v:.2f}" for m, v in s["final"].items()))
    m = s["model"]
    print(f"L_lambda drop {m['L_lambda_drop']:.2f}, L_mu drop {m['L_mu_drop']:.2f}, "
          f"Spearman(N) {m['N_spearman']:.2f}")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps({"zeta": args.zeta, "seeds": args.seeds, "seconds": seconds, **s,
                                        "runs": sweep}, indent=1, default=float), encoding="utf-8")


if __name__ == "__main__":
    main()
