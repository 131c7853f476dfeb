"""Desk-scale mode comparison: train every mode over several seeds and summarise."""
from __future__ import annotations

import time
import warnings

import numpy as np

from . import trends
from .config import desk_config
from .harness import train_run

MODES = ("ctfde-mpc", "ctfde", "dec-ddpg")


def desk_sweep(zeta: float = 0.99, seeds=(0, 1, 2), modes=MODES, progress=None) -> tuple[dict, float]:
    """Return ``({mode: [per-seed curves]}, seconds)``; curves hold returns and model logs."""
    out = {}
    t0 = time.perf_counter()
    for mode in modes:
        runs = []
        for seed in seeds:
            cfg = desk_config(mode, seed).with_overrides(agent={"zeta": zeta})
            res = train_run(cfg)
            runs.append({"return": [r["return"] for r in res.curve],
                         "L_lambda": [r["L_lambda"] for r in res.mbrl],
                         "L_mu": [r["L_mu"] for r in res.mbrl],
                         "mean_N": [r["mean_N"] for r in res.mbrl]})
            if progress is not None:
                progress(mode, seed)
        out[mode] = runs
    return out, time.perf_counter() - t0


def mean_curve(runs, key) -> np.ndarray:
    # episodes before the replay buffer fills have no model losses in any seed
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(np.array([r[key] for r in runs], dtype=float), axis=0)


def summarize(sweep: dict) -> dict:
    """Seed-averaged curves and the learning-trend quantities compared across modes."""
    ret = {m: mean_curve(runs, "return") for m, runs in sweep.items()}
    mpc = sweep["ctfde-mpc"]
    l_lam, l_mu, n_mean = (mean_curve(mpc, k) for k in ("L_lambda", "L_mu", "mean_N"))
    first, last = trends.head_tail_means(ret["ctfde-mpc"])
    threshold = trends.improvement_threshold(ret["ctfde"])
    finite_n = n_mean[np.isfinite(n_mean)]
    return {
        "curves": {m: c.tolist() for m, c in ret.items()},
        "mbrl": {"L_lambda": l_lam.tolist(), "L_mu": l_mu.tolist(), "mean_N": n_mean.tolist()},
        "mpc_improvement": {"first5": first, "last5": last},
        "episodes_to_threshold": {"threshold": threshold,
                                  "ctfde-mpc": trends.episodes_to_reach(ret["ctfde-mpc"], threshold),
                                  "ctfde": trends.episodes_to_reach(ret["ctfde"], threshold)},
        "final": {m: trends.head_tail_means(c)[1] for m, c in ret.items()},
        "model": {"L_lambda_drop": trends.relative_decrease(l_lam), "L_mu_drop": trends.relative_decrease(l_mu),
                  "N_spearman": trends.spearman(np.arange(len(finite_n)), finite_n)},
    }
