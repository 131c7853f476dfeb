"""Learning-curve summaries used by the desk-scale experiments.

Curves are per-episode sequences, usually already averaged over seeds.
Smoothing is a trailing moving average over full windows only, so the
smoothed value at index ``k`` summarises episodes ``k-w+1 .. k``.
"""
from __future__ import annotations

import numpy as np


def smooth(curve, window: int = 5) -> np.ndarray:
    c = np.asarray(curve, dtype=float)
    if window < 1 or window > len(c):
        raise ValueError(f"window {window} does not fit a curve of length {len(c)}")
    return np.convolve(c, np.ones(window) / window, mode="valid")


def head_tail_means(curve, k: int = 5) -> tuple[float, float]:
    c = np.asarray(curve, dtype=float)
    return float(np.mean(c[:k])), float(np.mean(c[-k:]))


def improvement_threshold(reference, fraction: float = 0.9, k: int = 5) -> float:
    """Return level covering ``fraction`` of the reference curve's head-to-tail gain."""
    first, last = head_tail_means(reference, k)
    return first + fraction * (last - first)


def episodes_to_reach(curve, threshold: float, window: int = 5) -> int | None:
    """1-based episode count at which the smoothed curve first reaches ``threshold``."""
    s = smooth(curve, window)
    hit = np.nonzero(s >= threshold)[0]
    return int(hit[0]) + window if len(hit) else None


def relative_decrease(curve, k: int = 3) -> float:
    """Fractional drop from the mean of the first ``k`` finite entries to the last ``k``."""
    c = np.asarray(curve, dtype=float)
    c = c[np.isfinite(c)]
    if len(c) < 2 * k:
        raise ValueError("not enough finite entries")
    first, last = float(np.mean(c[:k])), float(np.mean(c[-k:]))
    return (first - last) / first


def spearman(x, y) -> float:
    """Rank correlation with average ranks for ties; nan when either side is constant."""
    rx, ry = _ranks(x), _ranks(y)
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        return float("nan")
    return float(np.corrcoef(rx, ry)[0, 1])


def _ranks(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    ranks[order] = np.arange(len(v), dtype=float)
    for val in np.unique(v):
        idx = v == val
        ranks[idx] = ranks[idx].mean()
    return ranks
