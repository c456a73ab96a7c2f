"""Evaluation: cumulative IoU, click-count-to-threshold, score regression,
and PRM-based mask filtering."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .env import Task
from .errors import DegenerateInputError, MaskShapeError
from .expert import next_click
from .policy import Prm, prm_score
from .raster import BitMask, iou
from .segmenters import Segmenter


def ciou(pairs: Sequence[tuple[BitMask, BitMask]]) -> float:
    """Cumulative IoU: summed intersections over summed unions.

    Unlike a mean of per-pair IoUs, large objects dominate small ones.
    """
    if not pairs:
        raise DegenerateInputError("ciou needs at least one (pred, gt) pair")
    inter_sum = 0
    union_sum = 0
    for pred, gt in pairs:
        if pred.shape != gt.shape:
            raise MaskShapeError(f"pair shape mismatch: {pred.shape} vs {gt.shape}")
        inter_sum += int(np.count_nonzero(pred.data & gt.data))
        union_sum += int(np.count_nonzero(pred.data | gt.data))
    if union_sum == 0:
        raise DegenerateInputError("ciou undefined: all masks empty")
    return inter_sum / union_sum


def noc(
    task: Task,
    segmenter: Segmenter,
    target_iou: float = 0.95,
    cap: int = 20,
) -> tuple[int, bool]:
    """Number of expert clicks needed to reach target_iou.

    Runs the raw expert loop (no low-impact pruning) from an empty mask
    and returns (clicks used, reached flag); a run that exhausts ``cap``
    clicks without reaching the target returns (cap, False).
    """
    if not (0.0 < target_iou <= 1.0):
        raise ValueError(f"target_iou out of (0, 1]: {target_iou}")
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    pred = BitMask.zeros(task.image.width, task.image.height)
    clicks = []
    for used in range(cap):
        if iou(pred, task.target) >= target_iou:
            return used, True
        action = next_click(pred, task.target)
        if action is None:
            return used, True  # pred equals the target exactly
        clicks.append(action)
        pred = segmenter.segment(task, clicks, None)
    return cap, iou(pred, task.target) >= target_iou


def noc_histogram(counts: Sequence[int]) -> list[tuple[int, int]]:
    """Click-count frequencies, ascending, for the complexity report."""
    freq: dict[int, int] = {}
    for c in counts:
        freq[c] = freq.get(c, 0) + 1
    return sorted(freq.items())


def regression_metrics(pred: Sequence[float], truth: Sequence[float]) -> dict[str, float]:
    """MAE, MSE, Pearson and Spearman correlation between paired scores.

    Spearman uses average ranks for ties. Zero variance on either side
    leaves the correlations undefined and raises.
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.ndim != 1 or t.ndim != 1 or p.shape != t.shape:
        raise ValueError(f"paired 1-d inputs required, got {p.shape} vs {t.shape}")
    if p.size < 2:
        raise DegenerateInputError("need at least two pairs")
    if p.std() == 0.0 or t.std() == 0.0:
        raise DegenerateInputError("zero variance input: correlations undefined")
    diff = p - t
    mae = float(np.mean(np.abs(diff)))
    mse = float(np.mean(diff * diff))
    pearson = float(np.corrcoef(p, t)[0, 1])
    rp = rankdata(p, method="average")
    rt = rankdata(t, method="average")
    spearman = float(np.corrcoef(rp, rt)[0, 1])
    return {"mae": mae, "mse": mse, "pearson": pearson, "spearman": spearman}


def filter_masks(
    prm: Prm,
    pairs: Sequence[tuple[Task, BitMask]],
    threshold: float,
) -> tuple[list[tuple[Task, BitMask]], list[tuple[Task, BitMask]]]:
    """Split (task, mask) pairs into (kept, rejected) by PRM score.

    Scores >= threshold stay; input order is preserved on both sides.
    """
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold out of [0, 1]: {threshold}")
    kept: list[tuple[Task, BitMask]] = []
    rejected: list[tuple[Task, BitMask]] = []
    for task, mask in pairs:
        if prm_score(prm, task, mask) >= threshold:
            kept.append((task, mask))
        else:
            rejected.append((task, mask))
    return kept, rejected
