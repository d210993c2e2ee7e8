"""Forecasting metrics and training-loss formulas.

Displacement metrics follow the usual benchmark definitions: the miss-rate
boundary is strict (an endpoint error of exactly 2.0 m is not a miss), ties
between modes resolve to the lowest index, and aggregation over scenes is an
unweighted mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

MISS_THRESHOLD = 2.0


def _check_modes(trajectories: np.ndarray) -> np.ndarray:
    trajectories = np.asarray(trajectories, dtype=np.float64)
    if trajectories.ndim != 3 or trajectories.shape[0] < 1:
        raise ValueError(f"expected K x T x 2 with K >= 1, got shape {trajectories.shape}")
    return trajectories


def min_ade(trajectories: np.ndarray, gt: np.ndarray) -> float:
    """Smallest mean pointwise L2 distance over modes."""
    trajectories = _check_modes(trajectories)
    d = np.linalg.norm(trajectories - np.asarray(gt)[None], axis=2).mean(axis=1)
    return float(d.min())


def min_fde(trajectories: np.ndarray, gt: np.ndarray) -> float:
    """Endpoint L2 distance of the closest-endpoint mode."""
    trajectories = _check_modes(trajectories)
    d = np.linalg.norm(trajectories[:, -1, :] - np.asarray(gt)[-1], axis=1)
    return float(d.min())


def best_mode(trajectories: np.ndarray, gt: np.ndarray) -> int:
    """Index of the closest-endpoint mode; ties go to the lowest index."""
    trajectories = _check_modes(trajectories)
    d = np.linalg.norm(trajectories[:, -1, :] - np.asarray(gt)[-1], axis=1)
    return int(d.argmin())


def miss_rate(final_errors, threshold: float = MISS_THRESHOLD) -> float:
    """Fraction of scenes whose best endpoint error strictly exceeds the threshold."""
    errors = np.asarray(list(final_errors), dtype=np.float64)
    if errors.size == 0:
        raise ValueError("at least one scene required")
    return float((errors > threshold).mean())


def brier(p_best: float) -> float:
    if not 0.0 <= p_best <= 1.0:
        raise ValueError(f"probability must be in [0, 1], got {p_best}")
    return (1.0 - p_best) ** 2


def brier_min_fde(fde: float, p_best: float) -> float:
    return fde + brier(p_best)


def huber(pred, gt, delta: float) -> float:
    """Mean elementwise Huber loss: quadratic within delta, linear beyond."""
    if delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    e = np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64))
    quad = 0.5 * e ** 2
    lin = delta * (e - 0.5 * delta)
    return float(np.where(e <= delta, quad, lin).mean())


def winner_takes_all_select(candidates: np.ndarray, gt: np.ndarray) -> int:
    """Index with minimum mean displacement error; ties go to the lowest index."""
    candidates = _check_modes(candidates)
    d = np.linalg.norm(candidates - np.asarray(gt)[None], axis=2).mean(axis=1)
    return int(d.argmin())


def max_margin(scores, positive: int, margin: float) -> float:
    """Hinge loss of the positive score against the other modes' scores."""
    scores = np.asarray(scores, dtype=np.float64)
    k = scores.shape[0]
    if not 0 <= positive < k:
        raise ValueError(f"positive index {positive} out of range for {k} scores")
    if k == 1:
        return 0.0
    others = np.delete(scores, positive)
    return float(np.maximum(0.0, others - scores[positive] + margin).sum() / (k - 1))


def total_loss(l_irl: float, l_ogm: float, l_reg: float, l_cls: float,
               alpha: float = 1.0, beta: float = 1.0, gamma: float = 1.0) -> float:
    return l_irl + alpha * l_ogm + beta * l_reg + gamma * l_cls


@dataclass
class SceneMetrics:
    min_ade: float
    min_fde: float
    missed: bool
    best_prob: float
    brier: float
    brier_min_fde: float


@dataclass
class MetricReport:
    n_scenes: int
    k: int
    min_ade: float
    min_fde: float
    miss_rate: float
    brier: float
    brier_min_fde: float


def score_forecast(trajectories: np.ndarray, probs: np.ndarray, gt: np.ndarray,
                   threshold: float = MISS_THRESHOLD) -> SceneMetrics:
    """Per-scene metrics for a K-mode forecast against one GT future."""
    fde = min_fde(trajectories, gt)
    p_best = float(np.asarray(probs)[best_mode(trajectories, gt)])
    return SceneMetrics(
        min_ade=min_ade(trajectories, gt),
        min_fde=fde,
        missed=fde > threshold,
        best_prob=p_best,
        brier=brier(p_best),
        brier_min_fde=brier_min_fde(fde, p_best),
    )


def aggregate(scene_metrics, k: int) -> MetricReport:
    """Unweighted mean over scenes."""
    ms = list(scene_metrics)
    if not ms:
        raise ValueError("at least one scene required")
    return MetricReport(
        n_scenes=len(ms),
        k=k,
        min_ade=float(np.mean([m.min_ade for m in ms])),
        min_fde=float(np.mean([m.min_fde for m in ms])),
        miss_rate=float(np.mean([m.missed for m in ms])),
        brier=float(np.mean([m.brier for m in ms])),
        brier_min_fde=float(np.mean([m.brier_min_fde for m in ms])),
    )


def report_to_dict(report: MetricReport) -> dict:
    return {
        "n_scenes": report.n_scenes,
        "k": report.k,
        "min_ade": report.min_ade,
        "min_fde": report.min_fde,
        "miss_rate": report.miss_rate,
        "brier": report.brier,
        "brier_min_fde": report.brier_min_fde,
    }


def write_report_json(path, reports: dict) -> None:
    payload = {name: report_to_dict(r) for name, r in reports.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def format_report_table(reports: dict) -> str:
    """Aligned-column text table, one row per named report."""
    headers = ["method", "n", "MR", "minADE", "minFDE", "brier-minFDE", "Brier"]
    rows = []
    for name, r in reports.items():
        rows.append([name, str(r.n_scenes), f"{r.miss_rate:.4f}", f"{r.min_ade:.4f}",
                     f"{r.min_fde:.4f}", f"{r.brier_min_fde:.4f}", f"{r.brier:.4f}"])
    widths = [max([len(h)] + [len(row[i]) for row in rows]) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines) + "\n"
