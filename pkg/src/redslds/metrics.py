"""Segmentation scoring against ground truth, plus fit reporting.

Sampled labels are arbitrary up to permutation, so scores are computed after
an optimal one-to-one assignment between predicted and true label sets;
surplus predicted labels earn no credit, which penalizes over-segmentation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = ["SegmentationScore", "match_labels", "score", "report", "format_report"]


@dataclass
class SegmentationScore:
    accuracy: float
    weighted_f1: float
    macro_f1: float
    matching: dict[int, int]
    confusion: np.ndarray

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "weighted_f1": self.weighted_f1,
            "macro_f1": self.macro_f1,
            "matching": {str(k): int(v) for k, v in self.matching.items()},
        }


def _confusion(pred, truth):
    pred_labels = np.unique(pred)
    true_labels = np.unique(truth)
    table = np.zeros((pred_labels.size, true_labels.size), dtype=int)
    pred_pos = np.searchsorted(pred_labels, pred)
    true_pos = np.searchsorted(true_labels, truth)
    np.add.at(table, (pred_pos, true_pos), 1)
    return table, pred_labels, true_labels


def match_labels(pred: np.ndarray, truth: np.ndarray) -> dict[int, int]:
    """One-to-one map from predicted to true labels maximizing matched count."""
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.size == 0 or pred.size != truth.size:
        raise ValueError("label sequences must be non-empty and equal-length")
    table, pred_labels, true_labels = _confusion(pred, truth)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return {int(pred_labels[r]): int(true_labels[c]) for r, c in zip(rows, cols)}


def score(pred: np.ndarray, truth: np.ndarray) -> SegmentationScore:
    """Accuracy and F1 aggregates after optimal label matching.

    F1 is computed per true class, then averaged unweighted (macro) and
    weighted by true support.
    """
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    matching = match_labels(pred, truth)
    table, pred_labels, true_labels = _confusion(pred, truth)

    relabeled = np.full(pred.size, -1, dtype=int)
    for pred_label, true_label in matching.items():
        relabeled[pred == pred_label] = true_label
    accuracy = float(np.mean(relabeled == truth))

    f1s, supports = [], []
    for true_label in true_labels:
        tp = np.sum((relabeled == true_label) & (truth == true_label))
        fp = np.sum((relabeled == true_label) & (truth != true_label))
        fn = np.sum((truth == true_label) & (relabeled != true_label))
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
        supports.append(np.sum(truth == true_label))
    f1s = np.array(f1s)
    supports = np.array(supports)
    return SegmentationScore(
        accuracy=accuracy,
        weighted_f1=float(np.sum(f1s * supports) / supports.sum()),
        macro_f1=float(f1s.mean()),
        matching=matching,
        confusion=table,
    )


def _chain_states(snapshots, burn_in: float, vote: str) -> np.ndarray:
    """Pooled predicted labels for one chain: final sample or majority vote."""
    if vote == "final":
        return np.concatenate([tr.states for tr in snapshots[-1].trajectories])
    usable = [s for s in snapshots if s.iteration > burn_in * snapshots[-1].iteration]
    usable = usable or [snapshots[-1]]
    stacked = np.stack(
        [np.concatenate([tr.states for tr in snap.trajectories]) for snap in usable]
    )
    num_modes = int(stacked.max()) + 1
    counts = np.stack([(stacked == k).sum(axis=0) for k in range(num_modes)])
    return counts.argmax(axis=0)


def report(
    chains: list[tuple[list, object]],
    dataset=None,
    burn_in: float = 0.5,
    vote: str = "final",
) -> dict:
    """Fit summary across chains: log-densities, evidence proxy, scores.

    chains holds (snapshots, diagnostics) pairs as returned by the fitter.
    With several chains each scalar carries mean and standard deviation;
    a single chain reports the value alone.
    """
    if vote not in ("final", "majority"):
        raise ValueError("vote must be 'final' or 'majority'")
    per_chain: dict[str, list[float]] = {
        "joint_log_density": [],
        "evidence_proxy": [],
    }
    scores = []
    truth = (
        np.concatenate(dataset.labels)
        if dataset is not None and dataset.labels is not None
        else None
    )
    for snapshots, diagnostics in chains:
        per_chain["joint_log_density"].append(
            diagnostics.joint_log_density[-1] if diagnostics.joint_log_density else float("nan")
        )
        per_chain["evidence_proxy"].append(
            diagnostics.evidence_proxy[-1] if diagnostics.evidence_proxy else float("nan")
        )
        if truth is not None:
            pred = _chain_states(snapshots, burn_in, vote)
            scores.append(score(pred, truth))

    def summarize(values):
        block = {"per_chain": list(map(float, values)), "mean": float(np.mean(values))}
        if len(values) > 1:
            block["std"] = float(np.std(values, ddof=1))
        return block

    out = {
        "n_chains": len(chains),
        "vote": vote,
        "joint_log_density": summarize(per_chain["joint_log_density"]),
        "evidence_proxy": summarize(per_chain["evidence_proxy"]),
    }
    if scores:
        for name in ("accuracy", "weighted_f1", "macro_f1"):
            out[name] = summarize([getattr(s, name) for s in scores])
    return out


def format_report(doc: dict) -> str:
    """Aligned-text rendering of a report dictionary."""
    rows = []
    for key in ("joint_log_density", "evidence_proxy", "accuracy", "weighted_f1", "macro_f1"):
        if key not in doc:
            continue
        block = doc[key]
        if "std" in block:
            value = f"{block['mean']:.6g} +- {block['std']:.3g}"
        else:
            value = f"{block['mean']:.6g}"
        rows.append((key, value))
    width = max(len(k) for k, _ in rows)
    lines = [f"chains: {doc['n_chains']}  (vote: {doc['vote']})"]
    lines += [f"{k.ljust(width)}  {v}" for k, v in rows]
    return "\n".join(lines)
