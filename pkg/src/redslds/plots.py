"""Report figures: diagnostics traces, segmentation timelines, latent clouds.

Rendered with the Agg backend straight to files; the delimited outputs stay
the canonical record, figures are the human-facing view of the same runs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_diagnostics_figure",
    "save_segmentation_figure",
    "save_latent_figure",
]

_PNG_META = {"Software": "redslds"}


def save_diagnostics_figure(diagnostics_per_chain, path: str | Path) -> None:
    """Joint log-density and evidence-proxy traces, one line per chain."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
    for i, diag in enumerate(diagnostics_per_chain):
        axes[0].plot(diag.joint_log_density, lw=0.8, label=f"chain {i}")
        axes[1].plot(diag.evidence_proxy, lw=0.8)
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("joint log-density")
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("evidence proxy")
    if len(diagnostics_per_chain) > 1:
        axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def save_segmentation_figure(
    final_states,
    truth_labels,
    path: str | Path,
    max_sequences: int = 4,
) -> None:
    """Timeline strips of sampled states (per chain) over each sequence.

    final_states: list over chains of lists of per-sequence state arrays.
    truth_labels: optional list of per-sequence label arrays.
    """
    n_seq = min(len(final_states[0]), max_sequences)
    n_chains = len(final_states)
    rows = n_chains + (1 if truth_labels is not None else 0)
    fig, axes = plt.subplots(
        n_seq, 1, figsize=(10, 1.0 + 0.7 * rows * n_seq), squeeze=False
    )
    for i in range(n_seq):
        strips = []
        names = []
        if truth_labels is not None:
            strips.append(truth_labels[i])
            names.append("truth")
        for c in range(n_chains):
            strips.append(final_states[c][i])
            names.append(f"chain {c}")
        ax = axes[i, 0]
        ax.imshow(
            np.stack(strips),
            aspect="auto",
            interpolation="nearest",
            cmap="tab10",
        )
        ax.set_yticks(range(len(names)))
        ax.set_yticklabels(names, fontsize=7)
        ax.set_ylabel(f"seq {i}", fontsize=8)
        if i == n_seq - 1:
            ax.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def save_latent_figure(trajectories, path: str | Path) -> None:
    """Sampled continuous latents colored by sampled state (first chain)."""
    fig, ax = plt.subplots(figsize=(6, 5))
    m_dim = trajectories[0].latents.shape[1]
    for tr in trajectories:
        if m_dim >= 2:
            ax.scatter(
                tr.latents[:, 0], tr.latents[:, 1], c=tr.states, s=2,
                cmap="tab10", linewidths=0,
            )
        else:
            ax.scatter(
                np.arange(len(tr.latents)), tr.latents[:, 0], c=tr.states, s=2,
                cmap="tab10", linewidths=0,
            )
    ax.set_xlabel("x[0]" if m_dim >= 2 else "t")
    ax.set_ylabel("x[1]" if m_dim >= 2 else "x")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
