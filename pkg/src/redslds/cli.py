"""Command-line entry point: generate, fit, evaluate.

Runs are driven by a single JSON config with model, priors, run and data
blocks; a seed is mandatory and every derived random stream is spawned from
it, so rerunning a command reproduces its outputs byte for byte.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .data import (
    CSVSchema,
    DataError,
    Dataset,
    chunk_and_sample,
    generate_nascar,
    load_bee_csv,
    load_dataset,
    save_dataset,
    standardize,
)
from .distributions import MNIWParams, NumericalAbort
from .gibbs import Priors, fit
from .metrics import format_report, report, score
from .model import ModelConfig
from .plots import (
    save_diagnostics_figure,
    save_latent_figure,
    save_segmentation_figure,
)

__all__ = ["ConfigError", "RunConfig", "build_priors", "main"]


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


_PRIOR_DEFAULTS = {
    # first factor pair configures the emission prior (observation space),
    # second the dynamics prior (latent space after projection)
    "emission_v0": 1.0,
    "dynamics_v0": 1.0,
    "emission_s0_factor": 0.075 * 0.75,
    "dynamics_s0_factor": 0.75 * 0.75,
    "emission_n0_offset": 2.0,
    "dynamics_n0_offset": 2.0,
    "state_reg_cov": 1.0,
    "dur_reg_cov": 1e4,
    "dirichlet_alpha": 1.0,
    "duration_alpha": 1.0,
}

_RUN_DEFAULTS = {
    "iterations": 500,
    "burn_in": 0.5,
    "chains": 1,
    "init_scheme": "I",
    "snapshot_every": 10,
    "vote": "final",
}

_DATA_DEFAULTS = {
    "source": "nascar",
    "runs": 10,
    "T": 12_000,
    "obs_dim": 10,
    "noise_scale": 0.1,
    "splits": 5,
    "fraction": 0.8,
    "standardize": False,
    "csv_path": None,
    "bee_format": False,
}


class RunConfig:
    """Validated view over the JSON config document."""

    def __init__(self, doc: dict):
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
        model = doc.get("model", {})
        try:
            self.model = ModelConfig.from_variant(
                model.get("variant", "redslds"),
                num_modes=int(model.get("num_modes", 4)),
                latent_dim=int(model.get("latent_dim", 2)),
                obs_dim=int(model.get("obs_dim", 10)),
                max_duration=int(model.get("max_duration", 50)),
                shared_emissions=bool(model.get("shared_emissions", True)),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

        self.priors = {**_PRIOR_DEFAULTS, **doc.get("priors", {})}
        unknown = set(self.priors) - set(_PRIOR_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown prior keys: {sorted(unknown)}")
        for key, value in self.priors.items():
            if not isinstance(value, (int, float)) or value <= 0:
                raise ConfigError(f"prior {key} must be a positive number")

        self.run = {**_RUN_DEFAULTS, **doc.get("run", {})}
        if "seed" not in self.run:
            raise ConfigError("run.seed is mandatory")
        self.run["seed"] = int(self.run["seed"])
        if self.run["init_scheme"] not in ("I", "II"):
            raise ConfigError("run.init_scheme must be 'I' or 'II'")
        if not 0 <= float(self.run["burn_in"]) < 1:
            raise ConfigError("run.burn_in must be in [0, 1)")
        if int(self.run["iterations"]) < 0 or int(self.run["chains"]) < 1:
            raise ConfigError("run.iterations must be >= 0 and run.chains >= 1")

        self.data = {**_DATA_DEFAULTS, **doc.get("data", {})}
        if self.data["source"] not in ("nascar", "csv"):
            raise ConfigError("data.source must be 'nascar' or 'csv'")
        if self.data["source"] == "csv" and not self.data["csv_path"]:
            raise ConfigError("data.csv_path is required for data.source='csv'")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"no such config file: {path}")
        try:
            return cls(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def build_priors(dataset: Dataset, model: ModelConfig, prior_cfg: dict) -> Priors:
    """Data-driven prior scales: empirical covariances of the observations
    and of their principal-component projection."""
    from .gibbs import pca_project

    pooled = np.vstack(dataset.sequences)
    n_dim, m_dim = model.obs_dim, model.latent_dim
    if pooled.shape[1] != n_dim:
        raise ConfigError(
            f"model.obs_dim={n_dim} but data has {pooled.shape[1]} features"
        )
    obs_cov = np.cov(pooled.T).reshape(n_dim, n_dim)
    obs_cov += 1e-8 * np.trace(obs_cov) / n_dim * np.eye(n_dim)
    projected, _, _ = pca_project(dataset.sequences, m_dim)
    pca_cov = np.cov(np.vstack(projected).T).reshape(m_dim, m_dim)
    pca_cov += 1e-8 * np.trace(pca_cov) / m_dim * np.eye(m_dim)

    return Priors(
        dynamics=MNIWParams(
            m0=np.zeros((m_dim, m_dim + 1)),
            v0=prior_cfg["dynamics_v0"] * np.eye(m_dim + 1),
            s0=prior_cfg["dynamics_s0_factor"] * pca_cov,
            n0=m_dim + prior_cfg["dynamics_n0_offset"],
        ),
        emissions=MNIWParams(
            m0=np.zeros((n_dim, m_dim + 1)),
            v0=prior_cfg["emission_v0"] * np.eye(m_dim + 1),
            s0=prior_cfg["emission_s0_factor"] * obs_cov,
            n0=n_dim + prior_cfg["emission_n0_offset"],
        ),
        state_row_cov=prior_cfg["state_reg_cov"] * np.eye(m_dim + 1),
        dur_row_cov=prior_cfg["dur_reg_cov"] * np.eye(m_dim + 1),
        trans_alpha=prior_cfg["dirichlet_alpha"],
        dur_alpha=prior_cfg["duration_alpha"],
        init_mu_cov=np.eye(m_dim),
        init_sigma_scale=pca_cov,
        init_sigma_dof=m_dim + 2.0,
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _load_input_dataset(cfg: RunConfig, data_path: str | None) -> Dataset:
    path = data_path or cfg.data["csv_path"]
    if path is None:
        raise DataError("no data path: pass --data or set data.csv_path")
    if cfg.data["bee_format"]:
        dataset = load_bee_csv(path)
    else:
        dataset = load_dataset(path)
    if cfg.data["standardize"]:
        dataset = standardize(dataset)
    return dataset


def cmd_generate(cfg: RunConfig, out_dir: Path) -> int:
    seeds = np.random.SeedSequence(cfg.run["seed"]).spawn(2)
    block = cfg.data
    dataset = generate_nascar(
        runs=int(block["runs"]),
        n_steps=int(block["T"]),
        obs_dim=int(block["obs_dim"]),
        noise_scale=float(block["noise_scale"]),
        rng=np.random.default_rng(seeds[0]),
    )
    dataset.manifest["seed"] = cfg.run["seed"]
    dataset = chunk_and_sample(
        dataset,
        int(block["splits"]),
        float(block["fraction"]),
        rng=np.random.default_rng(seeds[1]),
    )
    if block["standardize"]:
        dataset = standardize(dataset)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, out_dir / "data.csv")
    print(
        f"wrote {len(dataset.sequences)} sequences, "
        f"{dataset.total_points} points to {out_dir / 'data.csv'}"
    )
    return 0


def _write_diagnostics_csv(path: Path, diagnostics_per_chain, num_modes: int) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["chain", "iteration", "joint_log_density", "evidence_proxy"]
            + [f"occupancy{k}" for k in range(num_modes)]
            + ["jitter_retries"]
        )
        for c, diag in enumerate(diagnostics_per_chain):
            for i in range(len(diag.joint_log_density)):
                writer.writerow(
                    [c, i + 1, repr(diag.joint_log_density[i]),
                     repr(diag.evidence_proxy[i])]
                    + [int(v) for v in diag.occupancy[i]]
                    + [diag.jitter_retries[i]]
                )


def _write_segmentation_csv(path: Path, states_per_chain) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["chain", "seq", "t", "state", "duration"])
        for c, trajectories in enumerate(states_per_chain):
            for i, tr in enumerate(trajectories):
                for t in range(len(tr.states)):
                    writer.writerow(
                        [c, i, t, int(tr.states[t]), int(tr.durations[t])]
                    )


def cmd_fit(cfg: RunConfig, data_path: str | None, out_dir: Path) -> int:
    dataset = _load_input_dataset(cfg, data_path)
    priors = build_priors(dataset, cfg.model, cfg.priors)
    out_dir.mkdir(parents=True, exist_ok=True)

    n_chains = int(cfg.run["chains"])
    seeds = np.random.SeedSequence(cfg.run["seed"]).spawn(n_chains)
    chains = []
    for c in range(n_chains):
        snapshots, diagnostics = fit(
            dataset.sequences,
            cfg.model,
            priors,
            n_iter=int(cfg.run["iterations"]),
            scheme=cfg.run["init_scheme"],
            rng=np.random.default_rng(seeds[c]),
            snapshot_every=int(cfg.run["snapshot_every"]),
            checkpoint_path=out_dir / f"chain{c}.checkpoint.json",
        )
        chains.append((snapshots, diagnostics))
        print(
            f"chain {c}: {cfg.run['iterations']} iterations, "
            f"final joint log-density "
            f"{diagnostics.joint_log_density[-1] if diagnostics.joint_log_density else float('nan'):.6g}"
        )

    doc = report(
        chains, dataset, burn_in=float(cfg.run["burn_in"]), vote=cfg.run["vote"]
    )
    (out_dir / "report.json").write_text(
        json.dumps(doc, indent=1), encoding="utf-8"
    )
    text = format_report(doc)
    (out_dir / "report.txt").write_text(text + "\n", encoding="utf-8")
    print(text)

    _write_diagnostics_csv(
        out_dir / "diagnostics.csv", [d for _, d in chains], cfg.model.num_modes
    )
    _write_segmentation_csv(
        out_dir / "segmentation.csv", [snaps[-1].trajectories for snaps, _ in chains]
    )
    save_diagnostics_figure([d for _, d in chains], out_dir / "fig_diagnostics.png")
    save_segmentation_figure(
        [[tr.states for tr in snaps[-1].trajectories] for snaps, _ in chains],
        dataset.labels,
        out_dir / "fig_segmentation.png",
    )
    save_latent_figure(chains[0][0][-1].trajectories, out_dir / "fig_latents.png")
    return 0


def _read_segmentation(path: Path) -> dict[tuple[str, str], list[tuple[int, int]]]:
    groups: dict[tuple[str, str], list[tuple[int, int]]] = {}
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or "state" not in reader.fieldnames:
            raise DataError(f"{path}: expected a segmentation CSV with a 'state' column")
        for row in reader:
            key = (row.get("chain", "0"), row["seq"])
            groups.setdefault(key, []).append((int(row["t"]), int(row["state"])))
    out = {}
    for key, rows in groups.items():
        rows.sort()
        out[key] = np.array([s for _, s in rows])
    return out


def cmd_evaluate(pred_path: Path, truth_path: Path, out_dir: Path | None) -> int:
    pred_groups = _read_segmentation(pred_path)
    truth = load_dataset(truth_path)
    if truth.labels is None:
        raise DataError(f"{truth_path}: no label column to evaluate against")

    chains = sorted({chain for chain, _ in pred_groups})
    results = []
    for chain in chains:
        seqs = sorted(
            (seq for c, seq in pred_groups if c == chain), key=lambda s: int(s)
        )
        if len(seqs) != len(truth.labels):
            raise DataError(
                f"chain {chain}: {len(seqs)} predicted sequences vs "
                f"{len(truth.labels)} in the truth file"
            )
        preds = []
        for seq_id, labels in zip(seqs, truth.labels):
            pred = pred_groups[(chain, seq_id)]
            if len(pred) != len(labels):
                raise DataError(
                    f"sequence {seq_id}: predicted length {len(pred)} vs "
                    f"truth length {len(labels)}"
                )
            preds.append(pred)
        results.append(score(np.concatenate(preds), np.concatenate(truth.labels)))

    doc = {
        "per_chain": [r.to_dict() for r in results],
        "accuracy_mean": float(np.mean([r.accuracy for r in results])),
        "weighted_f1_mean": float(np.mean([r.weighted_f1 for r in results])),
        "macro_f1_mean": float(np.mean([r.macro_f1 for r in results])),
    }
    rendered = json.dumps(doc, indent=1)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "evaluation.json").write_text(rendered, encoding="utf-8")
    print(rendered)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="redslds",
        description="Switching linear dynamical systems with recurrent durations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=None)

    fit_cmd = sub.add_parser("fit", help="run Gibbs chains on a dataset")
    fit_cmd.add_argument("--config", required=True)
    fit_cmd.add_argument("--data", default=None)
    fit_cmd.add_argument("--out", required=True)
    fit_cmd.add_argument("--seed", type=int, default=None)
    fit_cmd.add_argument("--chains", type=int, default=None)
    fit_cmd.add_argument("--iters", type=int, default=None)

    ev = sub.add_parser("evaluate", help="score a segmentation against labels")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--out", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "evaluate":
            return cmd_evaluate(
                Path(args.pred),
                Path(args.truth),
                Path(args.out) if args.out else None,
            )
        cfg = RunConfig.from_file(args.config)
        if args.seed is not None:
            cfg.run["seed"] = args.seed
        if args.command == "generate":
            return cmd_generate(cfg, Path(args.out))
        if getattr(args, "chains", None) is not None:
            cfg.run["chains"] = args.chains
        if getattr(args, "iters", None) is not None:
            cfg.run["iterations"] = args.iters
        return cmd_fit(cfg, args.data, Path(args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
