"""Benchmark data: oval-track synthetic runs, chunk splitting, CSV files.

Every operation stamps the manifest with enough provenance (seeds or source
files, split parameters, standardization constants) to rebuild the dataset
exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "Dataset",
    "CSVSchema",
    "generate_nascar",
    "chunk_and_sample",
    "standardize",
    "destandardize",
    "write_csv",
    "load_csv",
    "load_bee_csv",
    "save_dataset",
    "load_dataset",
]


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass
class Dataset:
    """Observation sequences with optional ground-truth labels and provenance.

    Synthetic generators also attach their true latent trajectories; file
    loaders leave that field empty.
    """

    sequences: list[np.ndarray]
    labels: list[np.ndarray] | None
    manifest: dict = field(default_factory=dict)
    latents: list[np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.labels is not None:
            if len(self.labels) != len(self.sequences):
                raise DataError("label/sequence count mismatch")
            for i, (seq, lab) in enumerate(zip(self.sequences, self.labels)):
                if len(seq) != len(lab):
                    raise DataError(f"sequence {i}: label length mismatch")

    @property
    def obs_dim(self) -> int:
        return self.sequences[0].shape[1]

    @property
    def total_points(self) -> int:
        return sum(len(seq) for seq in self.sequences)


def _rng_provenance(rng_or_seed) -> tuple[np.random.Generator, dict]:
    if isinstance(rng_or_seed, np.random.Generator):
        return rng_or_seed, {"rng_state": json.loads(json.dumps(rng_or_seed.bit_generator.state))}
    return np.random.default_rng(rng_or_seed), {"seed": int(rng_or_seed)}


# ---------------------------------------------------------------------------
# synthetic oval-track runs
# ---------------------------------------------------------------------------

# track geometry: two half-turns around foci at (+-FOCUS, 0) joined by
# straights at y = +-RADIUS, traversed counterclockwise
_FOCUS = 10.0
_RADIUS = 5.0
_TURN_RATE = 0.05
_SPEED = _TURN_RATE * _RADIUS
_DYN_NOISE = 1e-2  # per-step standard deviation of the latent noise


def _oval_modes() -> list[tuple[np.ndarray, np.ndarray]]:
    """(A, a) per mode: 0 right turn, 1 left turn, 2 bottom ->, 3 top <-."""
    rot = np.array(
        [
            [math.cos(_TURN_RATE), -math.sin(_TURN_RATE)],
            [math.sin(_TURN_RATE), math.cos(_TURN_RATE)],
        ]
    )
    eye = np.eye(2)
    right = np.array([_FOCUS, 0.0])
    left = np.array([-_FOCUS, 0.0])
    return [
        (rot, (eye - rot) @ right),
        (rot, (eye - rot) @ left),
        (eye, np.array([_SPEED, 0.0])),
        (eye, np.array([-_SPEED, 0.0])),
    ]


def _next_mode(mode: int, pos: np.ndarray) -> int:
    if mode == 2 and pos[0] >= _FOCUS:
        return 0
    if mode == 0 and pos[0] <= _FOCUS and pos[1] > 0:
        return 3
    if mode == 3 and pos[0] <= -_FOCUS:
        return 1
    if mode == 1 and pos[0] >= -_FOCUS and pos[1] < 0:
        return 2
    return mode


def generate_nascar(
    runs: int,
    n_steps: int,
    obs_dim: int = 10,
    noise_scale: float = 0.1,
    rng: np.random.Generator | int = 0,
) -> Dataset:
    """Independent oval-track runs: four regimes in a 2-d latent space.

    A noise-free skeleton fixes the regime schedule (two half-turns, two
    straights); the latent trajectory follows the same per-regime linear
    maps with small Gaussian noise and is linearly projected to obs_dim
    dimensions with observation noise of the given scale.
    """
    if n_steps < 100:
        raise DataError("oval runs need at least 100 steps")
    if obs_dim < 2:
        raise DataError("obs_dim must be at least 2")
    rng, provenance = _rng_provenance(rng)
    dynamics = _oval_modes()
    projection = rng.standard_normal((obs_dim, 2))

    sequences, labels, latents = [], [], []
    for _ in range(runs):
        skeleton = np.array([-_FOCUS, -_RADIUS])  # start of the bottom straight
        mode = 2
        modes = np.zeros(n_steps, dtype=int)
        lat = np.zeros((n_steps, 2))
        lat[0] = skeleton
        modes[0] = mode
        for t in range(1, n_steps):
            mode = _next_mode(mode, skeleton)
            modes[t] = mode
            a_mat, a_vec = dynamics[mode]
            skeleton = a_mat @ skeleton + a_vec
            lat[t] = a_mat @ lat[t - 1] + a_vec + _DYN_NOISE * rng.standard_normal(2)
        obs = lat @ projection.T
        if noise_scale > 0:
            obs = obs + noise_scale * rng.standard_normal(obs.shape)
        sequences.append(obs)
        labels.append(modes)
        latents.append(lat)

    manifest = {
        "source": "nascar",
        "version": 1,
        "runs": runs,
        "n_steps": n_steps,
        "obs_dim": obs_dim,
        "noise_scale": noise_scale,
        "latent_bound": 20.0,
        **provenance,
    }
    return Dataset(
        sequences=sequences, labels=labels, manifest=manifest, latents=latents
    )


# ---------------------------------------------------------------------------
# chunk-and-sample protocol
# ---------------------------------------------------------------------------

def chunk_and_sample(
    dataset: Dataset,
    splits: int,
    fraction: float,
    rng: np.random.Generator | int = 0,
) -> Dataset:
    """Cut each run into equal contiguous chunks and keep a random subset.

    Each run yields `splits` chunks (tail remainder dropped); round(fraction
    * splits) of them, drawn without replacement per run, become independent
    sequences.  Chunks never mix material from different runs.
    """
    if not 0 < fraction <= 1:
        raise DataError("fraction must be in (0, 1]")
    shortest = min(len(seq) for seq in dataset.sequences)
    if splits > shortest:
        raise DataError(
            f"cannot cut {splits} chunks from a run of length {shortest}"
        )
    rng, provenance = _rng_provenance(rng)
    n_keep = round(fraction * splits)

    sequences, labels, latents, chosen_all = [], [], [], []
    for i, seq in enumerate(dataset.sequences):
        chunk_len = len(seq) // splits
        chosen = np.sort(rng.choice(splits, size=n_keep, replace=False))
        chosen_all.append(chosen.tolist())
        for j in chosen:
            sl = slice(j * chunk_len, (j + 1) * chunk_len)
            sequences.append(seq[sl].copy())
            if dataset.labels is not None:
                labels.append(dataset.labels[i][sl].copy())
            if dataset.latents is not None:
                latents.append(dataset.latents[i][sl].copy())

    manifest = dict(dataset.manifest)
    manifest["split"] = {
        "splits": splits,
        "fraction": fraction,
        "chunks_kept": chosen_all,
        **provenance,
    }
    return Dataset(
        sequences=sequences,
        labels=labels if dataset.labels is not None else None,
        manifest=manifest,
        latents=latents if dataset.latents is not None else None,
    )


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------

def standardize(dataset: Dataset) -> Dataset:
    """Zero mean, unit variance per feature over all pooled time steps."""
    pooled = np.vstack(dataset.sequences)
    mean = pooled.mean(axis=0)
    std = pooled.std(axis=0)
    bad = np.flatnonzero(std < 1e-12)
    if bad.size:
        raise DataError(f"zero-variance feature at index {bad[0]}")
    manifest = dict(dataset.manifest)
    manifest["standardize"] = {"mean": mean.tolist(), "std": std.tolist()}
    return Dataset(
        sequences=[(seq - mean) / std for seq in dataset.sequences],
        labels=dataset.labels,
        manifest=manifest,
    )


def destandardize(dataset: Dataset) -> Dataset:
    """Inverse of standardize, driven by the manifest record."""
    record = dataset.manifest.get("standardize")
    if record is None:
        raise DataError("dataset carries no standardization record")
    mean = np.asarray(record["mean"])
    std = np.asarray(record["std"])
    manifest = {k: v for k, v in dataset.manifest.items() if k != "standardize"}
    return Dataset(
        sequences=[seq * std + mean for seq in dataset.sequences],
        labels=dataset.labels,
        manifest=manifest,
    )


# ---------------------------------------------------------------------------
# CSV and manifest files
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CSVSchema:
    """Column layout: a sequence-id column, feature columns, optional labels.

    feature_cols = None takes every column that is neither the id nor the
    label, in header order.
    """

    seq_col: str = "seq"
    label_col: str = "label"
    feature_cols: tuple[str, ...] | None = None


def write_csv(dataset: Dataset, path: str | Path, schema: CSVSchema = CSVSchema()) -> None:
    """UTF-8 CSV with one row per time step; floats keep full precision."""
    path = Path(path)
    n_feat = dataset.obs_dim
    feature_cols = schema.feature_cols or tuple(f"f{j}" for j in range(n_feat))
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        header = [schema.seq_col, *feature_cols]
        if dataset.labels is not None:
            header.append(schema.label_col)
        writer.writerow(header)
        for i, seq in enumerate(dataset.sequences):
            for t in range(len(seq)):
                row = [str(i), *(repr(float(v)) for v in seq[t])]
                if dataset.labels is not None:
                    row.append(str(int(dataset.labels[i][t])))
                writer.writerow(row)


def _parse_rows(path: Path, schema: CSVSchema):
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if schema.seq_col not in header:
            raise DataError(f"{path}: missing sequence-id column {schema.seq_col!r}")
        seq_idx = header.index(schema.seq_col)
        label_idx = header.index(schema.label_col) if schema.label_col in header else None
        if schema.feature_cols is not None:
            missing = [c for c in schema.feature_cols if c not in header]
            if missing:
                raise DataError(f"{path}: missing feature columns {missing}")
            feat_idx = [header.index(c) for c in schema.feature_cols]
        else:
            feat_idx = [
                j for j in range(len(header)) if j != seq_idx and j != label_idx
            ]
        feat_names = [header[j] for j in feat_idx]
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {row_no} has {len(row)} cells, expected {len(header)}"
                )
            try:
                feats = [float(row[j]) for j in feat_idx]
            except ValueError:
                raise DataError(f"{path}: non-numeric cell at row {row_no}") from None
            label = None
            if label_idx is not None:
                try:
                    label = int(float(row[label_idx]))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric label at row {row_no}"
                    ) from None
            yield row[seq_idx], feats, label, feat_names


def load_csv(path: str | Path, schema: CSVSchema = CSVSchema()) -> Dataset:
    """Rows grouped by sequence id (order of first appearance) into sequences."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    groups: dict[str, list] = {}
    label_groups: dict[str, list] = {}
    have_labels = False
    feat_names: list[str] = []
    for seq_id, feats, label, feat_names in _parse_rows(path, schema):
        groups.setdefault(seq_id, []).append(feats)
        if label is not None:
            have_labels = True
            label_groups.setdefault(seq_id, []).append(label)
    if not groups:
        raise DataError(f"{path}: no data rows")
    sequences = [np.array(groups[k]) for k in groups]
    labels = [np.array(label_groups[k], dtype=int) for k in groups] if have_labels else None
    manifest = {
        "source": str(path),
        "version": 1,
        "feature_columns": feat_names,
        "sequence_ids": list(groups),
    }
    return Dataset(sequences=sequences, labels=labels, manifest=manifest)


def load_bee_csv(
    path: str | Path,
    seq_col: str = "seq",
    label_col: str = "label",
) -> Dataset:
    """Dance-trajectory ingestion: raw (x, y, theta) columns become the
    4-feature vector (cos theta, sin theta, x, y)."""
    raw = load_csv(
        path,
        CSVSchema(seq_col=seq_col, label_col=label_col, feature_cols=("x", "y", "theta")),
    )
    sequences = []
    for seq in raw.sequences:
        theta = seq[:, 2]
        sequences.append(
            np.column_stack([np.cos(theta), np.sin(theta), seq[:, 0], seq[:, 1]])
        )
    manifest = dict(raw.manifest)
    manifest["feature_columns"] = ["cos_theta", "sin_theta", "x", "y"]
    return Dataset(sequences=sequences, labels=raw.labels, manifest=manifest)


def save_dataset(dataset: Dataset, csv_path: str | Path) -> None:
    """CSV plus a JSON manifest sidecar next to it."""
    csv_path = Path(csv_path)
    write_csv(dataset, csv_path)
    sidecar = csv_path.with_suffix(".manifest.json")
    sidecar.write_text(json.dumps(dataset.manifest, indent=1), encoding="utf-8")


def load_dataset(csv_path: str | Path, schema: CSVSchema = CSVSchema()) -> Dataset:
    dataset = load_csv(csv_path, schema)
    sidecar = Path(csv_path).with_suffix(".manifest.json")
    if sidecar.exists():
        dataset.manifest = json.loads(sidecar.read_text(encoding="utf-8"))
    return dataset
