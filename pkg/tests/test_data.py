import numpy as np
import pytest

from redslds.data import (
    CSVSchema,
    DataError,
    Dataset,
    chunk_and_sample,
    destandardize,
    generate_nascar,
    load_bee_csv,
    load_csv,
    load_dataset,
    save_dataset,
    standardize,
    write_csv,
)


class TestGenerator:
    def test_latent_bound_and_occupancy(self):
        data = generate_nascar(1, 12_000, obs_dim=10, noise_scale=0.1, rng=7)
        assert np.abs(data.latents[0]).max() < data.manifest["latent_bound"]
        labels = data.labels[0]
        occupancy = np.bincount(labels, minlength=4) / len(labels)
        assert occupancy.min() > 0.05

    def test_zero_noise_rank_two(self):
        data = generate_nascar(1, 500, obs_dim=10, noise_scale=0.0, rng=11)
        seq = data.sequences[0]
        centered = seq - seq.mean(axis=0)
        svals = np.linalg.svd(centered, compute_uv=False)
        assert svals[2] < 1e-10 * svals[0]

    def test_segments_have_plausible_lengths(self):
        data = generate_nascar(1, 3_000, obs_dim=4, noise_scale=0.1, rng=5)
        labels = data.labels[0]
        runs = []
        start = 0
        for t in range(1, len(labels)):
            if labels[t] != labels[t - 1]:
                runs.append(t - start)
                start = t
        runs = np.array(runs)
        # half-turns take pi/0.05 ~ 63 steps, straights 2*20/0.25 = 80
        assert runs.min() > 40
        assert runs.max() < 110

    def test_manifest_reproducibility(self):
        a = generate_nascar(2, 300, obs_dim=5, noise_scale=0.2, rng=42)
        b = generate_nascar(2, 300, obs_dim=5, noise_scale=0.2, rng=42)
        assert all(
            np.array_equal(x, y) for x, y in zip(a.sequences, b.sequences)
        )
        assert a.manifest["seed"] == 42

    def test_rejects_tiny_runs(self):
        with pytest.raises(DataError):
            generate_nascar(1, 50, rng=0)
        with pytest.raises(DataError):
            generate_nascar(1, 500, obs_dim=1, rng=0)


class TestChunkAndSample:
    def test_split5_keep4(self):
        data = generate_nascar(1, 12_000, obs_dim=3, noise_scale=0.1, rng=2)
        out = chunk_and_sample(data, 5, 0.8, rng=3)
        assert len(out.sequences) == 4
        assert all(len(seq) == 2_400 for seq in out.sequences)
        assert all(len(lab) == 2_400 for lab in out.labels)

    def test_full_fraction_keeps_everything(self):
        data = generate_nascar(1, 1_001, obs_dim=3, noise_scale=0.1, rng=2)
        out = chunk_and_sample(data, 5, 1.0, rng=3)
        assert len(out.sequences) == 5
        assert sum(len(s) for s in out.sequences) == 1_000  # remainder dropped

    def test_chunks_are_contiguous_slices(self):
        rng = np.random.default_rng(4)
        seq = rng.standard_normal((100, 2))
        data = Dataset([seq], [np.arange(100)], {"source": "test"})
        out = chunk_and_sample(data, 4, 1.0, rng=5)
        for chunk, chunk_labels in zip(out.sequences, out.labels):
            start = chunk_labels[0]
            assert np.array_equal(chunk_labels, np.arange(start, start + 25))
            assert np.array_equal(chunk, seq[start : start + 25])

    def test_determinism(self):
        data = generate_nascar(2, 1_000, obs_dim=3, noise_scale=0.1, rng=2)
        a = chunk_and_sample(data, 10, 0.8, rng=9)
        b = chunk_and_sample(data, 10, 0.8, rng=9)
        assert all(np.array_equal(x, y) for x, y in zip(a.sequences, b.sequences))

    def test_oversized_split_rejected(self):
        data = Dataset([np.zeros((10, 1))], None, {})
        with pytest.raises(DataError, match="20"):
            chunk_and_sample(data, 20, 0.8, rng=0)


class TestStandardize:
    def test_pooled_moments(self):
        rng = np.random.default_rng(6)
        data = Dataset(
            [5 + 2 * rng.standard_normal((300, 3)), rng.standard_normal((200, 3))],
            None,
            {},
        )
        out = standardize(data)
        pooled = np.vstack(out.sequences)
        assert np.abs(pooled.mean(axis=0)).max() < 1e-12
        assert np.abs(pooled.var(axis=0) - 1.0).max() < 1e-10

    def test_idempotent(self):
        rng = np.random.default_rng(7)
        data = Dataset([rng.standard_normal((100, 2))], None, {})
        once = standardize(data)
        twice = standardize(once)
        for a, b in zip(once.sequences, twice.sequences):
            assert np.abs(a - b).max() < 1e-12

    def test_round_trip(self):
        rng = np.random.default_rng(8)
        data = Dataset([3 + rng.standard_normal((100, 2))], None, {})
        back = destandardize(standardize(data))
        assert np.abs(back.sequences[0] - data.sequences[0]).max() < 1e-10

    def test_constant_feature_aborts(self):
        seqs = [np.column_stack([np.ones(50), np.arange(50.0)])]
        with pytest.raises(DataError, match="index 0"):
            standardize(Dataset(seqs, None, {}))


class TestCSV:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(9)
        data = Dataset(
            [rng.standard_normal((40, 3)), rng.standard_normal((25, 3))],
            [rng.integers(0, 4, 40), rng.integers(0, 4, 25)],
            {"source": "synthetic"},
        )
        path = tmp_path / "data.csv"
        write_csv(data, path)
        loaded = load_csv(path)
        assert len(loaded.sequences) == 2
        for a, b in zip(loaded.sequences, data.sequences):
            assert np.abs(a - b).max() < 1e-12
        for a, b in zip(loaded.labels, data.labels):
            assert np.array_equal(a, b)

    def test_sequence_grouping(self, tmp_path):
        path = tmp_path / "two.csv"
        path.write_text("seq,f0\nA,1.0\nA,2.0\nB,3.0\n", encoding="utf-8")
        loaded = load_csv(path)
        assert [len(s) for s in loaded.sequences] == [2, 1]

    def test_bee_features(self, tmp_path):
        path = tmp_path / "bee.csv"
        path.write_text(
            "seq,x,y,theta,label\n0,2.0,3.0,0.0,1\n0,2.5,3.5,1.5707963267948966,2\n",
            encoding="utf-8",
        )
        loaded = load_bee_csv(path)
        assert np.allclose(loaded.sequences[0][0], [1.0, 0.0, 2.0, 3.0])
        assert np.allclose(loaded.sequences[0][1], [0.0, 1.0, 2.5, 3.5], atol=1e-12)
        assert np.array_equal(loaded.labels[0], [1, 2])

    def test_error_reporting(self, tmp_path):
        ragged = tmp_path / "ragged.csv"
        ragged.write_text("seq,f0,f1\n0,1.0,2.0\n0,1.0\n", encoding="utf-8")
        with pytest.raises(DataError, match="row 3"):
            load_csv(ragged)
        bad = tmp_path / "bad.csv"
        bad.write_text("seq,f0\n0,1.0\n0,oops\n", encoding="utf-8")
        with pytest.raises(DataError, match="row 3"):
            load_csv(bad)
        missing = tmp_path / "missing.csv"
        missing.write_text("id,f0\n0,1.0\n", encoding="utf-8")
        with pytest.raises(DataError, match="seq"):
            load_csv(missing)
        with pytest.raises(DataError, match="no such file"):
            load_csv(tmp_path / "absent.csv")

    def test_manifest_sidecar(self, tmp_path):
        data = generate_nascar(1, 200, obs_dim=3, noise_scale=0.1, rng=13)
        path = tmp_path / "run.csv"
        save_dataset(data, path)
        assert (tmp_path / "run.manifest.json").exists()
        loaded = load_dataset(path)
        assert loaded.manifest["source"] == "nascar"
        assert loaded.manifest["seed"] == 13
        for a, b in zip(loaded.sequences, data.sequences):
            assert np.abs(a - b).max() < 1e-12
