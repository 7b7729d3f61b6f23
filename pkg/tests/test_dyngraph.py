import hashlib
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dgib.dyngraph import (
    UNTYPED,
    DatasetValidationError,
    DynamicGraph,
    EmptySnapshotError,
    GraphSnapshot,
    NegativeCache,
    SplitSpec,
    generate_synthetic,
    load_dataset,
    sample_link_labels,
    save_dataset,
)


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestSnapshot:
    def test_build_canonicalizes_and_dedupes(self):
        snap = GraphSnapshot.build(1, [[2, 0], [0, 2], [1, 3], [3, 1], [2, 2]], np.zeros((4, 1)))
        assert snap.edges.tolist() == [[0, 2], [1, 3]]
        assert not snap.is_typed

    def test_adjacency_is_symmetric(self):
        snap = GraphSnapshot.build(1, [[0, 1], [1, 2]], np.zeros((3, 1)), [0, 1])
        a = snap.adjacency().toarray()
        assert np.array_equal(a, a.T)
        assert a.sum() == 4

    def test_node_out_of_range(self):
        with pytest.raises(ValueError):
            GraphSnapshot.build(1, [[0, 5]], np.zeros((3, 1)))


class TestSplit:
    def test_default_for_six(self):
        s = SplitSpec.default_for(6)
        assert (s.train_len, s.val_len, s.test_len) == (3, 1, 2)
        assert list(s.train) == [1, 2, 3] and list(s.val) == [4] and list(s.test) == [5, 6]

    @given(st.integers(1, 60))
    def test_default_split_partitions_time(self, T):
        s = SplitSpec.default_for(T)
        times = list(s.train) + list(s.val) + list(s.test)
        assert times == list(range(1, T + 1))
        assert s.train_len >= 1

    def test_split_must_match_graph(self):
        g = generate_synthetic(10, 3, 2, 0.5, 0.1, 0.0, 0, seed=0)
        with pytest.raises(ValueError):
            DynamicGraph(g.snapshots, g.next_features, SplitSpec(2, 0, 0))


class TestSynthetic:
    def test_zero_probabilities_give_edgeless(self):
        g = generate_synthetic(20, 4, 2, 0.0, 0.0, 0.3, 2, seed=1)
        assert g.num_links == 0

    def test_deterministic(self):
        a = generate_synthetic(40, 5, 3, 0.3, 0.02, 0.2, 3, seed=9)
        b = generate_synthetic(40, 5, 3, 0.3, 0.02, 0.2, 3, seed=9)
        assert a.same_as(b)
        c = generate_synthetic(40, 5, 3, 0.3, 0.02, 0.2, 3, seed=10)
        assert not a.same_as(c)

    @pytest.mark.parametrize("field", ["p_intra", "p_inter", "drift"])
    def test_invalid_probability_names_field(self, field):
        kwargs = dict(p_intra=0.2, p_inter=0.01, drift=0.1)
        kwargs[field] = 1.5
        with pytest.raises(ValueError, match=field):
            generate_synthetic(10, 2, 2, link_types=1, seed=0, **kwargs)

    def test_intra_community_count_binomial(self):
        # two blocks of 25: 2 * C(25, 2) intra pairs
        g = generate_synthetic(50, 1, 2, 0.2, 0.01, 0.0, 1, seed=7)
        comm = np.arange(50) * 2 // 50
        e = g.snapshot(1).edges
        intra = int(np.sum(comm[e[:, 0]] == comm[e[:, 1]]))
        n_pairs = 2 * math.comb(25, 2)
        mean, sd = n_pairs * 0.2, math.sqrt(n_pairs * 0.2 * 0.8)
        assert abs(intra - mean) <= 3 * sd

    def test_drift_keeps_edge_count(self):
        g = generate_synthetic(60, 5, 3, 0.3, 0.02, 0.25, 2, seed=3)
        counts = [s.num_edges for s in g.snapshots]
        assert len(set(counts)) == 1
        a, b = set(g.snapshot(1).edge_keys()), set(g.snapshot(2).edge_keys())
        assert len(a - b) == round(0.25 * counts[0])

    def test_types_in_range(self):
        g = generate_synthetic(40, 3, 2, 0.4, 0.05, 0.1, 4, seed=2)
        for s in g.snapshots:
            assert s.types.min() >= 0 and s.types.max() < 4

    def test_features_are_jittered_one_hot(self):
        g = generate_synthetic(40, 2, 4, 0.3, 0.0, 0.0, 1, seed=2, feature_noise=0.0)
        x = g.snapshot(1).features
        assert np.array_equal(x.sum(axis=1), np.ones(40))
        assert g.feature_dim == 4


class TestLinkLabels:
    def test_ten_edges_give_ten_negatives(self):
        edges = [(i, i + 1) for i in range(10)]
        g = DynamicGraph([GraphSnapshot.build(1, edges, np.zeros((20, 1)))], np.zeros((20, 1)))
        s = sample_link_labels(g, 1, np.random.default_rng(0))
        assert len(s.positives) == 10 and len(s.negatives) == 10

    def test_empty_snapshot_raises(self):
        g = DynamicGraph([GraphSnapshot.build(1, np.zeros((0, 2)), np.zeros((5, 1)))], np.zeros((5, 1)))
        with pytest.raises(EmptySnapshotError):
            sample_link_labels(g, 1, np.random.default_rng(0))

    @given(st.integers(0, 10_000))
    def test_negatives_are_non_edges(self, seed):
        g = generate_synthetic(25, 1, 2, 0.3, 0.05, 0.0, 1, seed=4)
        s = sample_link_labels(g, 1, np.random.default_rng(seed))
        keys = set(g.snapshot(1).edge_keys().tolist())
        neg = s.negatives
        assert np.all(neg[:, 0] != neg[:, 1])
        assert not {int(min(u, v) * 25 + max(u, v)) for u, v in neg} & keys
        assert len({tuple(p) for p in neg.tolist()}) == len(neg)

    def test_cache_persists_identical_pairs(self, tmp_path, small_graph):
        a = NegativeCache(tmp_path).get(small_graph, 5, 3, "test")
        b = NegativeCache(tmp_path).get(small_graph, 5, 3, "test")
        assert np.array_equal(a.pairs, b.pairs) and np.array_equal(a.labels, b.labels)
        assert (tmp_path / "test_seed3_t5.csv").exists()
        c = NegativeCache().get(small_graph, 5, 4, "test")
        assert not np.array_equal(a.pairs, c.pairs)


class TestDatasetIO:
    def test_round_trip(self, tmp_path):
        g = generate_synthetic(50, 4, 3, 0.3, 0.02, 0.1, 3, seed=8)
        manifest = save_dataset(g, tmp_path)
        assert load_dataset(manifest).same_as(g)
        assert load_dataset(tmp_path).same_as(g)

    def test_empty_manifest_case(self, tmp_path):
        snaps = [GraphSnapshot.build(t, np.zeros((0, 2)), np.zeros((4, 2))) for t in range(1, 4)]
        g = DynamicGraph(snaps, np.zeros((4, 2)), SplitSpec(3, 0, 0))
        save_dataset(g, tmp_path)
        assert (tmp_path / "edges.csv").read_text() == "t,src,dst,type\n"
        back = load_dataset(tmp_path / "manifest.json")
        assert back.num_snapshots == 3 and back.num_links == 0
        assert all(s.features.shape == (4, 2) for s in back.snapshots)

    def test_two_saves_byte_identical(self, tmp_path):
        g = generate_synthetic(30, 3, 2, 0.3, 0.02, 0.1, 2, seed=1)
        save_dataset(g, tmp_path / "a")
        save_dataset(g, tmp_path / "b")
        for f in sorted((tmp_path / "a").iterdir()):
            assert _digest(f) == _digest(tmp_path / "b" / f.name)

    def test_untyped_column_is_empty(self, tmp_path):
        g = generate_synthetic(20, 2, 2, 0.4, 0.05, 0.1, 0, seed=1)
        save_dataset(g, tmp_path)
        rows = (tmp_path / "edges.csv").read_text().splitlines()[1:]
        assert rows and all(r.endswith(",") for r in rows)
        assert all(np.all(s.types == UNTYPED) for s in load_dataset(tmp_path).snapshots)

    def test_both_orientations_are_symmetrized(self, tmp_path):
        g = generate_synthetic(20, 2, 2, 0.4, 0.05, 0.1, 2, seed=1)
        save_dataset(g, tmp_path)
        path = tmp_path / "edges.csv"
        lines = path.read_text().splitlines()
        flipped = [f"{t},{v},{u},{ty}" for t, u, v, ty in (ln.split(",") for ln in lines[1:])]
        path.write_text("\n".join(lines + flipped) + "\n")
        assert load_dataset(tmp_path).same_as(g)

    def test_missing_file_is_io_error(self, tmp_path):
        g = generate_synthetic(20, 2, 2, 0.4, 0.05, 0.1, 2, seed=1)
        save_dataset(g, tmp_path)
        (tmp_path / "features_t2.csv").unlink()
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path)
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "nowhere.json")

    def test_row_mismatch_names_file(self, tmp_path):
        g = generate_synthetic(20, 2, 2, 0.4, 0.05, 0.1, 2, seed=1)
        save_dataset(g, tmp_path)
        f = tmp_path / "features_t1.csv"
        f.write_text("\n".join(f.read_text().splitlines()[:-1]) + "\n")
        with pytest.raises(DatasetValidationError, match="features_t1.csv"):
            load_dataset(tmp_path)

    def test_column_mismatch_names_file(self, tmp_path):
        g = generate_synthetic(20, 2, 2, 0.4, 0.05, 0.1, 2, seed=1)
        save_dataset(g, tmp_path)
        m = json.loads((tmp_path / "manifest.json").read_text())
        m["feature_dim"] = 3
        (tmp_path / "manifest.json").write_text(json.dumps(m))
        with pytest.raises(DatasetValidationError, match="features_t1.csv"):
            load_dataset(tmp_path)

    def test_node_count_mismatch_names_edges(self, tmp_path):
        g = generate_synthetic(20, 2, 2, 0.4, 0.05, 0.1, 2, seed=1)
        save_dataset(g, tmp_path)
        with open(tmp_path / "edges.csv", "a") as fh:
            fh.write("1,0,25,0\n")
        with pytest.raises(DatasetValidationError, match="edges.csv"):
            load_dataset(tmp_path)

    def test_collab_shaped_manifest(self, tmp_path):
        # Aggregate shape of the COLLAB statistics: 23035 nodes, 16 snapshots
        # split 10/1/5, 151790 links over 5 link types.
        n, T, total = 23035, 16, 151790
        rng = np.random.default_rng(0)
        per_t = np.full(T, total // T)
        per_t[: total - per_t.sum()] += 1
        lines = ["t,src,dst,type"]
        for t, m in enumerate(per_t, start=1):
            keys = rng.choice(n * (n - 1) // 2, size=m, replace=False)
            # unrank keys into u < v pairs
            u = (n - 2 - np.floor(np.sqrt(-8 * keys + 4 * n * (n - 1) - 7) / 2.0 - 0.5)).astype(np.int64)
            v = (keys + u + 1 - n * (n - 1) // 2 + (n - u) * ((n - u) - 1) // 2).astype(np.int64)
            ty = np.arange(m) % 5
            lines.extend(f"{t},{a},{b},{c}" for a, b, c in zip(u.tolist(), v.tolist(), ty.tolist()))
        (tmp_path / "edges.csv").write_text("\n".join(lines) + "\n")
        row = "0.5\n" * n
        for t in range(1, T + 1):
            (tmp_path / f"features_t{t}.csv").write_text(row)
        (tmp_path / "features_next.csv").write_text(row)
        manifest = {
            "name": "collab-shaped", "num_nodes": n, "feature_dim": 1, "num_snapshots": T,
            "num_links": total, "link_types": 5, "split": {"train": 10, "val": 1, "test": 5},
            "files": {"edges": "edges.csv", "features": "features_t{t}.csv", "features_next": "features_next.csv"},
        }
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        g = load_dataset(tmp_path / "manifest.json")
        assert g.num_nodes == 23035 and g.num_snapshots == 16
        assert (g.split.train_len, g.split.val_len, g.split.test_len) == (10, 1, 5)
        assert g.num_links == 151790 and g.link_types == 5
