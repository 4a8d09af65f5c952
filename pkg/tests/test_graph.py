import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glocal.errors import ShapeError
from glocal.graph import (
    DEFAULT_EDGES,
    BodyGraph,
    SubsetWeights,
    build_body_graph,
    default_edges,
    graph_reason,
    load_graph_config,
    merge_styles,
    partition_neighbors,
)
from glocal.region import StyleCodeMatrix, broadcast_styles
from glocal.tensor import SegmentationMap

from oracles import dense_graph_reason, subset_label


def random_weights(rng, C):
    return SubsetWeights(*(rng.normal(size=(C, C)) for _ in range(3)))


class TestPartition:
    g = BodyGraph.from_distances([1.0, 0.5, 2.0, 1.0], [(0, 1), (0, 2), (0, 3)])

    def test_self_is_same(self):
        labels = partition_neighbors(self.g)
        assert all(labels[i, i] == 0 for i in range(4))

    def test_closer_and_farther(self):
        labels = partition_neighbors(self.g)
        assert labels[0, 1] == 1
        assert labels[0, 2] == 2
        assert labels[0, 3] == 0

    def test_non_neighbours_unlabelled(self):
        labels = partition_neighbors(self.g)
        assert labels[1, 2] == -1 and labels[2, 3] == -1

    def test_tie_tolerance(self):
        g = BodyGraph.from_distances([1.0, 1.0 + 5e-4, 1.0 + 5e-3], [(0, 1), (0, 2)])
        labels = partition_neighbors(g)
        assert labels[0, 1] == 0 and labels[0, 2] == 2

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_antisymmetry(self, seed):
        rng = np.random.default_rng(seed)
        n = 6
        e = rng.uniform(0, 5, n)
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.5]
        labels = partition_neighbors(BodyGraph.from_distances(e, edges))
        tol = 1e-3 * e.max()
        for i, j in edges:
            assert labels[i, j] == subset_label(e[i], e[j], tol)
            if labels[i, j] == 1:
                assert labels[j, i] == 2


class TestGraphReason:
    def test_isolated_identity(self):
        ST = StyleCodeMatrix.full([[1.0, -2.0, 3.0]])
        g = BodyGraph.from_distances([0.0], [])
        w = SubsetWeights(np.eye(3), np.zeros((3, 3)), np.zeros((3, 3)))
        np.testing.assert_array_equal(graph_reason(ST, g, w).codes, ST.codes)

    def test_path_graph_oracle(self):
        rng = np.random.default_rng(0)
        e = [0.0, 1.0, 2.5]
        edges = [(0, 1), (1, 2)]
        codes = rng.normal(size=(3, 4))
        out = graph_reason(StyleCodeMatrix.full(codes), BodyGraph.from_distances(e, edges), SubsetWeights.identity(4))
        ref = dense_graph_reason(codes, edges, e, [np.eye(4)] * 3)
        np.testing.assert_allclose(out.codes, ref, atol=1e-6)
        # node 1: self, closer node 0, farther node 2, each a singleton subset
        np.testing.assert_allclose(out.codes[1], codes.sum(axis=0), atol=1e-6)

    def test_zero_weights(self):
        rng = np.random.default_rng(1)
        g = BodyGraph.from_distances(rng.uniform(0, 1, 4), [(0, 1), (1, 2), (2, 3)])
        z = np.zeros((3, 3))
        out = graph_reason(StyleCodeMatrix.full(rng.normal(size=(4, 3))), g, SubsetWeights(z, z, z))
        assert np.all(out.codes == 0)

    def test_shared_subset_is_averaged(self):
        g = BodyGraph.from_distances([2.0, 1.0, 1.0], [(0, 1), (0, 2)])
        codes = np.array([[0.0, 0.0], [2.0, 4.0], [4.0, 8.0]])
        out = graph_reason(StyleCodeMatrix.full(codes), g, SubsetWeights.identity(2))
        np.testing.assert_allclose(out.codes[0], [3.0, 6.0])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_dense_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n, C = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        e = rng.uniform(0, 3, n)
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.5]
        codes = rng.normal(size=(n, C))
        w = random_weights(rng, C)
        out = graph_reason(StyleCodeMatrix.full(codes), BodyGraph.from_distances(e, edges), w)
        ref = dense_graph_reason(codes.astype(np.float32), edges, e, [w[r] for r in range(3)])
        np.testing.assert_allclose(out.codes, ref, atol=1e-5)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, seed, a, b):
        rng = np.random.default_rng(seed)
        g = BodyGraph.from_distances(rng.uniform(0, 3, 5), [(0, 1), (1, 2), (1, 3), (3, 4)])
        w = random_weights(rng, 3)
        A, B = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
        lhs = graph_reason(StyleCodeMatrix.full(a * A + b * B), g, w).codes
        rhs = a * graph_reason(StyleCodeMatrix.full(A), g, w).codes + b * graph_reason(StyleCodeMatrix.full(B), g, w).codes
        np.testing.assert_allclose(lhs, rhs, atol=1e-5 * max(1.0, abs(a) + abs(b)) * 10)

    def test_subset_count_normalization(self):
        g = BodyGraph.from_distances([1.0, 0.0, 1.0, 2.0, 3.0], [(0, 1), (0, 2), (0, 3), (3, 4)])
        s = np.array([0.5, -1.0, 2.0])
        out = graph_reason(StyleCodeMatrix.full(np.tile(s, (5, 1))), g, SubsetWeights.identity(3))
        # nonempty subsets per node, counted by hand from the distances
        expected_k = [3, 2, 1, 3, 2]
        np.testing.assert_array_equal(out.codes, np.outer(expected_k, s).astype(np.float32))

    def test_locality(self):
        rng = np.random.default_rng(2)
        g = BodyGraph.from_distances(rng.uniform(0, 3, 5), [(0, 1), (1, 2), (2, 3), (3, 4)])
        w = random_weights(rng, 3)
        codes = rng.normal(size=(5, 3))
        base = graph_reason(StyleCodeMatrix.full(codes), g, w).codes
        codes[4] += 100.0
        moved = graph_reason(StyleCodeMatrix.full(codes), g, w).codes
        np.testing.assert_array_equal(base[:3], moved[:3])

    def test_channel_mismatch(self):
        g = BodyGraph.from_distances([0.0, 1.0], [(0, 1)])
        with pytest.raises(ShapeError):
            graph_reason(StyleCodeMatrix.full(np.zeros((2, 3))), g, SubsetWeights.identity(4))

    def test_absent_regions_filled_from_neighbours(self):
        g = BodyGraph.from_distances([1.0, 0.0, 2.0], [(0, 1), (1, 2)])
        ST = StyleCodeMatrix(np.array([[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]]), [True, False, False])
        out = graph_reason(ST, g, SubsetWeights.identity(2))
        np.testing.assert_array_equal(out.presence, [True, True, False])
        # node 1 sees nodes 0 and 2 as one farther subset, so the mean halves
        np.testing.assert_array_equal(out.codes[1], [0.5, 0.5])


class TestMerge:
    def setup_method(self):
        rng = np.random.default_rng(3)
        self.S = SegmentationMap(rng.integers(0, 3, (4, 5)), 3)
        self.ST = StyleCodeMatrix.full(rng.normal(size=(3, 2)))
        self.ST_oc = StyleCodeMatrix.full(rng.normal(size=(3, 2)))

    def test_no_occlusion(self):
        out = merge_styles(self.ST, self.ST_oc, np.zeros((4, 5)), self.S)
        np.testing.assert_array_equal(out, broadcast_styles(self.ST, self.S))

    def test_full_occlusion(self):
        out = merge_styles(self.ST, self.ST_oc, np.ones((4, 5)), self.S)
        np.testing.assert_array_equal(out, broadcast_styles(self.ST_oc, self.S))

    def test_mixed_mask(self):
        mask = np.random.default_rng(4).integers(0, 2, (4, 5))
        out = merge_styles(self.ST, self.ST_oc, mask, self.S)
        for y in range(4):
            for x in range(5):
                src = self.ST_oc if mask[y, x] else self.ST
                np.testing.assert_array_equal(out[:, y, x], src.codes[self.S.labels[y, x]])


class TestBuild:
    def test_single_pixel_region(self):
        labels = np.ones((3, 3), dtype=int)
        labels[1, 2] = 0
        g = build_body_graph(SegmentationMap(labels, 2), [])
        np.testing.assert_allclose(g.anchors[0], [1.0, 2.0])

    def test_single_region_single_pixel(self):
        g = build_body_graph(SegmentationMap(np.zeros((1, 1), dtype=int), 1), [])
        np.testing.assert_array_equal(g.anchors[0], [0.0, 0.0])
        assert g.distances[0] == 0.0

    def test_symmetric_regions(self):
        labels = np.zeros((4, 6), dtype=int)
        labels[:, :3] = 1
        labels[:, 3:] = 2
        g = build_body_graph(SegmentationMap(labels, 3), [(1, 2)])
        assert g.distances[1] == pytest.approx(g.distances[2])
        labels_ij = partition_neighbors(g)
        assert labels_ij[1, 2] == 0 and labels_ij[2, 1] == 0

    def test_centroids_hand_accumulated(self):
        labels = np.array([[0, 0, 1], [2, 1, 1], [2, 2, 1]])
        g = build_body_graph(SegmentationMap(labels, 3), [(0, 1), (1, 2)])
        np.testing.assert_allclose(g.anchors[0], [0.0, 0.5])
        np.testing.assert_allclose(g.anchors[1], [(0 + 1 + 1 + 2) / 4, (2 + 1 + 2 + 2) / 4])
        np.testing.assert_allclose(g.anchors[2], [(1 + 2 + 2) / 3, (0 + 0 + 1) / 3])
        np.testing.assert_allclose(g.gravity_center, g.anchors.mean(axis=0))

    def test_absent_region_at_gravity(self):
        labels = np.array([[0, 1], [0, 1]])
        g = build_body_graph(SegmentationMap(labels, 3), [])
        np.testing.assert_allclose(g.anchors[2], g.gravity_center)
        assert g.distances[2] == 0.0

    def test_edge_out_of_range(self):
        with pytest.raises(ValueError):
            build_body_graph(SegmentationMap(np.zeros((2, 2), dtype=int), 2), [(0, 2)])


def test_default_edges():
    assert default_edges(8) == DEFAULT_EDGES
    assert default_edges(4) == ((1, 2), (2, 3))


def test_graph_config_file(tmp_path):
    p = tmp_path / "g.json"
    p.write_text(json.dumps({"nodes": 4, "edges": [[2, 1], [3, 2], [1, 1]]}))
    assert load_graph_config(p) == (4, ((1, 2), (2, 3)))
    p.write_text(json.dumps({"nodes": 4, "extra": 1}))
    with pytest.raises(ValueError):
        load_graph_config(p)
