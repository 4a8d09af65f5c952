"""Body-structure graph over region style codes.

Each node's neighbourhood is itself plus its adjacent nodes.  Neighbours are
split into three subsets by comparing their distance to the gravity center
against the center node's (equal / closer / farther), and each subset gets
its own C x C weight and a per-subset mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .region import StyleCodeMatrix
from .tensor import SegmentationMap, binary_map, require_same_hw

#: Anatomical adjacency for the default 8-region layout
#: (0 background, 1 hair, 2 face, 3 upper clothes, 4 pants, 5 arms, 6 legs, 7 shoes).
DEFAULT_EDGES = ((1, 2), (2, 3), (3, 5), (3, 4), (4, 6), (6, 7))

TIE_TOLERANCE = 1e-3

SAME, CLOSER, FARTHER = 0, 1, 2


@dataclass(frozen=True)
class BodyGraph:
    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    anchors: np.ndarray
    gravity_center: np.ndarray
    distances: np.ndarray
    _labels: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        edges = normalize_edges(self.edges, self.n_nodes)
        anchors = np.asarray(self.anchors, dtype=np.float64).reshape(self.n_nodes, 2)
        dist = np.asarray(self.distances, dtype=np.float64).reshape(self.n_nodes)
        if np.any(dist < 0):
            raise ValueError("distances to the gravity center must be non-negative")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "gravity_center", np.asarray(self.gravity_center, dtype=np.float64))
        object.__setattr__(self, "distances", dist)
        object.__setattr__(self, "_labels", _partition(self.n_nodes, edges, dist))

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n_nodes, self.n_nodes), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = True
        return adj

    def neighborhood(self, i: int) -> list[int]:
        """``B(v_i)``: the node itself followed by its neighbours in index order."""
        adj = self.adjacency()
        return [i] + [j for j in range(self.n_nodes) if adj[i, j]]

    @property
    def subset_labels(self) -> np.ndarray:
        return self._labels

    @classmethod
    def from_distances(cls, distances, edges) -> "BodyGraph":
        """Graph with explicit gravity distances (anchors placed on a ray)."""
        d = np.asarray(distances, dtype=np.float64)
        anchors = np.stack([d, np.zeros_like(d)], axis=1)
        return cls(len(d), tuple(edges), anchors, np.zeros(2), d)


def normalize_edges(edges, n_nodes: int) -> tuple[tuple[int, int], ...]:
    out = set()
    for e in edges:
        i, j = (int(v) for v in e)
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise ValueError(f"edge ({i}, {j}) references a node outside [0, {n_nodes})")
        if i != j:
            out.add((min(i, j), max(i, j)))
    return tuple(sorted(out))


def default_edges(n_nodes: int) -> tuple[tuple[int, int], ...]:
    if n_nodes == 8:
        return DEFAULT_EDGES
    # generic chain over the non-background labels
    return tuple((i, i + 1) for i in range(1, n_nodes - 1))


def load_graph_config(path) -> tuple[int, tuple[tuple[int, int], ...]]:
    """Read ``{"nodes": N, "edges": [[i, j], ...]}``."""
    with open(path) as fh:
        cfg = json.load(fh)
    unknown = set(cfg) - {"nodes", "edges"}
    if unknown:
        raise ValueError(f"unknown graph config keys: {sorted(unknown)}")
    n = int(cfg["nodes"])
    return n, normalize_edges(cfg.get("edges", ()), n)


def build_body_graph(S: SegmentationMap, edges) -> BodyGraph:
    """Anchor each node at its region centroid ``(row, col)``.

    The gravity center is the mean of present-region centroids; absent
    regions are anchored at the gravity center.
    """
    N = S.n_regions
    edges = normalize_edges(edges, N)
    H, W = S.shape
    rows, cols = np.indices((H, W))
    labels = S.labels.ravel()
    counts = np.bincount(labels, minlength=N).astype(np.float64)
    sum_r = np.bincount(labels, weights=rows.ravel().astype(np.float64), minlength=N)
    sum_c = np.bincount(labels, weights=cols.ravel().astype(np.float64), minlength=N)
    present = counts > 0
    anchors = np.zeros((N, 2))
    anchors[present, 0] = sum_r[present] / counts[present]
    anchors[present, 1] = sum_c[present] / counts[present]
    gravity = anchors[present].mean(axis=0) if present.any() else np.zeros(2)
    anchors[~present] = gravity
    distances = np.sqrt(((anchors - gravity) ** 2).sum(axis=1))
    return BodyGraph(N, edges, anchors, gravity, distances)


def _partition(n, edges, e) -> np.ndarray:
    tol = TIE_TOLERANCE * (e.max() if e.size else 0.0)
    labels = np.full((n, n), -1, dtype=np.int8)
    members = [[i] for i in range(n)]
    for i, j in edges:
        members[i].append(j)
        members[j].append(i)
    for i in range(n):
        for j in members[i]:
            if abs(e[j] - e[i]) <= tol:
                labels[i, j] = SAME
            elif e[j] < e[i]:
                labels[i, j] = CLOSER
            else:
                labels[i, j] = FARTHER
    return labels


def partition_neighbors(g: BodyGraph) -> np.ndarray:
    """Subset label ``r_i(v_j)`` for every ordered pair.

    Entry ``[i, j]`` is 0 (same distance), 1 (closer to the gravity center)
    or 2 (farther); -1 marks pairs outside the 1-hop neighbourhood.
    """
    return g.subset_labels.copy()


@dataclass(frozen=True)
class SubsetWeights:
    w0: np.ndarray
    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self):
        mats = [np.asarray(w, dtype=np.float32) for w in (self.w0, self.w1, self.w2)]
        c = mats[0].shape
        if len(c) != 2 or c[0] != c[1] or any(m.shape != c for m in mats):
            raise ShapeError(f"subset weights must be equal square matrices, got {[m.shape for m in mats]}")
        for name, m in zip(("w0", "w1", "w2"), mats):
            object.__setattr__(self, name, m)

    def __getitem__(self, r: int) -> np.ndarray:
        return (self.w0, self.w1, self.w2)[r]

    @property
    def channels(self) -> int:
        return self.w0.shape[0]

    @classmethod
    def identity(cls, C: int) -> "SubsetWeights":
        eye = np.eye(C, dtype=np.float32)
        return cls(eye, eye, eye)

    @classmethod
    def seeded(cls, C: int, seed: int) -> "SubsetWeights":
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(C)
        return cls(*(rng.normal(0.0, scale, (C, C)) for _ in range(3)))


def graph_reason(ST: StyleCodeMatrix, g: BodyGraph, w: SubsetWeights) -> StyleCodeMatrix:
    """Propagate style rows one hop along the body graph.

    Row ``i`` of the result is the sum over non-empty subsets of
    ``B(v_i)`` of the subset's mean style row times that subset's weight.
    A node's output row is zero, and its presence flag false, only when no
    member of its neighbourhood is present.
    """
    if ST.n_regions != g.n_nodes:
        raise ShapeError(f"{ST.n_regions} style rows for a {g.n_nodes}-node graph")
    if ST.channels != w.channels:
        raise ShapeError(f"style channels {ST.channels} != weight size {w.channels}")
    labels = g.subset_labels
    codes = ST.codes.astype(np.float64)
    mats = [w[r].astype(np.float64) for r in range(3)]
    out = np.zeros_like(codes)
    presence = np.zeros(g.n_nodes, dtype=bool)
    for i in range(g.n_nodes):
        acc = np.zeros(codes.shape[1])
        for r in (SAME, CLOSER, FARTHER):
            members = np.flatnonzero(labels[i] == r)
            if members.size == 0:
                continue
            acc += (codes[members].sum(axis=0) / members.size) @ mats[r]
        out[i] = acc
        presence[i] = bool(ST.presence[labels[i] >= 0].any())
    out[~presence] = 0.0
    return StyleCodeMatrix(out, presence)


def merge_styles(ST: StyleCodeMatrix, ST_oc: StyleCodeMatrix, m_oc, S_g: SegmentationMap) -> np.ndarray:
    """Conditioning map: reasoned rows on occluded pixels, source rows elsewhere."""
    mask = binary_map(m_oc, "occlusion mask")
    require_same_hw(("occlusion mask", mask.shape), ("segmentation", S_g.shape))
    if ST.codes.shape != ST_oc.codes.shape:
        raise ShapeError(f"style matrices differ: {ST.codes.shape} vs {ST_oc.codes.shape}")
    if S_g.labels.size and S_g.labels.max() >= ST.n_regions:
        raise ValueError(f"label {S_g.labels.max()} has no style row (N={ST.n_regions})")
    rows = np.where(mask[..., None] == 1, ST_oc.codes[S_g.labels], ST.codes[S_g.labels])
    return np.ascontiguousarray(np.moveaxis(rows, -1, 0))
