"""Manifold geodesic distances: kNN graph, Dijkstra shortest paths, landmark index.

The graph is built once per dataset, landmark-to-landmark distances are
computed once, and training looks distances up through each point's nearest
landmark. Disk format (.geo): one JSON header line, then the landmark distance
matrix as little-endian float32, then the assignment array as little-endian
int32. Distances are promoted to float64 in memory.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .linalg import as_matrix
from .parallel import parallel_map, thread_count

log = logging.getLogger(__name__)

_CHUNK = 512  # rows per pairwise-distance block; bounds peak memory


@dataclass
class KnnGraph:
    """Undirected weighted graph; adjacency[u] lists (neighbor, Euclidean length)."""

    node_count: int
    adjacency: list
    repairs: list = field(default_factory=list)  # edges added to reconnect components

    def to_csr(self) -> csr_matrix:
        # coo construction would SUM parallel edges; shortest paths need the min
        best: dict = {}
        for u, nbrs in enumerate(self.adjacency):
            for v, w in nbrs:
                key = (u, v)
                if key not in best or w < best[key]:
                    best[key] = w
        rows = [u for u, _ in best]
        cols = [v for _, v in best]
        return csr_matrix(
            (list(best.values()), (rows, cols)),
            shape=(self.node_count, self.node_count),
        )


@dataclass
class GeodesicIndex:
    """Landmark geodesic lookup: all queries route through nearest landmarks.

    assignment[i] is a position into `landmarks` (so a landmark maps to its
    own position), and approx_dist(i, j) reads
    landmark_dists[assignment[i], assignment[j]].
    """

    landmarks: np.ndarray  # dataset indices of the landmark points
    landmark_dists: np.ndarray  # dense m x m graph distances, float64
    assignment: np.ndarray  # per dataset point, position of its nearest landmark
    k: int
    seed: int
    n: int
    symmetrize: str = "intersection"
    repair_count: int = 0

    @property
    def exact(self) -> bool:
        return len(self.landmarks) == self.n


def _pairwise_block(X: np.ndarray, rows: np.ndarray) -> np.ndarray:
    # squared Euclidean distances between X[:, rows] and all columns
    sq = np.sum(X * X, axis=0)
    block = sq[rows][:, None] + sq[None, :] - 2.0 * (X[:, rows].T @ X)
    return np.maximum(block, 0.0)


def build_knn_graph(X, k: int, symmetrize: str = "intersection") -> KnnGraph:
    """Symmetrized k-nearest-neighbor graph with Euclidean edge lengths.

    symmetrize="intersection" keeps an edge only when both endpoints rank each
    other among their k nearest (mutual kNN); "union" keeps an edge when either
    does. Intersection is the default because union's one-sided edges can
    short-circuit across close-but-geodesically-far sheets of a curled
    manifold, which defeats the graph's purpose of approximating geodesics.

    Disconnected graphs are repaired by repeatedly adding the globally
    shortest edge between two components until connected; every repair is
    logged. Exact duplicate points are rejected because they would create
    zero-length edges.
    """
    if symmetrize not in ("union", "intersection"):
        raise ValueError(f"symmetrize must be 'union' or 'intersection', got {symmetrize!r}")
    X = as_matrix(X, "X")
    n = X.shape[1]
    if n < 2:
        raise ValueError("graph needs at least 2 points")
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    knn_of: list[dict] = [dict() for _ in range(n)]  # u -> {v: weight}, directed
    for start in range(0, n, _CHUNK):
        rows = np.arange(start, min(start + _CHUNK, n))
        d2 = _pairwise_block(X, rows)
        d2[np.arange(len(rows)), rows] = np.inf
        idx = np.argpartition(d2, k - 1, axis=1)[:, :k]
        for r, u in enumerate(rows):
            for v in idx[r]:
                w = float(np.sqrt(d2[r, v]))
                if w <= 0.0:
                    raise ValueError(
                        f"points {u} and {v} coincide; duplicate samples are not supported"
                    )
                knn_of[u][int(v)] = w
    neighbor_sets: list[dict] = [dict() for _ in range(n)]
    for u in range(n):
        for v, w in knn_of[u].items():
            if symmetrize == "union" or u in knn_of[v]:
                neighbor_sets[u][v] = w
                neighbor_sets[v][u] = w

    graph = KnnGraph(node_count=n, adjacency=[[] for _ in range(n)])
    _repair_connectivity(X, neighbor_sets, graph)
    for u in range(n):
        graph.adjacency[u] = sorted(neighbor_sets[u].items())
    return graph


def _component_labels(n: int, neighbor_sets) -> np.ndarray:
    labels = np.full(n, -1, dtype=np.int64)
    current = 0
    for root in range(n):
        if labels[root] >= 0:
            continue
        stack = [root]
        labels[root] = current
        while stack:
            u = stack.pop()
            for v in neighbor_sets[u]:
                if labels[v] < 0:
                    labels[v] = current
                    stack.append(v)
        current += 1
    return labels


def _repair_connectivity(X, neighbor_sets, graph: KnnGraph) -> None:
    n = X.shape[1]
    while True:
        labels = _component_labels(n, neighbor_sets)
        if labels.max() == 0:
            return
        # globally shortest edge between any two distinct components
        best = (np.inf, -1, -1)
        for start in range(0, n, _CHUNK):
            rows = np.arange(start, min(start + _CHUNK, n))
            d2 = _pairwise_block(X, rows)
            same = labels[rows][:, None] == labels[None, :]
            d2[same] = np.inf
            flat = int(np.argmin(d2))
            r, v = divmod(flat, n)
            if d2[r, v] < best[0]:
                best = (float(d2[r, v]), int(rows[r]), v)
        d2_best, u, v = best
        w = float(np.sqrt(d2_best))
        if not np.isfinite(w) or w <= 0.0:
            raise ValueError("cannot repair connectivity: coincident or missing points")
        neighbor_sets[u][v] = w
        neighbor_sets[v][u] = w
        graph.repairs.append((u, v))
        log.info("connectivity repair: edge (%d, %d) length %.6g", u, v, w)


def shortest_paths_from(graph: KnnGraph, source: int) -> np.ndarray:
    """Exact single-source shortest path lengths (Dijkstra).

    Shares the solver used for the landmark table so that distances computed
    either way agree bitwise; two textually different Dijkstras can disagree
    in the last ulp on tie-adjacent routes.
    """
    n = graph.node_count
    if not 0 <= source < n:
        raise ValueError(f"source {source} out of range for {n} nodes")
    dist = _csgraph_dijkstra(graph.to_csr(), directed=False, indices=[source])[0]
    if not np.all(np.isfinite(dist)):
        raise ValueError("graph is disconnected: some nodes are unreachable")
    return dist


def _multi_source_dists(graph: KnnGraph, sources: np.ndarray) -> np.ndarray:
    # per-source runs are independent; PCAE_THREADS splits them across worker
    # threads (the C solver releases the GIL), output identical either way
    csr = graph.to_csr()
    chunks = np.array_split(sources, min(thread_count(), len(sources)))
    rows = parallel_map(
        lambda idx: _csgraph_dijkstra(csr, directed=False, indices=idx), chunks
    )
    mat = np.vstack(rows)
    if not np.all(np.isfinite(mat)):
        raise ValueError("graph is disconnected: some nodes are unreachable")
    return mat


def farthest_point_sample(X, count: int, seed: int) -> np.ndarray:
    """Greedy Euclidean farthest-point subset, started at a seeded random point."""
    X = as_matrix(X, "X")
    n = X.shape[1]
    if not 2 <= count <= n:
        raise ValueError(f"need 2 <= landmark_count <= n, got {count}")
    rng = np.random.default_rng(seed)
    chosen = np.empty(count, dtype=np.int64)
    chosen[0] = int(rng.integers(n))
    min_d2 = np.sum((X - X[:, [chosen[0]]]) ** 2, axis=0)
    for i in range(1, count):
        chosen[i] = int(np.argmax(min_d2))
        min_d2 = np.minimum(min_d2, np.sum((X - X[:, [chosen[i]]]) ** 2, axis=0))
    return chosen


def build_index(
    X, k: int, landmark_count: int, seed: int = 0, symmetrize: str = "intersection"
) -> GeodesicIndex:
    """Landmark geodesic index on the kNN graph of X.

    Shortest paths run on the full-data graph from landmark sources only;
    every point is assigned to its Euclidean nearest landmark.
    """
    X = as_matrix(X, "X")
    n = X.shape[1]
    graph = build_knn_graph(X, k, symmetrize=symmetrize)
    landmarks = farthest_point_sample(X, landmark_count, seed)
    full = _multi_source_dists(graph, landmarks)  # m x n
    dists = full[:, landmarks]
    dists = (dists + dists.T) / 2.0  # per-source rounding may break exact symmetry
    np.fill_diagonal(dists, 0.0)
    assignment = np.empty(n, dtype=np.int64)
    L = X[:, landmarks]
    lm_sq = np.sum(L * L, axis=0)
    for start in range(0, n, _CHUNK):
        cols = slice(start, min(start + _CHUNK, n))
        C = X[:, cols]
        d2 = lm_sq[:, None] + np.sum(C * C, axis=0)[None, :] - 2.0 * (L.T @ C)
        assignment[cols] = np.argmin(d2, axis=0)
    assignment[landmarks] = np.arange(len(landmarks))  # a landmark maps to itself
    return GeodesicIndex(
        landmarks=landmarks,
        landmark_dists=dists,
        assignment=assignment,
        k=k,
        seed=seed,
        n=n,
        symmetrize=symmetrize,
        repair_count=len(graph.repairs),
    )


def approx_dist(index: GeodesicIndex, i: int, j: int) -> float:
    """Geodesic distance between the landmarks assigned to points i and j."""
    if not (0 <= i < index.n and 0 <= j < index.n):
        raise IndexError(f"indices ({i}, {j}) out of range for {index.n} points")
    return float(index.landmark_dists[index.assignment[i], index.assignment[j]])


def covering_radius(X, index: GeodesicIndex) -> float:
    """Largest Euclidean distance from any point to its assigned landmark."""
    X = as_matrix(X, "X")
    deltas = X - X[:, index.landmarks[index.assignment]]
    return float(np.max(np.sqrt(np.sum(deltas * deltas, axis=0))))


# ------------------------------------------------------------ .geo persistence

def save_index(index: GeodesicIndex, path) -> None:
    header = {
        "format": "geo",
        "n": int(index.n),
        "k": int(index.k),
        "seed": int(index.seed),
        "exact": bool(index.exact),
        "symmetrize": index.symmetrize,
        "repair_count": int(index.repair_count),
        "landmarks": [int(x) for x in index.landmarks],
        "dist_dtype": "<f4",
        "assign_dtype": "<i4",
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        f.write(np.ascontiguousarray(index.landmark_dists, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(index.assignment, dtype="<i4").tobytes())


def load_index(path) -> GeodesicIndex:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"geodesic index not found: {path}")
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        landmarks = np.asarray(header["landmarks"], dtype=np.int64)
        m, n = len(landmarks), int(header["n"])
        dists = np.frombuffer(f.read(m * m * 4), dtype=header["dist_dtype"])
        dists = dists.reshape(m, m).astype(np.float64)
        assignment = np.frombuffer(f.read(n * 4), dtype=header["assign_dtype"])
    return GeodesicIndex(
        landmarks=landmarks,
        landmark_dists=dists,
        assignment=assignment.astype(np.int64),
        k=int(header["k"]),
        seed=int(header["seed"]),
        n=n,
        symmetrize=str(header.get("symmetrize", "intersection")),
        repair_count=int(header.get("repair_count", 0)),
    )
