"""
Non-private DBSCAN oracle
Exact O(n^2) DBSCAN, spans of true clusters and the sandwich-guarantee checker
"""

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, List, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .errors import ParameterError
from .grid import cells_of

if TYPE_CHECKING:
    from .dp_dbscan import SpanSet

logger = logging.getLogger(__name__)

# Rows of the pairwise distance matrix processed at once
_ROW_BLOCK = 1024

# Real-valued density thresholds (MinPts - tau) are compared with this slack
_COUNT_SLACK = 1e-9


@dataclass(frozen=True)
class DbscanParams:
    alpha: float
    min_pts: int

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1) in normalized units, got {self.alpha}")
        if int(self.min_pts) != self.min_pts or self.min_pts < 1:
            raise ParameterError(f"min_pts must be an integer >= 1, got {self.min_pts}")


@dataclass(frozen=True)
class Labeling:
    """Per-point labels, 0 = noise, k >= 1 = cluster or span id"""
    labels: np.ndarray
    num_clusters: int

    @classmethod
    def from_array(cls, labels) -> "Labeling":
        arr = np.asarray(labels)
        if arr.ndim != 1:
            raise ParameterError(f"Labels must be one-dimensional, got shape {arr.shape}")
        if arr.size and not np.issubdtype(arr.dtype, np.integer):
            if not np.all(np.equal(np.mod(arr, 1), 0)):
                raise ParameterError("Labels must be integers")
        arr = arr.astype(np.int64)
        if arr.size and arr.min() < 0:
            raise ParameterError("Labels must be non-negative (0 marks noise)")
        arr.setflags(write=False)
        positive = np.unique(arr[arr > 0])
        return cls(labels=arr, num_clusters=int(positive.size))

    @classmethod
    def empty(cls) -> "Labeling":
        return cls.from_array(np.empty(0, dtype=np.int64))

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def is_contiguous(self) -> bool:
        positive = np.unique(self.labels[self.labels > 0])
        return bool(np.array_equal(positive, np.arange(1, positive.size + 1)))

    def compact(self) -> "Labeling":
        """Renumber positive labels to 1..k in order of first appearance"""
        out = np.zeros(self.labels.size, dtype=np.int64)
        mask = self.labels > 0
        if mask.any():
            uniques, first, inverse = np.unique(self.labels[mask], return_index=True,
                                                return_inverse=True)
            rank = np.empty(uniques.size, dtype=np.int64)
            rank[np.argsort(first, kind="stable")] = np.arange(1, uniques.size + 1)
            out[mask] = rank[inverse]
        return Labeling.from_array(out)

    def members(self, cluster_id: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster_id)


class SandwichResult(str, Enum):
    OK = "ok"
    VIOLATED_CONDITION_1 = "violated_condition_1"
    VIOLATED_CONDITION_2 = "violated_condition_2"


@dataclass(frozen=True)
class ClusterSpan:
    """Union of open balls of a given radius around a cluster's core points"""
    cluster_id: int
    centers: np.ndarray
    radius: float

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, self.centers.shape[1])
        return _covered(pts, self.centers, self.radius)


def _as_array(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, arr.shape[1] if arr.ndim == 2 else 1)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


def _covered(samples: np.ndarray, centers: np.ndarray, radius: float) -> np.ndarray:
    """Mask of samples within distance < radius of at least one center"""
    hit = np.zeros(samples.shape[0], dtype=bool)
    if centers.shape[0] == 0:
        return hit
    for start in range(0, samples.shape[0], _ROW_BLOCK):
        block = samples[start:start + _ROW_BLOCK]
        hit[start:start + _ROW_BLOCK] = np.any(cdist(block, centers) < radius, axis=1)
    return hit


def _neighbor_graph(pts: np.ndarray, radius: float) -> coo_matrix:
    """Sparse adjacency of pairs at distance < radius, self-loops included"""
    n = pts.shape[0]
    rows, cols = [], []
    for start in range(0, n, _ROW_BLOCK):
        block = cdist(pts[start:start + _ROW_BLOCK], pts) < radius
        r, c = np.nonzero(block)
        rows.append(r + start)
        cols.append(c)
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    return coo_matrix((np.ones(rows.size, dtype=np.int32), (rows, cols)), shape=(n, n))


def _cluster(points, radius: float, threshold: float) -> Tuple[np.ndarray, np.ndarray]:
    """Core mask and core-point component labels for a real-valued density threshold

    Labels are 1..k ordered by the smallest point index in each cluster,
    0 for every non-core point.
    """
    pts = _as_array(points)
    n = pts.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    if n == 0:
        return np.zeros(0, dtype=bool), labels

    graph = _neighbor_graph(pts, radius).tocsr()
    degree = np.asarray(graph.sum(axis=1)).ravel()
    core = degree >= threshold - _COUNT_SLACK
    core_idx = np.flatnonzero(core)
    if core_idx.size == 0:
        return core, labels

    sub = graph[core_idx][:, core_idx]
    _, component = connected_components(sub, directed=False)
    # first core index of each component fixes the order
    _, first = np.unique(component, return_index=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(1, first.size + 1)
    labels[core_idx] = rank[component]
    return core, labels


def exact_dbscan(points, params: DbscanParams) -> Labeling:
    """DBSCAN clusters of core points; border and noise points are labeled 0"""
    _, labels = _cluster(points, params.alpha, params.min_pts)
    labeling = Labeling.from_array(labels)
    logger.debug(f"Exact DBSCAN found {labeling.num_clusters} clusters among {len(labeling)} points")
    return labeling


def core_mask(points, params: DbscanParams) -> np.ndarray:
    core, _ = _cluster(points, params.alpha, params.min_pts)
    return core


def true_spans(points, labeling: Labeling, alpha: float) -> List[ClusterSpan]:
    """Span(C) for every cluster: the open alpha-balls around its core points"""
    pts = _as_array(points)
    if pts.shape[0] != len(labeling):
        raise ParameterError(f"{pts.shape[0]} points but {len(labeling)} labels")
    spans = []
    for cluster_id in np.unique(labeling.labels[labeling.labels > 0]):
        centers = pts[labeling.labels == cluster_id]
        spans.append(ClusterSpan(int(cluster_id), centers, float(alpha)))
    return spans


def _lattice(d: int, steps: int) -> np.ndarray:
    """steps^d evenly spaced locations in the unit box, corners included"""
    axis = np.linspace(0.0, 1.0, steps)
    return np.array(list(itertools.product(axis, repeat=d)), dtype=np.float64)


def _cells_inside(cells: np.ndarray, w: float, centers: np.ndarray, radius: float,
                  lattice: np.ndarray) -> bool:
    samples = (cells[:, None, :] + lattice[None, :, :]).reshape(-1, cells.shape[1]) * w
    return bool(np.all(_covered(samples, centers, radius)))


def sandwich_check(span_set: "SpanSet", points, params: DbscanParams, rho: float,
                   tau: float) -> SandwichResult:
    """Check both sandwich conditions of a span set against the raw points

    1. Each (alpha, MinPts)-cluster lies in a single span.
    2. Each span lies inside Span(C) of one (rho alpha, MinPts - tau)-cluster C.
    """
    if not 0 <= tau < params.min_pts:
        raise ParameterError(f"tau must satisfy 0 <= tau < min_pts ({params.min_pts}), got {tau}")
    if not rho > 0:
        raise ParameterError(f"rho must be positive, got {rho}")

    grid = span_set.grid
    pts = _as_array(points).reshape(-1, grid.d)

    small = exact_dbscan(pts, params)
    if small.num_clusters:
        owner = span_set.lookup_cells(cells_of(grid, pts))
        for cluster_id in range(1, small.num_clusters + 1):
            hosts = np.unique(owner[small.labels == cluster_id])
            if hosts.size != 1 or hosts[0] == 0:
                logger.debug(f"Cluster {cluster_id} spread over spans {hosts.tolist()}")
                return SandwichResult.VIOLATED_CONDITION_1

    big_radius = rho * params.alpha
    _, big_labels = _cluster(pts, big_radius, params.min_pts - tau)
    big = true_spans(pts, Labeling.from_array(big_labels), big_radius)

    coarse = _lattice(grid.d, 3)
    fine = _lattice(grid.d, 5)
    for span in span_set.spans:
        cells = np.asarray(span.cells, dtype=np.float64).reshape(-1, grid.d)
        candidates = [c for c in big if _cells_inside(cells, grid.w, c.centers, big_radius, coarse)]
        if not any(_cells_inside(cells, grid.w, c.centers, big_radius, fine) for c in candidates):
            logger.debug(f"Span {span.span_id} is not inside any relaxed cluster span")
            return SandwichResult.VIOLATED_CONDITION_2
    return SandwichResult.OK
