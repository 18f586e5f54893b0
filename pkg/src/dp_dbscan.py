"""
Span-based DP-DBSCAN pipeline
Histogram release, noisy neighborhood upper bounds, core-cell superset,
merging into approximate spans, and cell-level classification
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import correlate

from .dbscan_oracle import DbscanParams
from .dp_histogram import (LINEAR, NAIVE, FrequencyMap, HistogramLimits, SparseHistogram,
                           build_linear, build_naive, choose_theta, exact_counts)
from .dp_noise import ApproxBounds, GammaKind, PrivacyParams, linear_threshold
from .errors import ParameterError
from .grid import (CellIndex, GridSpec, _offsets_for, as_points, cell_coords, cell_ids,
                   cells_of, in_domain, kappa, neighbor_offsets)

logger = logging.getLogger(__name__)

HISTOGRAM_MODES = ("auto", NAIVE, LINEAR)

# Candidate cells generated per block in the sparse upper-bound scan
_SCAN_BLOCK = 1 << 18


@dataclass(frozen=True)
class Provenance:
    """Everything needed to audit a released span set"""
    epsilon: float
    beta: float
    theta: float
    eta_prime: float
    alpha: float
    d: int
    w: float
    kappa: int
    gamma: float
    big_gamma: float
    gamma_kind: str
    tau: float
    rho: float
    min_pts: int
    min_pts_effective: float
    threshold_shift: float
    one_sided_tau: bool
    seed: Optional[int]
    histogram_mode: str
    histogram_hash: str
    n_released_entries: int
    n_points: int

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Provenance":
        return cls(**data)


@dataclass(frozen=True)
class Span:
    span_id: int
    cells: Tuple[CellIndex, ...]

    def __len__(self):
        return len(self.cells)


@dataclass(frozen=True)
class SpanSet:
    """Approximate spans: disjoint cell unions, separated by at least alpha"""
    spans: Tuple[Span, ...]
    grid: GridSpec
    provenance: Optional[Provenance] = None
    _ids: np.ndarray = field(default=None, init=False, repr=False, compare=False)
    _owners: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        ids, owners = [], []
        for span in self.spans:
            ids.append(cell_ids(self.grid, span.cells))
            owners.append(np.full(len(span.cells), span.span_id, dtype=np.int64))
        ids = np.concatenate(ids) if ids else np.empty(0, dtype=np.int64)
        owners = np.concatenate(owners) if owners else np.empty(0, dtype=np.int64)
        order = np.argsort(ids, kind="stable")
        object.__setattr__(self, "_ids", ids[order])
        object.__setattr__(self, "_owners", owners[order])

    def __len__(self) -> int:
        return len(self.spans)

    @property
    def num_cells(self) -> int:
        return int(self._ids.size)

    def lookup_cells(self, coords) -> np.ndarray:
        """Span id of each cell row, 0 for cells in no span or outside the grid"""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.grid.d)
        out = np.zeros(coords.shape[0], dtype=np.int64)
        if self._ids.size == 0 or coords.shape[0] == 0:
            return out
        inside = in_domain(self.grid, coords)
        query = cell_ids(self.grid, coords[inside])
        pos = np.minimum(np.searchsorted(self._ids, query), self._ids.size - 1)
        hit = self._ids[pos] == query
        found = np.zeros(query.size, dtype=np.int64)
        found[hit] = self._owners[pos[hit]]
        out[inside] = found
        return out

    def with_provenance(self, provenance: Provenance) -> "SpanSet":
        return replace(self, provenance=provenance)


@dataclass(frozen=True)
class HistogramRelease:
    """Output of the only step that reads the points; everything after is post-processing"""
    histogram: SparseHistogram
    grid: GridSpec
    privacy: PrivacyParams
    bounds: ApproxBounds
    gamma_kind: str
    n_points: int
    seed: Optional[int] = None


class UnionFind:
    """Union-find over 0..n-1 with union by rank and path compression"""

    def __init__(self, n: int):
        self._leader = list(range(n))
        self._rank = [0] * n
        self.n_sets = n

    def __repr__(self):
        return f"UnionFind: contains {self.n_sets} sets"

    def find(self, s: int) -> int:
        path = [s]
        parent = self._leader[s]
        while parent != self._leader[parent]:
            path.append(parent)
            parent = self._leader[parent]
        for a in path:
            self._leader[a] = parent
        return parent

    def union(self, a: int, b: int) -> bool:
        s1, s2 = self.find(a), self.find(b)
        if s1 == s2:
            return False
        r1, r2 = self._rank[s1], self._rank[s2]
        if r2 > r1:
            s1, s2 = s2, s1
        elif r1 == r2:
            self._rank[s1] += 1
        self._leader[s2] = s1
        self.n_sets -= 1
        return True

    def leaders(self) -> np.ndarray:
        return np.array([self.find(i) for i in range(len(self._leader))], dtype=np.int64)


def _stencil(spec: GridSpec) -> np.ndarray:
    offsets = neighbor_offsets(spec)
    kernel = np.zeros((2 * spec.reach + 1,) * spec.d, dtype=np.float64)
    kernel[tuple((offsets + spec.reach).T)] = 1.0
    return kernel


def _dense_sums(spec: GridSpec, values: np.ndarray) -> np.ndarray:
    """Neighborhood sums of a dense per-cell array, cells outside the grid read as 0"""
    return correlate(values.reshape(spec.shape), _stencil(spec), mode="constant", cval=0.0).reshape(-1)


def noisy_upper_bounds(hist: SparseHistogram, coords, big_gamma: float) -> np.ndarray:
    """Vectorized noisy_ub for rows of cell coordinates"""
    spec = hist.spec
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, spec.d)
    sums = np.zeros(coords.shape[0], dtype=np.float64)
    for offset in neighbor_offsets(spec):
        neighbors = coords + offset
        inside = in_domain(spec, neighbors)
        sums[inside] += hist.values_at(cell_ids(spec, neighbors[inside]))
    return sums + big_gamma


def noisy_ub(hist: SparseHistogram, spec: GridSpec, cell: CellIndex, big_gamma: float) -> float:
    """Sum of noisy counts over NB(cell) plus the upward shift big_gamma"""
    if hist.spec != spec:
        raise ParameterError("Histogram was built over a different grid")
    return float(noisy_upper_bounds(hist, [cell], big_gamma)[0])


def _candidate_ids(spec: GridSpec, source_ids: np.ndarray) -> np.ndarray:
    """Sorted unique ids of in-domain cells within neighborhood range of the sources"""
    offsets = neighbor_offsets(spec)
    per_block = max(1, _SCAN_BLOCK // offsets.shape[0])
    chunks = []
    for start in range(0, source_ids.size, per_block):
        coords = cell_coords(spec, source_ids[start:start + per_block])
        around = (coords[:, None, :] + offsets[None, :, :]).reshape(-1, spec.d)
        around = around[in_domain(spec, around)]
        chunks.append(np.unique(cell_ids(spec, around)))
    if not chunks:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(chunks))


def _core_cell_ids(hist: SparseHistogram, min_pts_effective: float,
                   big_gamma: float) -> np.ndarray:
    spec = hist.spec
    if not min_pts_effective >= 1:
        raise ParameterError(f"Effective MinPts must be >= 1, got {min_pts_effective}")
    if hist.is_dense:
        bounds = _dense_sums(spec, hist.values) + big_gamma
        return np.flatnonzero(bounds >= min_pts_effective).astype(np.int64)

    # only cells near a positive stored value can clear a threshold above big_gamma
    if big_gamma >= min_pts_effective:
        raise ParameterError(
            f"Upward shift {big_gamma:.4g} reaches the threshold {min_pts_effective:.4g}; "
            f"every unstored cell would qualify as core"
        )
    sources = hist.ids[hist.values > 0]
    candidates = _candidate_ids(spec, sources)
    logger.debug(f"Scanning {candidates.size} candidate cells around {sources.size} entries")
    core = []
    for start in range(0, candidates.size, _SCAN_BLOCK):
        block = candidates[start:start + _SCAN_BLOCK]
        bounds = noisy_upper_bounds(hist, cell_coords(spec, block), big_gamma)
        core.append(block[bounds >= min_pts_effective])
    return np.concatenate(core) if core else np.empty(0, dtype=np.int64)


def find_core_cells(hist: SparseHistogram, spec: GridSpec, min_pts_effective: float,
                    big_gamma: float) -> set:
    """Superset of core cells: {X : noisy_ub(X) >= min_pts_effective}"""
    if hist.spec != spec:
        raise ParameterError("Histogram was built over a different grid")
    ids = _core_cell_ids(hist, min_pts_effective, big_gamma)
    return {tuple(int(c) for c in row) for row in cell_coords(spec, ids)}


def _merge_offsets(spec: GridSpec, alpha: Optional[float]) -> np.ndarray:
    if alpha is None or alpha == spec.alpha:
        return neighbor_offsets(spec)
    if not alpha > 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    ratio = alpha / spec.w
    return _offsets_for(spec.d, ratio * ratio, math.ceil(ratio))


def merge_cells(core_cells: Union[Iterable[CellIndex], np.ndarray], spec: GridSpec,
                alpha: Optional[float] = None) -> SpanSet:
    """Connected components of core cells under min_cell_distance < alpha

    Span ids are 1..k in order of each component's lexicographically smallest cell.
    """
    coords = np.asarray(list(core_cells) if not isinstance(core_cells, np.ndarray) else core_cells,
                        dtype=np.int64).reshape(-1, spec.d)
    if coords.shape[0] and not np.all(in_domain(spec, coords)):
        raise ParameterError("Core cells must be valid grid cells")
    ids = np.unique(cell_ids(spec, coords))
    return _merge_ids(spec, ids, alpha)


def _merge_ids(spec: GridSpec, ids: np.ndarray, alpha: Optional[float] = None) -> SpanSet:
    if ids.size == 0:
        return SpanSet(spans=(), grid=spec)

    coords = cell_coords(spec, ids)
    uf = UnionFind(ids.size)
    merges = 0
    for offset in _merge_offsets(spec, alpha):
        # each unordered pair is visited once, from its lexicographically smaller cell
        if tuple(offset) <= (0,) * spec.d:
            continue
        neighbors = coords + offset
        inside = np.flatnonzero(in_domain(spec, neighbors))
        if inside.size == 0:
            continue
        neighbor_ids = cell_ids(spec, neighbors[inside])
        pos = np.minimum(np.searchsorted(ids, neighbor_ids), ids.size - 1)
        hit = ids[pos] == neighbor_ids
        for a, b in zip(inside[hit].tolist(), pos[hit].tolist()):
            merges += uf.union(a, b)
    logger.debug(f"Merged {ids.size} core cells with {merges} unions into {uf.n_sets} spans")

    leaders = uf.leaders()
    # ids are sorted, so the first index of each leader is its smallest cell
    _, first = np.unique(leaders, return_index=True)
    order = np.sort(first)
    spans = []
    for span_id, head in enumerate(order, start=1):
        members = np.flatnonzero(leaders == leaders[head])
        cells = tuple(tuple(int(c) for c in row) for row in coords[members])
        spans.append(Span(span_id=span_id, cells=cells))
    return SpanSet(spans=tuple(spans), grid=spec)


def _resolve_mode(grid: GridSpec, n: int, privacy: PrivacyParams, mode: str) -> Tuple[str, float]:
    if mode not in HISTOGRAM_MODES:
        raise ParameterError(f"Unknown histogram mode '{mode}'; expected one of {HISTOGRAM_MODES}")
    if mode == NAIVE:
        return NAIVE, 0.0
    if privacy.theta > 0:
        return LINEAR, privacy.theta
    if mode == "auto":
        theta = choose_theta(grid, n, privacy.epsilon)
        return (LINEAR, theta) if theta > 0 else (NAIVE, 0.0)
    theta = linear_threshold(grid.universe_size, n, privacy.epsilon)
    if theta <= 0:
        raise ParameterError(
            f"Automatic theta is 0 for n={n} over {grid.universe_size} cells; pass --theta explicitly"
        )
    return LINEAR, theta


def release_histogram(points, alpha: float, privacy: PrivacyParams, eta_prime: float,
                      rng: np.random.Generator, *, mode: str = "auto",
                      limits: HistogramLimits = HistogramLimits(), seed: Optional[int] = None,
                      gamma_kind: Optional[Union[GammaKind, str]] = None,
                      delta: Optional[float] = None, d: Optional[int] = None) -> HistogramRelease:
    """Spend epsilon once: grid the points and release a noisy histogram"""
    pts = np.asarray(points, dtype=np.float64)
    if d is None:
        d = pts.shape[1] if pts.ndim == 2 else 1
    grid = GridSpec.create(d, alpha, eta_prime)
    grid.require_linear_ids()
    pts = as_points(grid, pts)
    n = int(pts.shape[0])
    logger.info(f"Grid: d={grid.d}, w={grid.w:.4g}, {grid.cells_per_axis} cells per axis, "
                f"|X|={grid.universe_size}")

    freqs = exact_counts(pts, grid)
    resolved, theta = _resolve_mode(grid, n, privacy, mode)
    if resolved == NAIVE:
        hist = build_naive(freqs, grid, privacy.epsilon, rng, limits)
    else:
        hist = build_linear(freqs, grid, privacy.epsilon, theta, rng, limits)

    if gamma_kind is None:
        gamma_kind = GammaKind.LINEAR_HIST if resolved == LINEAR else GammaKind.LAPLACE
    gamma_kind = GammaKind(gamma_kind)
    bounds = ApproxBounds.derive(gamma_kind, kappa(grid), privacy.epsilon, grid.universe_size,
                                 privacy.beta, eta_prime, theta=theta, delta=delta, n=n)
    logger.info(f"Histogram mode {resolved}: {len(hist)} entries, kappa={bounds.kappa}, "
                f"Gamma={bounds.big_gamma:.4g}, tau={bounds.tau:.4g}")
    return HistogramRelease(histogram=hist, grid=grid,
                            privacy=replace(privacy, theta=theta), bounds=bounds,
                            gamma_kind=gamma_kind.value, n_points=n, seed=seed)


def spans_from_release(release: HistogramRelease, min_pts: int,
                       one_sided_tau: bool = False) -> SpanSet:
    """Threshold and merge a released histogram; reads no point data"""
    params = DbscanParams(release.grid.alpha, min_pts)
    bounds = release.bounds
    shift = bounds.big_gamma if one_sided_tau else bounds.tau
    min_pts_effective = params.min_pts + shift

    core_ids = _core_cell_ids(release.histogram, min_pts_effective, bounds.big_gamma)
    spans = _merge_ids(release.grid, core_ids)
    logger.info(f"MinPts={min_pts} (effective {min_pts_effective:.4g}): "
                f"{core_ids.size} core cells in {len(spans)} spans")

    hist = release.histogram
    provenance = Provenance(
        epsilon=release.privacy.epsilon, beta=release.privacy.beta, theta=hist.theta,
        eta_prime=release.grid.eta_prime, alpha=release.grid.alpha, d=release.grid.d,
        w=release.grid.w, kappa=bounds.kappa, gamma=bounds.gamma, big_gamma=bounds.big_gamma,
        gamma_kind=release.gamma_kind, tau=bounds.tau, rho=bounds.rho, min_pts=params.min_pts,
        min_pts_effective=min_pts_effective, threshold_shift=shift, one_sided_tau=one_sided_tau,
        seed=release.seed, histogram_mode=hist.mode, histogram_hash=hist.digest(),
        n_released_entries=len(hist), n_points=release.n_points,
    )
    return spans.with_provenance(provenance)


def sweep_min_pts(release: HistogramRelease, min_pts_values: Sequence[int],
                  one_sided_tau: bool = False) -> Dict[int, SpanSet]:
    """Several MinPts thresholds over one release; epsilon is spent only once"""
    return {int(k): spans_from_release(release, int(k), one_sided_tau) for k in min_pts_values}


def run(points, dbscan_params: DbscanParams, privacy_params: PrivacyParams, eta_prime: float,
        rng: np.random.Generator, **options) -> SpanSet:
    """End-to-end pipeline: release, threshold at MinPts + tau, merge"""
    one_sided_tau = options.pop("one_sided_tau", False)
    release = release_histogram(points, dbscan_params.alpha, privacy_params, eta_prime, rng,
                                **options)
    return spans_from_release(release, dbscan_params.min_pts, one_sided_tau)


def classify_many(span_set: SpanSet, points) -> np.ndarray:
    """Span id of each point's cell, 0 for noise"""
    pts = as_points(span_set.grid, points)
    return span_set.lookup_cells(cells_of(span_set.grid, pts))


def classify(span_set: SpanSet, point) -> int:
    pts = as_points(span_set.grid, np.asarray(point, dtype=np.float64).reshape(1, -1))
    return int(classify_many(span_set, pts)[0])


def neighborhood_deviation(hist: SparseHistogram, freqs: FrequencyMap) -> float:
    """Realized max over all cells of |sum over NB(X) of (noisy - exact)|"""
    spec = hist.spec
    if hist.is_dense:
        diff = hist.values.copy()
        diff[freqs.ids] -= freqs.counts
        return float(np.max(np.abs(_dense_sums(spec, diff)))) if diff.size else 0.0
    touched = np.union1d(hist.ids, freqs.ids)
    if touched.size == 0:
        return 0.0
    candidates = _candidate_ids(spec, touched)
    coords = cell_coords(spec, candidates)
    deviation = np.zeros(candidates.size, dtype=np.float64)
    for offset in neighbor_offsets(spec):
        neighbors = coords + offset
        inside = in_domain(spec, neighbors)
        ids = cell_ids(spec, neighbors[inside])
        deviation[inside] += hist.values_at(ids) - freqs.counts_at(ids)
    return float(np.max(np.abs(deviation)))


def exact_upper_bounds(freqs: FrequencyMap, coords) -> np.ndarray:
    """Noise-free UB(X) for rows of cell coordinates"""
    spec = freqs.spec
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, spec.d)
    sums = np.zeros(coords.shape[0], dtype=np.float64)
    for offset in neighbor_offsets(spec):
        neighbors = coords + offset
        inside = in_domain(spec, neighbors)
        sums[inside] += freqs.counts_at(cell_ids(spec, neighbors[inside]))
    return sums


def span_cells(span_set: SpanSet) -> List[CellIndex]:
    return [cell for span in span_set.spans for cell in span.cells]
