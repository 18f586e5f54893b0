"""
Differentially private histogram module
Exact cell frequencies, the dense Laplace histogram and the linear-time
high-pass-filter histogram that only materializes noisy counts >= theta
"""

import hashlib
import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, Optional

import numpy as np

from .dp_noise import sample_binomial, sample_clipped_laplace, sample_laplace
from .errors import CapacityError, ParameterError, ResourceError
from .grid import CellIndex, GridSpec, cell_coords, cell_ids, cells_of, validate_cell

logger = logging.getLogger(__name__)

NAIVE = "naive"
LINEAR = "linear"


@dataclass(frozen=True)
class HistogramLimits:
    """Guards against materializing a huge universe or an absurd phantom draw"""
    max_naive_cells: int = 10 ** 8
    phantom_ratio_limit: int = 64
    phantom_floor: int = 10 ** 6

    @classmethod
    def from_config(cls, config) -> "HistogramLimits":
        return cls(
            max_naive_cells=int(config.get('histogram.max_naive_cells', cls.max_naive_cells)),
            phantom_ratio_limit=int(config.get('histogram.phantom_ratio_limit', cls.phantom_ratio_limit)),
            phantom_floor=int(config.get('histogram.phantom_floor', cls.phantom_floor)),
        )


def _lookup(sorted_ids: np.ndarray, values: np.ndarray, query: np.ndarray, fill=0):
    """values[k] where sorted_ids[k] == query, fill where the id is absent"""
    query = np.asarray(query, dtype=np.int64)
    out = np.full(query.shape, fill, dtype=values.dtype)
    if sorted_ids.size == 0 or query.size == 0:
        return out
    pos = np.searchsorted(sorted_ids, query)
    pos_clipped = np.minimum(pos, sorted_ids.size - 1)
    hit = sorted_ids[pos_clipped] == query
    out[hit] = values[pos_clipped[hit]]
    return out


class FrequencyMap(Mapping):
    """Read-only map CellIndex -> exact count over occupied cells, backed by sorted ids"""

    def __init__(self, spec: GridSpec, ids: np.ndarray, counts: np.ndarray):
        self.spec = spec
        self.ids = np.asarray(ids, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.ids.setflags(write=False)
        self.counts.setflags(write=False)

    @property
    def total(self) -> int:
        """Number of points counted"""
        return int(self.counts.sum())

    def counts_at(self, ids) -> np.ndarray:
        return _lookup(self.ids, self.counts, ids, fill=0)

    def __getitem__(self, cell: CellIndex) -> int:
        cell = validate_cell(self.spec, cell)
        count = int(self.counts_at(cell_ids(self.spec, [cell]))[0])
        if count == 0:
            raise KeyError(cell)
        return count

    def __iter__(self) -> Iterator[CellIndex]:
        for row in cell_coords(self.spec, self.ids):
            yield tuple(int(c) for c in row)

    def __len__(self) -> int:
        return int(self.ids.size)

    def __repr__(self):
        return f"FrequencyMap(cells={len(self)}, total={self.total})"


def exact_counts(points, spec: GridSpec) -> FrequencyMap:
    """Exact per-cell counts x_i for occupied cells, in one vectorized pass"""
    coords = cells_of(spec, points)
    ids = cell_ids(spec, coords)
    unique_ids, counts = np.unique(ids, return_counts=True)
    logger.debug(f"Counted {ids.size} points into {unique_ids.size} occupied cells")
    return FrequencyMap(spec, unique_ids, counts)


class SparseHistogram:
    """Released noisy histogram

    Naive releases are dense: one (possibly negative) value for every universe
    cell, ids implicit as 0..|X|-1. Linear releases store only the cells whose
    noisy count reached theta, every absent cell reads as 0.
    """

    def __init__(self, spec: GridSpec, values: np.ndarray, theta: float, epsilon_spent: float,
                 mode: str, ids: Optional[np.ndarray] = None):
        self.spec = spec
        self.values = np.asarray(values, dtype=np.float64)
        self.ids = None if ids is None else np.asarray(ids, dtype=np.int64)
        self.theta = float(theta)
        self.epsilon_spent = float(epsilon_spent)
        self.mode = mode
        self.values.setflags(write=False)
        if self.ids is not None:
            self.ids.setflags(write=False)
        self._entries: Optional[Dict[CellIndex, float]] = None

    @property
    def universe_size(self) -> int:
        return self.spec.universe_size

    @property
    def is_dense(self) -> bool:
        return self.ids is None

    def __len__(self) -> int:
        return int(self.values.size)

    def stored_ids(self) -> np.ndarray:
        if self.is_dense:
            return np.arange(self.values.size, dtype=np.int64)
        return self.ids

    def values_at(self, ids) -> np.ndarray:
        """Noisy values for linear cell ids; absent cells read as 0"""
        ids = np.asarray(ids, dtype=np.int64)
        if self.is_dense:
            return self.values[ids]
        return _lookup(self.ids, self.values, ids, fill=0.0)

    def get(self, cell: CellIndex) -> float:
        cell = validate_cell(self.spec, cell)
        return float(self.values_at(cell_ids(self.spec, [cell]))[0])

    @property
    def entries(self) -> Dict[CellIndex, float]:
        """Stored entries as a dict in lexicographic cell order"""
        if self._entries is None:
            coords = cell_coords(self.spec, self.stored_ids())
            self._entries = {
                tuple(int(c) for c in row): float(v) for row, v in zip(coords, self.values)
            }
        return self._entries

    def digest(self) -> str:
        """SHA-256 over mode, theta, ids and values; identical releases share a digest"""
        h = hashlib.sha256()
        h.update(self.mode.encode())
        h.update(np.float64(self.theta).tobytes())
        h.update(np.asarray(self.spec.shape, dtype=np.int64).tobytes())
        h.update(self.stored_ids().tobytes())
        h.update(self.values.tobytes())
        return h.hexdigest()

    def __repr__(self):
        return (f"SparseHistogram(mode={self.mode}, entries={len(self)}, "
                f"universe={self.universe_size}, theta={self.theta:.4g})")


def build_naive(freqs: FrequencyMap, spec: GridSpec, eps: float, rng: np.random.Generator,
                limits: HistogramLimits = HistogramLimits()) -> SparseHistogram:
    """Add Lap(1/eps) to every universe cell count, zeros included"""
    if not eps > 0:
        raise ParameterError(f"epsilon must be positive, got {eps}")
    universe = spec.universe_size
    if universe > limits.max_naive_cells:
        raise CapacityError(
            f"Naive histogram needs {universe} cells (limit {limits.max_naive_cells}); "
            f"use the linear histogram (--hist linear) instead"
        )
    values = sample_laplace(rng, 1.0 / eps, size=universe)
    values[freqs.ids] += freqs.counts
    logger.info(f"Released naive Laplace histogram over {universe} cells")
    return SparseHistogram(spec, values, theta=0.0, epsilon_spent=eps, mode=NAIVE)


def _sample_complement(rng: np.random.Generator, universe: int, excluded: np.ndarray,
                       m: int) -> np.ndarray:
    """Simple random sample of m distinct ids from [0, universe) minus excluded"""
    if m == 0:
        return np.empty(0, dtype=np.int64)
    if universe <= 4 * (m + excluded.size):
        complement = np.setdiff1d(np.arange(universe, dtype=np.int64), excluded,
                                  assume_unique=True)
        return rng.choice(complement, size=m, replace=False)

    chosen = np.empty(0, dtype=np.int64)
    rounds = 0
    while chosen.size < m:
        rounds += 1
        need = m - chosen.size
        draws = rng.integers(0, universe, size=need + need // 8 + 16, dtype=np.int64)
        draws = draws[~np.isin(draws, excluded)]
        merged = np.concatenate([chosen, draws])
        _, first = np.unique(merged, return_index=True)
        chosen = merged[np.sort(first)]
    logger.debug(f"Phantom sampling took {rounds} rejection round(s)")
    return chosen[:m]


def build_linear(freqs: FrequencyMap, spec: GridSpec, eps: float, theta: float,
                 rng: np.random.Generator,
                 limits: HistogramLimits = HistogramLimits()) -> SparseHistogram:
    """High-pass-filter histogram: same law as the naive release truncated below theta

    Occupied cells keep x + Lap(1/eps) when it reaches theta. Among the M empty
    cells, Bin(M, p) with p = e^{-eps theta} / 2 phantom cells are picked by SRS
    and given values from the Laplace tail above theta.
    """
    if not eps > 0:
        raise ParameterError(f"epsilon must be positive, got {eps}")
    if not theta > 0:
        raise ParameterError(f"theta must be positive for the linear histogram, got {theta}")
    spec.require_linear_ids()

    noisy = freqs.counts + sample_laplace(rng, 1.0 / eps, size=len(freqs))
    keep = noisy >= theta
    occupied_ids = freqs.ids[keep]
    occupied_values = noisy[keep]

    universe = spec.universe_size
    empty_cells = universe - len(freqs)
    p = 0.5 * math.exp(-eps * theta)
    m = sample_binomial(rng, empty_cells, p)
    n = freqs.total
    if m > limits.phantom_ratio_limit * n and m > limits.phantom_floor:
        raise ResourceError(
            f"Phantom draw m={m} exceeds {limits.phantom_ratio_limit}x the {n} input points; "
            f"raise theta or use the naive histogram"
        )

    phantom_ids = _sample_complement(rng, universe, freqs.ids, m)
    phantom_values = sample_clipped_laplace(rng, eps, theta, size=m)

    ids = np.concatenate([occupied_ids, phantom_ids])
    values = np.concatenate([occupied_values, phantom_values])
    order = np.argsort(ids, kind="stable")
    logger.info(f"Released linear histogram: {occupied_ids.size} of {len(freqs)} occupied cells kept, "
                f"{m} phantom cells, theta={theta:.4g}")
    return SparseHistogram(spec, values[order], theta=theta, epsilon_spent=eps,
                           mode=LINEAR, ids=ids[order])


def choose_theta(spec: GridSpec, n: int, eps: float) -> float:
    """Threshold for the linear histogram; 0 means the naive path is preferable"""
    if n < 0:
        raise ParameterError(f"n must be non-negative, got {n}")
    if not eps > 0:
        raise ParameterError(f"epsilon must be positive, got {eps}")
    universe = spec.universe_size
    if n > universe / 2:
        return 0.0
    return max(0.0, math.log(universe / max(int(n), 1)) / eps)


def histogram_error(hist: SparseHistogram, freqs: FrequencyMap) -> float:
    """Realized l_inf error over the whole universe"""
    if hist.is_dense:
        exact = np.zeros(hist.values.size, dtype=np.float64)
        exact[freqs.ids] = freqs.counts
        return float(np.max(np.abs(hist.values - exact))) if exact.size else 0.0
    ids = np.union1d(hist.ids, freqs.ids)
    if ids.size == 0:
        return 0.0
    return float(np.max(np.abs(hist.values_at(ids) - freqs.counts_at(ids))))


def dump_histogram(hist: SparseHistogram, path) -> Path:
    """Write one line per stored entry: cell coordinates then noisy count"""
    path = Path(path)
    coords = cell_coords(hist.spec, hist.stored_ids())
    with open(path, 'w') as f:
        for row, value in zip(coords, hist.values):
            f.write(",".join(str(int(c)) for c in row) + f",{float(value)!r}\n")
    logger.info(f"Wrote {len(hist)} histogram entries to {path}")
    return path
