"""
Grid geometry module
Cell decomposition of the normalized unit cube: point-to-cell mapping,
alpha-neighborhoods of cells and inter-cell distances
"""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np

from .errors import CapacityError, DomainError, ParameterError

logger = logging.getLogger(__name__)

CellIndex = Tuple[int, ...]

# Linear cell ids are int64; stay clear of the sign bit and of overflow in id arithmetic
MAX_UNIVERSE_IDS = 2 ** 62


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid over [0,1]^d with cells of width w = eta' * alpha / sqrt(d)"""
    d: int
    alpha: float
    eta_prime: float
    w: float
    cells_per_axis: int

    @classmethod
    def create(cls, d: int, alpha: float, eta_prime: float = 1.0) -> "GridSpec":
        if int(d) != d or d < 1:
            raise ParameterError(f"Dimension must be a positive integer, got {d}")
        if not 0.0 < alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1) in normalized units, got {alpha}")
        if not 0.0 < eta_prime <= 1.0:
            raise ParameterError(f"eta_prime must lie in (0, 1], got {eta_prime}")

        d = int(d)
        w = eta_prime * alpha / math.sqrt(d)
        cells_per_axis = max(1, math.ceil(1.0 / w))
        return cls(d=d, alpha=float(alpha), eta_prime=float(eta_prime), w=w,
                   cells_per_axis=cells_per_axis)

    @property
    def universe_size(self) -> int:
        """|X|, the number of cells (Python int, may exceed 64 bits)"""
        return self.cells_per_axis ** self.d

    @property
    def gap_limit(self) -> float:
        """(alpha / w)^2 = d / eta'^2; cells are alpha-close iff their squared gap sum is below it"""
        return self.d / (self.eta_prime ** 2)

    @property
    def reach(self) -> int:
        """Largest per-axis offset that can still be alpha-close"""
        return math.ceil(math.sqrt(self.gap_limit))

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.cells_per_axis,) * self.d

    def require_linear_ids(self):
        if self.universe_size >= MAX_UNIVERSE_IDS:
            raise CapacityError(
                f"Universe of {self.universe_size} cells does not fit 64-bit cell ids; "
                f"increase alpha or eta_prime, or reduce the dimension"
            )

    def describe(self) -> dict:
        return {
            "d": self.d,
            "w": self.w,
            "alpha_normalized": self.alpha,
            "eta_prime": self.eta_prime,
            "cells_per_axis": self.cells_per_axis,
        }


def as_points(spec: GridSpec, points) -> np.ndarray:
    """Validate and return points as an (n, d) float array inside [0,1]^d"""
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, spec.d)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.shape[0] == spec.d and spec.d > 1 else arr.reshape(-1, 1)
    if arr.shape[1] != spec.d:
        raise ParameterError(f"Points have dimension {arr.shape[1]}, grid expects {spec.d}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("Points contain NaN or infinite coordinates")
    bad = np.flatnonzero(np.any((arr < 0.0) | (arr > 1.0), axis=1))
    if bad.size:
        raise DomainError(
            f"{bad.size} point(s) outside [0,1]^{spec.d} (first at index {bad[0]}); rescale first"
        )
    return arr


def cells_of(spec: GridSpec, points) -> np.ndarray:
    """Vectorized cell_of: (n, d) int64 array of cell coordinates"""
    arr = as_points(spec, points)
    coords = np.floor(arr / spec.w).astype(np.int64)
    # coordinates equal to 1.0 (or rounding up to the edge) go to the last cell
    np.minimum(coords, spec.cells_per_axis - 1, out=coords)
    return coords


def cell_of(spec: GridSpec, p) -> CellIndex:
    """Cell containing point p, with coordinates equal to 1.0 clamped into the last cell"""
    p = np.asarray(p, dtype=np.float64).reshape(1, spec.d)
    return tuple(int(c) for c in cells_of(spec, p)[0])


def in_domain(spec: GridSpec, coords: np.ndarray) -> np.ndarray:
    """Row mask of cell coordinates that lie inside the grid"""
    coords = np.asarray(coords)
    return np.all((coords >= 0) & (coords < spec.cells_per_axis), axis=-1)


def cell_ids(spec: GridSpec, coords) -> np.ndarray:
    """Row-major linear ids; numeric order equals lexicographic order of coordinates"""
    spec.require_linear_ids()
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, spec.d)
    if coords.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    return np.ravel_multi_index(tuple(coords.T), spec.shape).astype(np.int64)


def cell_coords(spec: GridSpec, ids) -> np.ndarray:
    """Inverse of cell_ids (mixed-radix decode)"""
    spec.require_linear_ids()
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    if ids.size == 0:
        return np.empty((0, spec.d), dtype=np.int64)
    return np.stack(np.unravel_index(ids, spec.shape), axis=1).astype(np.int64)


def cell_id(spec: GridSpec, cell: CellIndex) -> int:
    return int(cell_ids(spec, [cell])[0])


def validate_cell(spec: GridSpec, cell: CellIndex) -> CellIndex:
    cell = tuple(int(c) for c in cell)
    if len(cell) != spec.d or not all(0 <= c < spec.cells_per_axis for c in cell):
        raise ParameterError(f"Cell {cell} is not a valid index for a {spec.d}-d grid "
                             f"with {spec.cells_per_axis} cells per axis")
    return cell


def _gaps(a, b) -> np.ndarray:
    diff = np.abs(np.asarray(a, dtype=np.int64) - np.asarray(b, dtype=np.int64))
    return np.maximum(diff - 1, 0)


def min_cell_distance(spec: GridSpec, a: CellIndex, b: CellIndex) -> float:
    """Euclidean distance between the closed boxes of cells a and b"""
    gaps = _gaps(a, b)
    return spec.w * math.sqrt(float(np.sum(gaps * gaps)))


def within_alpha(spec: GridSpec, a: CellIndex, b: CellIndex) -> bool:
    """min_cell_distance(a, b) < alpha, decided on the integer gap sum"""
    gaps = _gaps(a, b)
    return float(np.sum(gaps * gaps)) < spec.gap_limit


@lru_cache(maxsize=64)
def _offsets_for(d: int, gap_limit: float, reach: int) -> np.ndarray:
    rows = []
    for offset in itertools.product(range(-reach, reach + 1), repeat=d):
        squared = sum(max(0, abs(o) - 1) ** 2 for o in offset)
        if squared < gap_limit:
            rows.append(offset)
    offsets = np.array(rows, dtype=np.int64).reshape(-1, d)
    offsets.setflags(write=False)
    logger.debug(f"Enumerated {len(offsets)} neighbor offsets for d={d}, reach={reach}")
    return offsets


def neighbor_offsets(spec: GridSpec) -> np.ndarray:
    """All offsets o with min_cell_distance(x, x + o) < alpha, in lexicographic order"""
    return _offsets_for(spec.d, spec.gap_limit, spec.reach)


def neighborhood(spec: GridSpec, x: CellIndex) -> List[CellIndex]:
    """NB(x): in-domain cells whose closed box meets the alpha-ball union of x, x included"""
    x = validate_cell(spec, x)
    candidates = np.asarray(x, dtype=np.int64) + neighbor_offsets(spec)
    candidates = candidates[in_domain(spec, candidates)]
    return [tuple(int(c) for c in row) for row in candidates]


def kappa(spec: GridSpec) -> int:
    """Neighborhood size of an interior cell"""
    return int(neighbor_offsets(spec).shape[0])


def kappa_bound(d: int, eta_prime: float) -> float:
    """Loose closed-form estimate (1 + 2 sqrt(d) / eta')^d, kept for reports"""
    return (1.0 + 2.0 * math.sqrt(d) / eta_prime) ** d


def cell_box(spec: GridSpec, cell: CellIndex) -> Tuple[np.ndarray, np.ndarray]:
    """Closed box [c*w, (c+1)*w] of a cell as (lower, upper) corner arrays"""
    c = np.asarray(cell, dtype=np.float64)
    return c * spec.w, (c + 1.0) * spec.w
