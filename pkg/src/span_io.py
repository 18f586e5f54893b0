"""
Span file input/output
Affine rescaling records, canonical JSON span files and plot rectangles
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from .dp_dbscan import Provenance, Span, SpanSet
from .errors import DataError
from .grid import GridSpec, cell_box

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class AffineTransform:
    """normalized = (raw - offset) / scale, one isotropic scale repeated per axis"""
    offset: Tuple[float, ...]
    scale: Tuple[float, ...]

    @classmethod
    def identity(cls, d: int) -> "AffineTransform":
        return cls(offset=(0.0,) * d, scale=(1.0,) * d)

    @classmethod
    def fit(cls, raw, margin: float = 0.0) -> "AffineTransform":
        """Isotropic rescale of the bounding box into [margin, 1 - margin]^d"""
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim != 2 or raw.shape[0] == 0:
            raise DataError("Cannot fit a rescaling transform to an empty point set")
        lo, hi = raw.min(axis=0), raw.max(axis=0)
        extent = float(np.max(hi - lo))
        if extent == 0.0:
            # a single location: park it in the middle of the cube
            return cls(offset=tuple(float(v) for v in lo - 0.5), scale=(1.0,) * raw.shape[1])
        scale = extent / (1.0 - 2.0 * margin)
        offset = lo - margin * scale
        return cls(offset=tuple(float(v) for v in offset), scale=(scale,) * raw.shape[1])

    @property
    def d(self) -> int:
        return len(self.offset)

    def apply(self, raw) -> np.ndarray:
        raw = np.asarray(raw, dtype=np.float64).reshape(-1, self.d)
        normalized = (raw - np.asarray(self.offset)) / np.asarray(self.scale)
        return np.clip(normalized, 0.0, 1.0)

    def invert(self, normalized) -> np.ndarray:
        normalized = np.asarray(normalized, dtype=np.float64).reshape(-1, self.d)
        return normalized * np.asarray(self.scale) + np.asarray(self.offset)

    def normalize_length(self, length: float) -> float:
        """Raw-unit distance to normalized units (alpha' = alpha / scale)"""
        return float(length) / max(self.scale)

    def as_dict(self) -> dict:
        return {"offset": list(self.offset), "scale": list(self.scale)}

    @classmethod
    def from_dict(cls, data: dict) -> "AffineTransform":
        return cls(offset=tuple(float(v) for v in data["offset"]),
                   scale=tuple(float(v) for v in data["scale"]))


def spans_to_dict(span_set: SpanSet, transform: Optional[AffineTransform] = None) -> dict:
    grid = span_set.grid
    transform = transform or AffineTransform.identity(grid.d)
    return {
        "format_version": FORMAT_VERSION,
        "grid": grid.describe(),
        "transform": transform.as_dict(),
        "spans": [
            {"id": span.span_id, "cells": [list(cell) for cell in sorted(span.cells)]}
            for span in span_set.spans
        ],
        "provenance": span_set.provenance.as_dict() if span_set.provenance else None,
    }


def spans_from_dict(data: dict) -> Tuple[SpanSet, AffineTransform]:
    try:
        g = data["grid"]
        grid = GridSpec(d=int(g["d"]), alpha=float(g["alpha_normalized"]),
                        eta_prime=float(g["eta_prime"]), w=float(g["w"]),
                        cells_per_axis=int(g["cells_per_axis"]))
        spans = tuple(
            Span(span_id=int(s["id"]), cells=tuple(tuple(int(c) for c in cell) for cell in s["cells"]))
            for s in data["spans"]
        )
        provenance = Provenance.from_dict(data["provenance"]) if data.get("provenance") else None
        transform = AffineTransform.from_dict(data["transform"])
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"Malformed spans file: {e}") from e
    return SpanSet(spans=spans, grid=grid, provenance=provenance), transform


def dumps_spans(span_set: SpanSet, transform: Optional[AffineTransform] = None) -> str:
    """Canonical text: sorted keys, fixed indentation, trailing newline"""
    return json.dumps(spans_to_dict(span_set, transform), sort_keys=True, indent=2) + "\n"


def write_spans(path, span_set: SpanSet, transform: Optional[AffineTransform] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='\n') as f:
        f.write(dumps_spans(span_set, transform))
    logger.info(f"Wrote {len(span_set)} spans to {path}")
    return path


def read_spans(path) -> Tuple[SpanSet, AffineTransform]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Spans file {path} not found")
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"Spans file {path} is not valid JSON: {e}") from e
    return spans_from_dict(data)


def span_rectangles(span_set: SpanSet, transform: Optional[AffineTransform] = None) -> pd.DataFrame:
    """One row per span cell: id, min corner and max corner in raw units"""
    grid = span_set.grid
    transform = transform or AffineTransform.identity(grid.d)
    rows = []
    for span in span_set.spans:
        for cell in span.cells:
            lower, upper = cell_box(grid, cell)
            raw_lower = transform.invert(lower)[0]
            raw_upper = transform.invert(upper)[0]
            rows.append([span.span_id, *raw_lower.tolist(), *raw_upper.tolist()])
    columns = (["id"] + [f"min_{i}" for i in range(grid.d)] + [f"max_{i}" for i in range(grid.d)])
    return pd.DataFrame(rows, columns=columns)


def write_rectangles(path, span_set: SpanSet, transform: Optional[AffineTransform] = None) -> Path:
    path = Path(path)
    frame = span_rectangles(span_set, transform)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {len(frame)} cell rectangles to {path}")
    return path
