"""
Synthetic dataset module
Circles, moons and blobs from scikit-learn plus coincident and uniform inputs,
rescaled into the unit cube with the transform kept for unit conversion
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from sklearn.datasets import make_blobs, make_circles, make_moons
from sklearn.preprocessing import StandardScaler

from .dbscan_oracle import Labeling
from .errors import ParameterError
from .span_io import AffineTransform

logger = logging.getLogger(__name__)

KINDS = ("circles", "moons", "blobs", "coincident", "uniform")
SHAPE_KINDS = ("circles", "moons", "blobs")

DEFAULT_NOISE_SD = {"circles": 0.005, "moons": 0.01, "blobs": 0.1, "coincident": 0.0, "uniform": 0.0}

# Standardized shapes are multiplied by these before rescaling, so alpha is read in that frame
DEFAULT_SPREAD = {"circles": 1.35, "moons": 1.4, "blobs": 1.0}

# Equilateral triangle; its covariance is isotropic, so standardizing keeps the blobs round
BLOB_CENTERS = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]])


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    n: int
    noise_sd: float = 0.0
    seed: int = 0
    d: int = 2
    margin: float = 0.05
    spread: Optional[float] = None
    circles_factor: float = 0.5
    circles_outer_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"Unknown dataset kind '{self.kind}'; expected one of {KINDS}")
        if int(self.n) != self.n or self.n < 0:
            raise ParameterError(f"n must be a non-negative integer, got {self.n}")
        if not self.noise_sd >= 0:
            raise ParameterError(f"noise_sd must be non-negative, got {self.noise_sd}")
        if self.kind in SHAPE_KINDS and self.d != 2:
            raise ParameterError(f"'{self.kind}' datasets are two-dimensional, got d={self.d}")
        if int(self.d) != self.d or self.d < 1:
            raise ParameterError(f"d must be a positive integer, got {self.d}")
        if not 0.0 <= self.margin < 0.5:
            raise ParameterError(f"margin must lie in [0, 0.5), got {self.margin}")
        if self.spread is not None and not self.spread > 0:
            raise ParameterError(f"spread must be positive, got {self.spread}")
        if not 0.0 < self.circles_factor < 1.0:
            raise ParameterError(f"circles_factor must lie in (0, 1), got {self.circles_factor}")
        if not 0.0 < self.circles_outer_fraction < 1.0:
            raise ParameterError(
                f"circles_outer_fraction must lie in (0, 1), got {self.circles_outer_fraction}")

    @property
    def effective_spread(self) -> float:
        if self.spread is not None:
            return float(self.spread)
        return DEFAULT_SPREAD.get(self.kind, 1.0)

    @classmethod
    def from_config(cls, kind: str, config, n: Optional[int] = None, seed: Optional[int] = None,
                    noise_sd: Optional[float] = None, d: int = 2) -> "SynthSpec":
        if noise_sd is None:
            noise_sd = config.get(f'datagen.noise_sd.{kind}', DEFAULT_NOISE_SD.get(kind, 0.0))
        spread = config.get(f'datagen.spread.{kind}', DEFAULT_SPREAD.get(kind))
        return cls(
            kind=kind,
            n=int(n if n is not None else config.get('datagen.n', 2000)),
            noise_sd=float(noise_sd),
            seed=int(seed if seed is not None else config.get('datagen.seed', 0)),
            d=d,
            margin=float(config.get('datagen.margin', 0.05)),
            spread=float(spread) if spread is not None else None,
            circles_factor=float(config.get('datagen.circles_factor', 0.5)),
            circles_outer_fraction=float(config.get('datagen.circles_outer_fraction', 2.0 / 3.0)),
        )


def _circles_split(spec: SynthSpec) -> Tuple[int, int]:
    """Outer/inner sizes; the default 2:1 split gives both rings the same density"""
    n_in = int(round(spec.n * (1.0 - spec.circles_outer_fraction)))
    return spec.n - n_in, n_in


def _raw_points(spec: SynthSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Raw coordinates and 0-based generative component ids"""
    if spec.kind == "circles":
        return make_circles(n_samples=_circles_split(spec), noise=spec.noise_sd or None,
                            factor=spec.circles_factor, random_state=spec.seed)
    if spec.kind == "moons":
        return make_moons(n_samples=spec.n, noise=spec.noise_sd or None, random_state=spec.seed)
    if spec.kind == "blobs":
        return make_blobs(n_samples=spec.n, n_features=2, centers=BLOB_CENTERS,
                          cluster_std=spec.noise_sd, random_state=spec.seed)

    rng = np.random.default_rng(spec.seed)
    if spec.kind == "coincident":
        raw = np.zeros((spec.n, spec.d))
        if spec.noise_sd > 0:
            raw = raw + rng.normal(0.0, spec.noise_sd, size=raw.shape)
        return raw, np.zeros(spec.n, dtype=np.int64)
    return rng.random((spec.n, spec.d)), np.zeros(spec.n, dtype=np.int64)


def generate_with_transform(spec: SynthSpec) -> Tuple[np.ndarray, Labeling, AffineTransform]:
    """Points in [margin, 1 - margin]^d, 1-based labels and the rescaling used

    Shape kinds are standardized per axis and scaled by the spread first; the
    returned transform maps that frame to the cube.
    """
    if spec.n == 0:
        return (np.empty((0, spec.d)), Labeling.empty(), AffineTransform.identity(spec.d))
    raw, components = _raw_points(spec)
    if spec.kind in SHAPE_KINDS:
        raw = StandardScaler().fit_transform(raw) * spec.effective_spread
    transform = AffineTransform.fit(raw, margin=spec.margin)
    points = transform.apply(raw)
    labels = Labeling.from_array(np.asarray(components, dtype=np.int64) + 1)
    logger.debug(f"Generated {spec.n} {spec.kind} points, scale={transform.scale[0]:.4g}")
    return points, labels, transform


def generate(spec: SynthSpec) -> Tuple[np.ndarray, Labeling]:
    points, labels, _ = generate_with_transform(spec)
    return points, labels


def write_csv(points, labels: Optional[Labeling], path) -> Path:
    """x0,...,x{d-1}[,label] with a header row"""
    points = np.asarray(points, dtype=np.float64)
    d = points.shape[1] if points.ndim == 2 else 1
    frame = pd.DataFrame(points.reshape(-1, d), columns=[f"x{i}" for i in range(d)])
    if labels is not None:
        frame["label"] = labels.labels
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {len(frame)} points to {path}")
    return path
