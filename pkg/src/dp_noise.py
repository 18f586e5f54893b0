"""
Noise samplers and analytic error scales
Laplace, two-sided Geometric, exact Binomial and clipped Laplace tail draws,
plus the histogram error bound gamma and the kappa-sum scale factor Gamma
"""

import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from .errors import ParameterError

logger = logging.getLogger(__name__)


class GammaKind(str, Enum):
    LAPLACE = "laplace"
    GEOMETRIC = "geometric"
    GAUSSIAN = "gaussian"
    NAIVE_KAPPA_GAMMA = "naive_kappa_gamma"
    LINEAR_HIST = "linear_hist"


@dataclass(frozen=True)
class PrivacyParams:
    """Privacy budget, failure probability and histogram truncation threshold"""
    epsilon: float
    beta: float = 1.0 / 3.0
    theta: float = 0.0

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ParameterError(f"epsilon must be a positive finite number, got {self.epsilon}")
        if not 0.0 < self.beta < 1.0:
            raise ParameterError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.theta >= 0.0:
            raise ParameterError(f"theta must be non-negative, got {self.theta}")


@dataclass(frozen=True)
class ApproxBounds:
    """Derived error quantities: kappa, gamma, Gamma, tau = 2 Gamma, rho = 3 + 4 eta'"""
    kappa: int
    gamma: float
    big_gamma: float
    tau: float
    rho: float
    eta: float

    def __post_init__(self):
        if self.kappa < 1:
            raise ParameterError(f"kappa must be at least 1, got {self.kappa}")
        for name in ("gamma", "big_gamma", "tau", "rho"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ParameterError(f"{name} must be finite and non-negative, got {value}")

    @classmethod
    def derive(cls, kind: Union[GammaKind, str], kappa: int, eps: float, universe_size: int,
               beta: float, eta_prime: float, *, theta: Optional[float] = None,
               delta: Optional[float] = None, n: Optional[int] = None) -> "ApproxBounds":
        gamma = gamma_laplace(eps, universe_size, beta)
        scale = big_gamma(kind, kappa, eps, universe_size, beta,
                          theta=theta, delta=delta, n=n)
        return cls(kappa=int(kappa), gamma=gamma, big_gamma=scale, tau=2.0 * scale,
                   rho=3.0 + 4.0 * eta_prime, eta=4.0 * eta_prime)

    def as_dict(self) -> dict:
        return asdict(self)


def _require_rng(rng):
    if not isinstance(rng, np.random.Generator):
        raise ParameterError("rng must be a numpy.random.Generator (use np.random.default_rng(seed))")


def sample_laplace(rng: np.random.Generator, scale: float, size=None):
    """Draw(s) from Lap(scale): density exp(-|z|/scale) / (2 scale)"""
    _require_rng(rng)
    if not scale > 0:
        raise ParameterError(f"Laplace scale must be positive, got {scale}")
    return rng.laplace(0.0, scale, size=size)


def laplace_pdf(z, scale: float):
    return np.exp(-np.abs(z) / scale) / (2.0 * scale)


def sample_geometric(rng: np.random.Generator, eps_over_delta: float, size=None):
    """Two-sided geometric draw with mass (e^a - 1)/(e^a + 1) e^{-a|z|}, a = eps_over_delta"""
    _require_rng(rng)
    if not eps_over_delta > 0:
        raise ParameterError(f"Geometric parameter must be positive, got {eps_over_delta}")
    # difference of two iid one-sided geometrics with success probability 1 - e^{-a}
    success = -math.expm1(-eps_over_delta)
    first = rng.geometric(success, size=size)
    second = rng.geometric(success, size=size)
    return first - second


def geometric_pmf(z, a: float):
    return (math.exp(a) - 1.0) / (math.exp(a) + 1.0) * np.exp(-a * np.abs(z))


def sample_binomial(rng: np.random.Generator, M: int, p: float, size=None):
    """Exact Bin(M, p) draw

    numpy's generator uses inversion when M*min(p, 1-p) <= 30 and BTPE otherwise,
    so the law is exact; no normal approximation is involved.
    """
    _require_rng(rng)
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"Binomial probability must lie in [0, 1], got {p}")
    if int(M) != M or M < 0:
        raise ParameterError(f"Binomial trial count must be a non-negative integer, got {M}")
    if M == 0 or p == 0.0:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    if p == 1.0:
        return int(M) if size is None else np.full(size, int(M), dtype=np.int64)
    draw = rng.binomial(int(M), p, size=size)
    return int(draw) if size is None else draw


def clipped_laplace_quantile(eps: float, theta: float, u):
    """Inverse CDF of Lap(1/eps) conditioned on z >= theta

    With p = e^{-eps theta} / 2 the CDF is 1 - e^{-eps z} / (2p), so
    z = (1/eps) ln(1 / (2p (1 - u))) = theta - ln(1 - u) / eps.
    """
    return theta - np.log1p(-np.asarray(u, dtype=np.float64)) / eps


def sample_clipped_laplace(rng: np.random.Generator, eps: float, theta: float, size=None):
    """Draw(s) >= theta from the upper tail of Lap(1/eps), by inverse transform"""
    _require_rng(rng)
    if not eps > 0:
        raise ParameterError(f"epsilon must be positive, got {eps}")
    if not theta >= 0:
        raise ParameterError(f"theta must be non-negative, got {theta}")
    u = rng.random(size=size)
    draw = clipped_laplace_quantile(eps, theta, u)
    return float(draw) if size is None else draw


def gamma_laplace(eps: float, universe_size: int, beta: float) -> float:
    """l_inf error bound of a Laplace histogram: (1/eps) ln(|X| / beta)"""
    if not (eps > 0 and universe_size > 0 and 0 < beta < 1):
        raise ParameterError(f"gamma_laplace needs eps > 0, |X| > 0, 0 < beta < 1 "
                             f"(got {eps}, {universe_size}, {beta})")
    return math.log(universe_size / beta) / eps


def _union_log(universe_size: int, beta: float) -> float:
    return math.log(2.0 * universe_size / beta)


def _gamma_lap(kappa: int, eps: float, universe_size: int, beta: float) -> float:
    log_term = _union_log(universe_size, beta)
    return 2.0 * math.sqrt(2.0) / eps * max(math.sqrt(kappa * log_term), log_term)


def _gamma_geom(kappa: int, eps: float, universe_size: int, beta: float) -> float:
    log_term = _union_log(universe_size, beta)
    e = math.exp(eps)
    if kappa >= e * log_term:
        return 4.0 * math.sqrt(e) / (e - 1.0) * math.sqrt(kappa * log_term)
    return 4.0 * e / (e - 1.0) * math.sqrt(kappa) * log_term


def _gamma_gauss(kappa: int, eps: float, universe_size: int, beta: float,
                 delta: Optional[float]) -> float:
    if delta is None:
        raise ParameterError("Gaussian Gamma requires delta")
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    return 2.0 / eps * math.sqrt(kappa * math.log(1.25 / delta) * _union_log(universe_size, beta))


def linear_threshold(universe_size: int, n: int, eps: float) -> float:
    """(1/eps) ln(|X| / n) clamped at zero; n = 0 is treated as n = 1"""
    return max(0.0, math.log(universe_size / max(int(n), 1)) / eps)


def big_gamma(kind: Union[GammaKind, str], kappa: int, eps: float, universe_size: int,
              beta: float, *, theta: Optional[float] = None, delta: Optional[float] = None,
              n: Optional[int] = None) -> float:
    """High-probability bound on the deviation of a kappa-cell noisy sum"""
    try:
        kind = GammaKind(kind)
    except ValueError:
        raise ParameterError(f"Unknown Gamma kind '{kind}'; "
                             f"expected one of {[k.value for k in GammaKind]}") from None
    if int(kappa) != kappa or kappa < 1:
        raise ParameterError(f"kappa must be a positive integer, got {kappa}")
    if not (eps > 0 and universe_size > 0 and 0 < beta < 1):
        raise ParameterError(f"big_gamma needs eps > 0, |X| > 0, 0 < beta < 1 "
                             f"(got {eps}, {universe_size}, {beta})")

    if kind is GammaKind.LAPLACE:
        return _gamma_lap(kappa, eps, universe_size, beta)
    if kind is GammaKind.GEOMETRIC:
        return _gamma_geom(kappa, eps, universe_size, beta)
    if kind is GammaKind.GAUSSIAN:
        return _gamma_gauss(kappa, eps, universe_size, beta, delta)
    if kind is GammaKind.NAIVE_KAPPA_GAMMA:
        return kappa * gamma_laplace(eps, universe_size, beta)

    # linear-time histogram: each entry may additionally be truncated below theta
    if theta is None:
        if n is None:
            raise ParameterError("linear_hist Gamma requires theta or n")
        theta = linear_threshold(universe_size, n, eps)
    if theta < 0:
        raise ParameterError(f"theta must be non-negative, got {theta}")
    return kappa * theta + _gamma_lap(kappa, eps, universe_size, beta)


def exact_bound_tau(kappa: int, eps: float, universe_size: int, beta: float, n: int) -> float:
    """Additive MinPts error of the linear-time mechanism: 2 (kappa theta + Gamma_Lap)"""
    theta = max(0.0, math.log(universe_size / max(int(n), 1))) / eps
    return 2.0 * kappa * theta + 2.0 * _gamma_lap(kappa, eps, universe_size, beta)


def asymptotic_tau(d: int, eta: float, eps: float, alpha: float, beta: float) -> float:
    """Order-of-magnitude tau: (1 + 8 sqrt(d)/eta)^d (d/eps) ln(d / (alpha beta))"""
    if not 0 < eta <= 4:
        raise ParameterError(f"eta must lie in (0, 4], got {eta}")
    return (1.0 + 8.0 * math.sqrt(d) / eta) ** d * (d / eps) * math.log(d / (alpha * beta))
