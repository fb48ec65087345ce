"""
Sampling and density primitives used by the mixture sampler, the
g-computation weights and the simulation data-generating process.

All samplers take an explicit ``numpy.random.Generator``; use
``make_rng`` to obtain one keyed by a seed and a tuple of stream names.
"""

import hashlib
from dataclasses import dataclass
from typing import Any, Optional, Union

import numpy as np
from scipy import special, stats

ArrayLike = Union[float, np.ndarray]

# Standardized truncation point above which the exponential-rejection sampler is used
_TAIL_SWITCH = 4.0


class DistributionError(ValueError):
    """Raised for invalid distribution parameters or non-finite inputs."""


def _stream_word(part: Any) -> int:
    """Map one stream label to a 32-bit spawn-key word."""
    if isinstance(part, (bool, np.bool_)):
        part = int(part)
    if isinstance(part, (int, np.integer)) and 0 <= int(part) < 2 ** 32:
        return int(part)
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def make_rng(seed: int, *stream: Any) -> np.random.Generator:
    """Return an independent Philox generator for ``seed`` and a named stream.

    ``make_rng(7, "replicate", 3)`` and ``make_rng(7, "replicate", 4)`` never
    share state, and the same arguments always give the same sequence.
    """
    if seed is None:
        raise DistributionError("A seed is required; wall-clock seeding is not supported")
    seed = int(seed)
    if seed < 0:
        raise DistributionError(f"Seed must be non-negative, got {seed}")
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(_stream_word(p) for p in stream))
    return np.random.Generator(np.random.Philox(sequence))


def _check_positive(value: ArrayLike, name: str) -> None:
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DistributionError(f"Parameter '{name}' must be positive and finite, got {value}")


@dataclass(frozen=True)
class ScaledInvChiSq:
    """Scaled inverse chi-squared law with ``df`` degrees of freedom and scale ``scale``."""

    df: float
    scale: float

    def __post_init__(self):
        _check_positive(self.df, "df")
        _check_positive(self.scale, "scale")

    @property
    def mean(self) -> float:
        if self.df <= 2:
            return float("inf")
        return self.df * self.scale / (self.df - 2.0)

    def sample(self, rng: np.random.Generator, size=None) -> ArrayLike:
        return sample_scaled_inv_chi2(self.df, self.scale, rng, size=size)


@dataclass(frozen=True)
class LocationScaleT:
    """Student t law shifted by ``location`` and stretched by ``scale``."""

    location: float
    scale: float
    df: float

    def __post_init__(self):
        if not np.isfinite(self.location):
            raise DistributionError(f"Location must be finite, got {self.location}")
        _check_positive(self.scale, "scale")
        _check_positive(self.df, "df")

    def survival(self, x: ArrayLike) -> ArrayLike:
        return t_survival(x, self)

    def cdf(self, x: ArrayLike) -> ArrayLike:
        return t_cdf(x, self)

    def logpdf(self, x: ArrayLike) -> ArrayLike:
        return t_logpdf(x, self)

    def sample(self, rng: np.random.Generator, size=None) -> ArrayLike:
        return t_sample(self, rng, size=size)


def t_survival(x: ArrayLike, dist: LocationScaleT) -> ArrayLike:
    """P(X > x) for a location-scale t variable."""
    standardized = (np.asarray(x, dtype=float) - dist.location) / dist.scale
    return special.stdtr(dist.df, -standardized)


def t_cdf(x: ArrayLike, dist: LocationScaleT) -> ArrayLike:
    standardized = (np.asarray(x, dtype=float) - dist.location) / dist.scale
    return special.stdtr(dist.df, standardized)


def t_logpdf(x: ArrayLike, dist: LocationScaleT) -> ArrayLike:
    return stats.t.logpdf(x, dist.df, loc=dist.location, scale=dist.scale)


def t_sample(dist: LocationScaleT, rng: np.random.Generator, size=None) -> ArrayLike:
    return dist.location + dist.scale * rng.standard_t(dist.df, size=size)


def sample_scaled_inv_chi2(a: ArrayLike, b: ArrayLike, rng: np.random.Generator, size=None) -> ArrayLike:
    """Draw from ScaledInvChiSq(a, b) as a*b divided by a chi-squared(a) variate."""
    _check_positive(a, "a")
    _check_positive(b, "b")
    return np.asarray(a) * np.asarray(b) / rng.chisquare(a, size=size)


def sample_beta(a: ArrayLike, b: ArrayLike, rng: np.random.Generator, size=None) -> ArrayLike:
    _check_positive(a, "a")
    _check_positive(b, "b")
    return rng.beta(a, b, size=size)


def sample_gamma(shape: ArrayLike, rate: ArrayLike, rng: np.random.Generator, size=None) -> ArrayLike:
    """Gamma draw parameterized by shape and rate."""
    _check_positive(shape, "shape")
    _check_positive(rate, "rate")
    return rng.gamma(shape, 1.0 / np.asarray(rate, dtype=float), size=size)


def sample_dirichlet(alpha, rng: np.random.Generator, size=None) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size < 2:
        raise DistributionError("Dirichlet needs a vector of at least two concentrations")
    _check_positive(alpha, "alpha")
    return rng.dirichlet(alpha, size=size)


def _exponential_tail(alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Standard normal draws conditioned on exceeding ``alpha`` (all alpha > 0).

    Exponential proposal with optimal rate, accepted with probability
    exp(-(z - rate)^2 / 2).
    """
    rate = 0.5 * (alpha + np.sqrt(alpha * alpha + 4.0))
    out = np.empty_like(alpha)
    pending = np.arange(alpha.size)
    while pending.size:
        proposal = alpha[pending] + rng.standard_exponential(pending.size) / rate[pending]
        log_u = np.log(rng.random(pending.size))
        accepted = log_u <= -0.5 * (proposal - rate[pending]) ** 2
        out[pending[accepted]] = proposal[accepted]
        pending = pending[~accepted]
    return out


def sample_truncated_normal_array(means, variances, lowers, rng: np.random.Generator) -> np.ndarray:
    """Vectorized Normal(mean, variance) draws conditioned on exceeding ``lower``.

    ``lowers`` may contain ``-inf`` (no truncation). Every returned value is
    strictly greater than its lower bound.
    """
    means, variances, lowers = np.broadcast_arrays(
        np.asarray(means, dtype=float), np.asarray(variances, dtype=float), np.asarray(lowers, dtype=float)
    )
    if not (np.all(np.isfinite(means)) and np.all(np.isfinite(variances))):
        raise DistributionError("Truncated normal mean and variance must be finite")
    if np.any(np.isnan(lowers)) or np.any(lowers == np.inf):
        raise DistributionError("Truncated normal lower bound must be finite or -inf")
    _check_positive(variances, "variance")

    means = means.ravel()
    lowers = lowers.ravel()
    sd = np.sqrt(variances.ravel())
    alpha = (lowers - means) / sd
    standardized = np.empty_like(means)

    body = alpha <= _TAIL_SWITCH
    if np.any(body):
        # Inverse survival: upper-tail probabilities keep precision for positive alpha
        u = 1.0 - rng.random(int(body.sum()))
        standardized[body] = -special.ndtri(u * special.ndtr(-alpha[body]))
    tail = ~body
    if np.any(tail):
        standardized[tail] = _exponential_tail(alpha[tail], rng)

    draws = means + sd * standardized
    floor = np.nextafter(lowers, np.inf)
    draws = np.where(draws > lowers, draws, floor)
    return draws.reshape(variances.shape)


def sample_truncated_normal(mean: float, variance: float, lower: float, rng: np.random.Generator) -> float:
    """One Normal(mean, variance) draw truncated below at ``lower``."""
    return float(sample_truncated_normal_array(mean, variance, lower, rng)[()])


def normal_logpdf(x: ArrayLike, mean: ArrayLike, variance: ArrayLike) -> ArrayLike:
    """Elementwise normal log density with broadcasting."""
    variance = np.asarray(variance, dtype=float)
    resid = np.asarray(x, dtype=float) - mean
    return -0.5 * (np.log(2.0 * np.pi * variance) + resid * resid / variance)


def normal_survival(x: ArrayLike, mean: ArrayLike, sd: ArrayLike) -> ArrayLike:
    return special.ndtr((np.asarray(mean, dtype=float) - x) / sd)


def truncated_normal_mean(mean: float, sd: float, lower: float) -> float:
    """Closed-form mean of Normal(mean, sd^2) truncated below at ``lower``."""
    alpha = (lower - mean) / sd
    log_mills = stats.norm.logpdf(alpha) - special.log_ndtr(-alpha)
    return mean + sd * float(np.exp(log_mills))


def choose_index(log_weights: np.ndarray, rng: np.random.Generator) -> int:
    """Draw an index with probability proportional to ``exp(log_weights)``."""
    shifted = np.exp(log_weights - np.max(log_weights))
    cumulative = np.cumsum(shifted)
    u = rng.random() * cumulative[-1]
    index = int(np.searchsorted(cumulative, u, side="right"))
    return min(index, log_weights.size - 1)


def choose_rows(log_weights: np.ndarray, rng: np.random.Generator,
                uniforms: Optional[np.ndarray] = None) -> np.ndarray:
    """Row-wise categorical draws from an (n, k) matrix of log weights."""
    shifted = np.exp(log_weights - np.max(log_weights, axis=1, keepdims=True))
    cumulative = np.cumsum(shifted, axis=1)
    if uniforms is None:
        uniforms = rng.random(log_weights.shape[0])
    targets = uniforms * cumulative[:, -1]
    chosen = (cumulative <= targets[:, None]).sum(axis=1)
    return np.minimum(chosen, log_weights.shape[1] - 1)
