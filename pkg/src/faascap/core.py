"""Domain records and the random-distribution toolbox.

The records here (function profiles, workload, SLA, platform) are immutable
value objects shared by every other module.  Random draws go through
purpose-split streams so that changing one experiment knob (say, the arrival
seed) never perturbs the draws of another purpose (say, service times).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, SeedSequence, default_rng

from .errors import InvalidArgumentError

__all__ = [
    "FunctionProfile",
    "WorkloadSpec",
    "SlaSpec",
    "PlatformSpec",
    "RngStreams",
    "zipf_popularities",
    "sample_exponential",
    "exponential_block",
    "sample_lognormal_fraction",
]

_POPULARITY_SUM_TOL = 1e-9


@dataclass(frozen=True)
class FunctionProfile:
    """Per-function rates and memory footprints.

    Attributes
    ----------
    id : int
        Function index (0-based, rank order).
    mu : float
        Service rate in jobs/s (mean service time 1/mu).
    alpha : float
        Cold-start rate in 1/s (mean cold-start time 1/alpha).
    theta_on : float
        Memory while loading or executing, in GB.
    theta_off : float
        Memory while resident but idle, in GB.
    popularity : float
        Probability weight of this function in the workload, in [0, 1].
    """

    id: int
    mu: float
    alpha: float
    theta_on: float
    theta_off: float
    popularity: float

    def __post_init__(self):
        if not (self.mu > 0 and self.alpha > 0 and self.theta_on > 0):
            raise InvalidArgumentError(
                f"function {self.id}: mu, alpha and theta_on must be positive"
            )
        if not (0 <= self.theta_off <= self.theta_on):
            raise InvalidArgumentError(
                f"function {self.id}: theta_off must lie in [0, theta_on]"
            )
        if not (0 <= self.popularity <= 1):
            raise InvalidArgumentError(
                f"function {self.id}: popularity must lie in [0, 1]"
            )


@dataclass(frozen=True)
class WorkloadSpec:
    """Aggregate workload: arrival rate, popularity skew and function pool."""

    lambda_total: float
    eta: float
    functions: tuple[FunctionProfile, ...]

    def __post_init__(self):
        if self.lambda_total <= 0:
            raise InvalidArgumentError("lambda_total must be positive")
        if self.eta < 0:
            raise InvalidArgumentError("eta must be non-negative")
        if not self.functions:
            raise InvalidArgumentError("workload needs at least one function")
        object.__setattr__(self, "functions", tuple(self.functions))
        total = math.fsum(f.popularity for f in self.functions)
        if abs(total - 1.0) > _POPULARITY_SUM_TOL:
            raise InvalidArgumentError(
                f"popularities must sum to 1 within {_POPULARITY_SUM_TOL}, got {total!r}"
            )

    @property
    def n(self) -> int:
        return len(self.functions)

    @property
    def popularities(self) -> np.ndarray:
        return np.array([f.popularity for f in self.functions])

    @property
    def arrival_rates(self) -> np.ndarray:
        """Per-function arrival rates lambda_i = lambda_total * popularity_i."""
        return self.lambda_total * self.popularities

    @property
    def service_rates(self) -> np.ndarray:
        return np.array([f.mu for f in self.functions])

    @property
    def coldstart_rates(self) -> np.ndarray:
        return np.array([f.alpha for f in self.functions])

    @property
    def theta_on(self) -> np.ndarray:
        return np.array([f.theta_on for f in self.functions])

    @property
    def theta_off(self) -> np.ndarray:
        return np.array([f.theta_off for f in self.functions])


@dataclass(frozen=True)
class SlaSpec:
    """Response-time limit and memory-overflow tail bound."""

    w_star: float
    epsilon: float

    def __post_init__(self):
        if self.w_star <= 0:
            raise InvalidArgumentError("w_star must be positive")
        if not (0 < self.epsilon < 1):
            raise InvalidArgumentError("epsilon must lie in (0, 1)")


@dataclass(frozen=True)
class PlatformSpec:
    """Candidate CPU configurations, RAM granularity and cost weights."""

    core_options: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    c_max: int = 32
    ram_module_gb: float = 8.0
    tau_c: float = 1.0
    tau_m: float = 1.0
    omega_a: float = 0.5
    omega_b: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "core_options", tuple(int(c) for c in self.core_options))
        if not self.core_options:
            raise InvalidArgumentError("core_options must be non-empty")
        if any(c < 1 for c in self.core_options):
            raise InvalidArgumentError("every core option must be >= 1")
        if any(c > self.c_max for c in self.core_options):
            raise InvalidArgumentError("core options must not exceed c_max")
        if self.ram_module_gb <= 0:
            raise InvalidArgumentError("ram_module_gb must be positive")
        if self.omega_a < 0 or self.omega_b < 0:
            raise InvalidArgumentError("cost weights must be non-negative")
        if abs(self.omega_a + self.omega_b - 1.0) > 1e-12:
            raise InvalidArgumentError("omega_a + omega_b must equal 1")


# --- random streams ---------------------------------------------------------

# Stable purpose -> stream index mapping.  New purposes append; existing
# indices never change, so seeds stay comparable across versions.
_STREAM_PURPOSES = (
    "arrivals",
    "function_choice",
    "service",
    "cold_start",
    "rates",
    "memory",
)


class RngStreams:
    """Purpose-split random streams derived from one seed.

    Each purpose gets an independent child of ``SeedSequence(seed)``, so e.g.
    redrawing service times never changes the arrival pattern.  Streams are
    single-owner: hand one stream to one concurrent task, never share.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        root = SeedSequence(self.seed)
        children = root.spawn(len(_STREAM_PURPOSES))
        self._gens = {
            name: default_rng(child) for name, child in zip(_STREAM_PURPOSES, children)
        }

    def stream(self, purpose: str) -> Generator:
        try:
            return self._gens[purpose]
        except KeyError:
            raise InvalidArgumentError(
                f"unknown stream purpose {purpose!r}; known: {_STREAM_PURPOSES}"
            ) from None

    def __getattr__(self, name: str) -> Generator:
        if name.startswith("_"):
            raise AttributeError(name)
        return self.stream(name)


# --- distributions ----------------------------------------------------------

def zipf_popularities(n: int, eta: float) -> np.ndarray:
    """Zipf probability vector over ranks 1..n: p_i proportional to i^(-eta).

    Rank 1 is the most popular; eta = 0 degenerates to uniform.
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    if eta < 0:
        raise InvalidArgumentError("eta must be >= 0")
    weights = np.arange(1, n + 1, dtype=float) ** (-float(eta))
    return weights / weights.sum()


def sample_exponential(rate: float, stream: Generator) -> float:
    """One exponential draw via inverse transform: -ln(1-U)/rate.

    Consumes exactly one uniform from ``stream``, so a fake stream returning
    u = 1 - e^(-1) yields exactly 1/rate.
    """
    if rate <= 0:
        raise InvalidArgumentError("rate must be positive")
    u = stream.random()
    return -math.log1p(-u) / rate


def exponential_block(rate: float, size: int, stream: Generator) -> np.ndarray:
    """Vectorized inverse-transform exponential draws (same transform as
    :func:`sample_exponential`, consuming ``size`` uniforms)."""
    if rate <= 0:
        raise InvalidArgumentError("rate must be positive")
    u = stream.random(size)
    return -np.log1p(-u) / rate


def sample_lognormal_fraction(
    desired_mean: float, sigma: float, stream: Generator
) -> float:
    """Log-normal fraction in (0, 1] with the given distribution mean.

    The location parameter is ln(desired_mean) - sigma^2/2 so that the
    (unclamped) mean equals ``desired_mean``; draws above 1 are clamped.
    Used to set idle memory as a fraction of execution memory.
    """
    if not (0 < desired_mean < 1):
        raise InvalidArgumentError("desired_mean must lie in (0, 1)")
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    location = math.log(desired_mean) - sigma * sigma / 2.0
    draw = math.exp(stream.normal(location, sigma))
    return min(draw, 1.0)
