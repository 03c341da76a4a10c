"""Hit rates of reset-on-request idle timeouts, and the characteristic time.

Under Poisson arrivals at rate lambda_i and an idle timeout T_i that resets on
every request, the probability that a request finds the function resident is
h_i = 1 - exp(-lambda_i * T_i).  The characteristic time T* is the single
timeout at which the expected number of resident functions hits a target m:
sum_i h_i(T*) = m.
"""
from __future__ import annotations

import math

import numpy as np

from .core import WorkloadSpec
from .errors import InfeasibleError, InvalidArgumentError

__all__ = ["hit_rate", "idle_time_for_hit_rate", "characteristic_time"]

#: Absolute residual tolerance for the characteristic-time bisection.
RESIDUAL_TOL = 1e-9


def hit_rate(lambda_i: float, t_i: float) -> float:
    """Probability 1 - exp(-lambda_i * t_i) that a request arrives within the
    idle timeout of the previous one."""
    if lambda_i < 0 or t_i < 0:
        raise InvalidArgumentError("lambda_i and t_i must be non-negative")
    return -math.expm1(-lambda_i * t_i)


def idle_time_for_hit_rate(lambda_i: float, h: float) -> float:
    """Invert :func:`hit_rate`: the idle timeout achieving hit rate ``h``."""
    if h <= 0:
        raise InvalidArgumentError("hit-rate target must be positive")
    if h >= 1 or lambda_i <= 0:
        raise InfeasibleError(
            f"no finite idle time reaches hit rate {h} at rate {lambda_i}"
        )
    return -math.log1p(-h) / lambda_i


def characteristic_time(workload: WorkloadSpec, m_target: float) -> float:
    """Solve sum_i (1 - exp(-lambda_i * T)) = m_target for the unique T > 0.

    The left side is strictly increasing in T and bounded by the number of
    functions, so plain bisection (after doubling out an upper bracket) is
    unconditionally robust.  The returned T satisfies the equation within an
    absolute residual of ``RESIDUAL_TOL``.
    """
    rates = workload.arrival_rates
    n = len(rates)
    if m_target <= 0:
        raise InvalidArgumentError("m_target must be positive")
    if m_target >= n:
        raise InfeasibleError(
            f"m_target={m_target} unreachable: the expected resident count is below {n}"
        )

    def residual(t: float) -> float:
        return float(np.sum(-np.expm1(-rates * t))) - m_target

    lo, hi = 0.0, 1.0
    while residual(hi) < 0:
        hi *= 2.0
        if hi > 1e18:
            raise InfeasibleError("no finite characteristic time found")
    # Bisect on the residual.  The interval endpoints keep opposite signs.
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = residual(mid)
        if abs(r) <= RESIDUAL_TOL:
            return mid
        if r < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
