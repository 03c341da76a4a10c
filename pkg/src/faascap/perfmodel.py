"""Layered performance model of the platform: think stage, dispatcher, CPU pool.

The platform is reduced to a closed multiclass queueing network with one class
per function: a delay station models K clients thinking for Z = K/lambda
seconds (the closed-network surrogate of an open Poisson stream of rate
lambda), a single-core dispatcher station, and a C-core function station where
cold and warm work contend for the CPU.  Thread pools are assumed wide enough
to never serialize jobs, so only processor contention remains.

Each class i carries demand D_i = q_i/alpha_i + 1/mu_i at the function
station: a fraction q_i of its jobs (the cold-start probability from the
companion CTMC) pays the container load before service, and every job pays
service.  The network is solved by Bard-Schweitzer approximate MVA; the
multiserver station uses an Erlang-C waiting term, which collapses to the
exact single-server mean-value step when C = 1 and to the M/M/C waiting-time
law in the open limit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import WorkloadSpec
from .errors import InvalidArgumentError, ModelError, NumericalError

__all__ = [
    "LayeredModel",
    "PerfEstimate",
    "DEFAULT_DISPATCHER_DEMAND",
    "build_model",
    "solve",
    "function_utilization",
    "default_population",
    "erlang_c",
    "dump_model_text",
]

#: Default dispatcher service demand (seconds).
DEFAULT_DISPATCHER_DEMAND = 1e-3

_FIXED_POINT_TOL = 1e-8
_MAX_ITER = 100_000


@dataclass(frozen=True)
class LayeredModel:
    """Closed network ready to be solved.

    The client population forms a single chain: after a think period each
    client issues one request, routed to function class i with probability
    ``visit_probs[i]``.  Classes therefore share the chain population rather
    than owning fixed sub-populations.
    """

    n_clients: int
    think_time: float
    cores: int
    d_disp: float
    lambda_total: float
    arrival_rates: np.ndarray     # per class
    visit_probs: np.ndarray       # popularity of each class
    demands: np.ndarray           # function-station demand per class
    cold_probs: np.ndarray
    service_rates: np.ndarray
    coldstart_rates: np.ndarray

    @property
    def n_classes(self) -> int:
        return len(self.demands)

    @property
    def offered_function_load(self) -> float:
        """Open-workload offered load at the function station, in busy cores."""
        return float(np.sum(self.arrival_rates * self.demands))

    @property
    def offered_dispatcher_load(self) -> float:
        return float(self.lambda_total * self.d_disp)


@dataclass(frozen=True)
class PerfEstimate:
    """Solved per-function response times and utilizations."""

    response_times: np.ndarray
    cold_probs: np.ndarray
    utilizations: np.ndarray            # per-function work-in-progress fraction
    function_station_utilization: float
    dispatcher_utilization: float
    throughputs: np.ndarray
    iterations: int


def default_population(lambda_total: float, w_ref: float, factor: float = 100.0) -> int:
    """Client population making the closed model emulate an open stream.

    K = ceil(factor * lambda * w_ref) keeps the think time Z = K/lambda large
    against the response-time scale w_ref, so throughput deficit stays small.
    """
    if lambda_total <= 0 or w_ref <= 0:
        raise InvalidArgumentError("lambda_total and w_ref must be positive")
    return max(1, math.ceil(factor * lambda_total * w_ref))


def build_model(
    workload: WorkloadSpec,
    cold_probs,
    cores: int,
    k_clients: int,
    d_disp: float = DEFAULT_DISPATCHER_DEMAND,
) -> LayeredModel:
    """Assemble the layered model for given cold-start probabilities.

    Raises :class:`ModelError` naming the bottleneck when the open workload
    could not be carried by the chosen configuration.
    """
    q = np.asarray(cold_probs, dtype=float)
    if q.shape != (workload.n,):
        raise InvalidArgumentError(
            f"cold_probs must have one entry per function ({workload.n})"
        )
    if np.any(q < 0) or np.any(q > 1):
        raise InvalidArgumentError("cold-start probabilities must lie in [0, 1]")
    if cores < 1:
        raise InvalidArgumentError("cores must be >= 1")
    if k_clients < 1:
        raise InvalidArgumentError("k_clients must be >= 1")
    if d_disp < 0:
        raise InvalidArgumentError("d_disp must be non-negative")

    demands = q / workload.coldstart_rates + 1.0 / workload.service_rates
    lam_i = workload.arrival_rates
    offered = float(np.sum(lam_i * demands))
    if offered >= cores:
        raise ModelError(
            f"function station infeasible: offered load {offered:.3f} "
            f">= {cores} cores"
        )
    if workload.lambda_total * d_disp >= 1.0:
        raise ModelError(
            f"dispatcher infeasible: offered load "
            f"{workload.lambda_total * d_disp:.3f} >= 1 core"
        )
    return LayeredModel(
        n_clients=int(k_clients),
        think_time=k_clients / workload.lambda_total,
        cores=int(cores),
        d_disp=float(d_disp),
        lambda_total=workload.lambda_total,
        arrival_rates=lam_i,
        visit_probs=workload.popularities,
        demands=demands,
        cold_probs=q,
        service_rates=workload.service_rates,
        coldstart_rates=workload.coldstart_rates,
    )


def erlang_c(servers: int, offered) -> np.ndarray | float:
    """Probability all servers are busy in M/M/c at the given offered load
    (Erlang-C), via the numerically stable recursive Erlang-B form.

    ``offered`` may be a scalar or an array; loads at or above ``servers``
    saturate to probability 1.
    """
    a = np.asarray(offered, dtype=float)
    scalar = a.ndim == 0
    a = np.atleast_1d(a)
    out = np.ones_like(a)
    ok = (a > 0) & (a < servers)
    az = a[ok]
    inv_b = np.ones_like(az)
    for j in range(1, servers + 1):
        inv_b = 1.0 + inv_b * j / az
    b = 1.0 / inv_b
    rho = az / servers
    out[ok] = b / (1.0 - rho * (1.0 - b))
    out[a <= 0] = 0.0
    return float(out[0]) if scalar else out


def solve(model: LayeredModel) -> PerfEstimate:
    """Fixed-point approximate MVA solution of the layered model.

    Single-chain Bard-Schweitzer step: an arriving request sees the
    stationary station populations scaled by (K-1)/K, so a lone client
    (K=1) experiences zero contention.  The C-core station charges the full
    class demand plus a waiting term (jobs queued ahead plus an Erlang-C
    all-busy residual), each drained at rate C; with C=1 this collapses to
    the plain mean-value step.  Iterates until per-class response times move
    by less than 1e-8 relative.  Reported response time is dispatcher
    residence plus function-station residence (think time excluded).
    """
    k = model.n_clients
    z = model.think_time
    p = model.visit_probs
    d_f = model.demands
    d_d = model.d_disp
    cores = model.cores
    seen_scale = (k - 1.0) / k

    q_f_tot = 0.0
    q_d_tot = 0.0
    busy = 0.0
    w_prev = np.full(model.n_classes, np.inf)
    for it in range(1, _MAX_ITER + 1):
        busy_seen = min(seen_scale * busy, cores * (1.0 - 1e-9))
        p_wait = erlang_c(cores, busy_seen)
        waiting = max(seen_scale * q_f_tot - busy_seen, 0.0)
        r_f = d_f + (d_f / cores) * (waiting + p_wait)
        r_d = d_d * (1.0 + seen_scale * q_d_tot)

        w = r_f + r_d
        x_chain = k / (z + float(np.sum(p * w)))
        x_i = x_chain * p
        q_f_new = float(np.sum(x_i * r_f))
        q_d_new = float(np.sum(x_i * r_d))
        busy_new = float(np.sum(x_i * d_f))
        q_f_tot = 0.5 * q_f_tot + 0.5 * q_f_new
        q_d_tot = 0.5 * q_d_tot + 0.5 * q_d_new
        busy = 0.5 * busy + 0.5 * busy_new

        delta = np.max(np.abs(w - w_prev) / np.maximum(np.abs(w), 1e-300))
        w_prev = w
        if delta < _FIXED_POINT_TOL:
            break
    else:
        raise NumericalError(
            f"approximate MVA did not converge within {_MAX_ITER} iterations"
        )

    rho_i = np.minimum(1.0, model.arrival_rates * d_f)
    return PerfEstimate(
        response_times=w,
        cold_probs=model.cold_probs.copy(),
        utilizations=rho_i,
        function_station_utilization=model.offered_function_load / cores,
        dispatcher_utilization=model.offered_dispatcher_load,
        throughputs=x_chain * p,
        iterations=it,
    )


def function_utilization(workload: WorkloadSpec, cold_probs) -> np.ndarray:
    """Work-in-progress fraction per function: rho_i = min(1, lambda_i *
    (q_i/alpha_i + 1/mu_i)), counting setup and execution time."""
    q = np.asarray(cold_probs, dtype=float)
    if q.shape != (workload.n,):
        raise InvalidArgumentError(
            f"cold_probs must have one entry per function ({workload.n})"
        )
    demand = q / workload.coldstart_rates + 1.0 / workload.service_rates
    return np.minimum(1.0, workload.arrival_rates * demand)


def dump_model_text(model: LayeredModel) -> str:
    """Human-readable rendering of the layered model in LQN-like vocabulary."""
    lines = [
        "layered model",
        f"  task Client   multiplicity={model.n_clients} think_time={model.think_time:.6g}s",
        f"  task Dispatcher on DispatcherCPU (1 core)",
        f"  tasks ColdPool/WarmPool on FunctionCPU ({model.cores} cores), unbounded threads",
        f"  open-equivalent arrival rate {model.lambda_total:.6g}/s",
        "  entries (per function):",
        "    id  visit_prob  call_mean_cold  demand_cold  demand_warm  demand_disp",
    ]
    pops = model.populations / model.n_clients
    for i in range(model.n_classes):
        lines.append(
            f"    {i:>3d}  {pops[i]:>10.6f}  {model.cold_probs[i]:>14.6f}  "
            f"{1.0 / model.coldstart_rates[i]:>11.6g}  "
            f"{1.0 / model.service_rates[i]:>11.6g}  {model.d_disp:>11.6g}"
        )
    return "\n".join(lines) + "\n"
