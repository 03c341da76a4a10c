"""Single-function cold-start CTMC: an M/M/1 queue with setup and delayed off.

State space.  A state (i, j) tracks residency i (0 = out of memory, 1 = in
memory) and queued jobs j.  The boundary level 0 holds the cold-empty state
(0,0) and k idle phases (1,0)_1..(1,0)_k; a repeating level j >= 1 holds the
pair [(0,j) cold-with-backlog, (1,j) warm-serving].

Transitions.  Arrivals (rate lam) move any state one level up; from an idle
phase they land in (1,1) because the function is still resident, and from
(0,0) in (0,1) which starts a setup.  Setup completes at rate alpha within a
level ((0,j) -> (1,j)).  Service at rate mu moves warm states down one level;
the completion that empties the queue enters idle phase 1.  The idle timeout
is Erlang-k with rate k*beta per phase (mean 1/beta, squared coefficient of
variation 1/k), so large k approximates the deterministic timeout of a real
platform; the last phase transition unloads the function into (0,0).

From level 1 upward the chain is a level-independent quasi-birth-death
process, solved by matrix-geometric means: the rate matrix R is obtained from
the G matrix of the uniformized chain via logarithmic reduction (quadratic
convergence), with a linear fixed-point iteration as fallback.  The boundary
is solved by the censored boundary system.  ``truncation_oracle`` provides an
independent check: a direct global linear solve on a truncated state space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import FunctionProfile
from .errors import InvalidArgumentError, ModelError, NumericalError

__all__ = [
    "DEFAULT_PHASES",
    "QbdChain",
    "StationaryDistribution",
    "build_chain",
    "solve_stationary",
    "truncation_oracle",
    "cold_start_probability",
    "cold_start_probabilities",
    "stationary_residual",
]

#: Default Erlang phase count for the idle timeout (CV^2 = 1/50 = 0.02).
DEFAULT_PHASES = 50

#: Mass beyond the materialized levels of a matrix-geometric solution.
TAIL_TOL = 1e-12

_MAX_LEVELS = 200_000


@dataclass(frozen=True)
class QbdChain:
    """Rates and phase count of one function's cold-start chain."""

    lam: float
    mu: float
    alpha: float
    beta: float
    k: int

    def __post_init__(self):
        if min(self.lam, self.mu, self.alpha, self.beta) <= 0:
            raise InvalidArgumentError("all chain rates must be positive")
        if self.k < 1:
            raise InvalidArgumentError("phase count k must be >= 1")
        if self.lam >= self.mu:
            raise ModelError(
                f"unstable chain: arrival rate {self.lam} >= service rate {self.mu}"
            )

    # -- block structure ------------------------------------------------

    def repeating_blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(A0 up, A1 local, A2 down) for levels >= 1, phase order [cold, warm]."""
        lam, mu, alpha = self.lam, self.mu, self.alpha
        a0 = np.array([[lam, 0.0], [0.0, lam]])
        a1 = np.array([[-(lam + alpha), alpha], [0.0, -(lam + mu)]])
        a2 = np.array([[0.0, 0.0], [0.0, mu]])
        return a0, a1, a2

    def boundary_blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(B00, B01, B10): boundary-local, boundary-to-level-1, level-1-to-boundary.

        Boundary state order: [(0,0), (1,0)_1, ..., (1,0)_k].
        """
        lam, mu, k = self.lam, self.mu, self.k
        kb = k * self.beta
        m = k + 1
        b00 = np.zeros((m, m))
        b00[0, 0] = -lam
        for p in range(1, m):
            b00[p, p] = -(lam + kb)
            if p < k:
                b00[p, p + 1] = kb
        b00[k, 0] = kb
        b01 = np.zeros((m, 2))
        b01[0, 0] = lam           # (0,0) -> (0,1): setup starts
        b01[1:, 1] = lam          # idle phases -> (1,1): still resident
        b10 = np.zeros((2, m))
        b10[1, 1] = mu            # (1,1) -> (1,0)_1: timeout restarts at phase 1
        return b00, b01, b10

    def state_count(self, max_level: int) -> int:
        """Number of states when truncating at ``max_level``: (k+1) + 2*max_level."""
        return (self.k + 1) + 2 * max_level

    def generator(self, max_level: int) -> sp.csr_matrix:
        """Truncated generator with up-transitions from the last level dropped;
        every row sums to zero."""
        if max_level < 1:
            raise InvalidArgumentError("max_level must be >= 1")
        lam, mu, alpha, k = self.lam, self.mu, self.alpha, self.k
        kb = k * self.beta
        m = k + 1

        def cold(j: int) -> int:
            return m + 2 * (j - 1)

        def warm(j: int) -> int:
            return m + 2 * (j - 1) + 1

        rows, cols, vals = [], [], []

        def add(r, c, v):
            rows.append(r)
            cols.append(c)
            vals.append(v)

        # boundary
        add(0, cold(1), lam)
        for p in range(1, m):
            add(p, warm(1), lam)
            if p < k:
                add(p, p + 1, kb)
        add(k, 0, kb)
        # repeating levels
        for j in range(1, max_level + 1):
            add(cold(j), warm(j), alpha)
            if j < max_level:
                add(cold(j), cold(j + 1), lam)
                add(warm(j), warm(j + 1), lam)
            if j >= 2:
                add(warm(j), warm(j - 1), mu)
            else:
                add(warm(1), 1, mu)
        n = self.state_count(max_level)
        q = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tolil()
        q.setdiag(-np.asarray(q.sum(axis=1)).ravel())
        return q.tocsr()


@dataclass(frozen=True)
class StationaryDistribution:
    """Steady-state probabilities in level-phase layout.

    ``boundary`` holds [(0,0), (1,0)_1..(1,0)_k]; ``levels[j-1]`` holds
    (pi_{0,j}, pi_{1,j}) for levels 1..J.  ``tail_mass`` is the certified
    probability mass beyond level J (exact geometric remainder for the
    matrix-geometric solution, ~0 for the truncation oracle), and
    ``tail_cold_mass`` its cold component.
    """

    k: int
    boundary: np.ndarray
    levels: np.ndarray
    tail_mass: float
    tail_cold_mass: float
    method: str

    @property
    def total_mass(self) -> float:
        return float(self.boundary.sum() + self.levels.sum() + self.tail_mass)

    def state_rows(self):
        """Rows (state, level, phase, probability) for the diagnostic dump."""
        rows = [("cold-empty", 0, 0, float(self.boundary[0]))]
        for p in range(1, self.k + 1):
            rows.append(("idle", 0, p, float(self.boundary[p])))
        for j, (p_cold, p_warm) in enumerate(self.levels, start=1):
            rows.append(("cold", j, 0, float(p_cold)))
            rows.append(("warm", j, 1, float(p_warm)))
        return rows


def build_chain(
    profile: FunctionProfile, lambda_i: float, t_i: float, k: int = DEFAULT_PHASES
) -> QbdChain:
    """Chain for one function at arrival rate ``lambda_i`` and idle time ``t_i``."""
    if t_i <= 0:
        raise InvalidArgumentError("idle time t_i must be positive")
    if lambda_i <= 0:
        raise InvalidArgumentError("lambda_i must be positive")
    if lambda_i >= profile.mu:
        raise ModelError(
            f"unstable chain for function {profile.id}: "
            f"lambda_i={lambda_i} >= mu={profile.mu}"
        )
    return QbdChain(lam=lambda_i, mu=profile.mu, alpha=profile.alpha, beta=1.0 / t_i, k=k)


# --- batched matrix-geometric internals -------------------------------------
# All heavy paths are vectorized over a batch of chains (one per function);
# the scalar API wraps a batch of one.

def _inv2(m: np.ndarray) -> np.ndarray:
    """Batched inverse of (..., 2, 2) matrices."""
    a = m[..., 0, 0]
    b = m[..., 0, 1]
    c = m[..., 1, 0]
    d = m[..., 1, 1]
    det = a * d - b * c
    out = np.empty_like(m)
    out[..., 0, 0] = d
    out[..., 0, 1] = -b
    out[..., 1, 0] = -c
    out[..., 1, 1] = a
    return out / det[..., None, None]


def _repeating_blocks_batch(lam, mu, alpha):
    n = len(lam)
    a0 = np.zeros((n, 2, 2))
    a0[:, 0, 0] = lam
    a0[:, 1, 1] = lam
    a1 = np.zeros((n, 2, 2))
    a1[:, 0, 0] = -(lam + alpha)
    a1[:, 0, 1] = alpha
    a1[:, 1, 1] = -(lam + mu)
    a2 = np.zeros((n, 2, 2))
    a2[:, 1, 1] = mu
    return a0, a1, a2


def _solve_g_logred(a0, a1, a2, tol=1e-14, max_iter=200):
    """G matrices of a batch of QBDs by logarithmic reduction.

    Works on the uniformized (discrete-time) chain, whose first-passage matrix
    G coincides with the continuous-time one.
    """
    n = a0.shape[0]
    c = np.maximum(-a1[:, 0, 0], -a1[:, 1, 1])[:, None, None] * (1.0 + 1e-12)
    eye = np.broadcast_to(np.eye(2), (n, 2, 2))
    p0 = a0 / c
    p1 = eye + a1 / c
    p2 = a2 / c

    inv = _inv2(eye - p1)
    h = inv @ p0          # up
    l = inv @ p2          # down
    g = l.copy()
    t = h.copy()
    for _ in range(max_iter):
        u = h @ l + l @ h
        m2 = _inv2(eye - u)
        h, l = m2 @ (h @ h), m2 @ (l @ l)
        g = g + t @ l
        t = t @ h
        if float(np.max(np.abs(t))) < tol:
            break
    else:
        raise NumericalError("logarithmic reduction did not converge")
    return g


def _solve_r_fixed_point(a0, a1, a2, tol=1e-12, max_iter=200_000):
    """Linear fixed point R <- -(A0 + R^2 A2) A1^{-1} (fallback path)."""
    inv_a1 = _inv2(a1)
    r = np.zeros_like(a0)
    for _ in range(max_iter):
        r_next = -(a0 + r @ r @ a2) @ inv_a1
        delta = float(np.max(np.abs(r_next - r)))
        r = r_next
        if delta < tol:
            return r
    raise NumericalError(
        f"matrix-geometric fixed point did not converge (last delta {delta:.3e})"
    )


def _solve_r(a0, a1, a2):
    try:
        g = _solve_g_logred(a0, a1, a2)
        r = a0 @ _inv2(-(a1 + a0 @ g))
        if np.all(np.isfinite(r)) and np.all(r > -1e-12):
            return np.maximum(r, 0.0)
    except NumericalError:
        pass
    return _solve_r_fixed_point(a0, a1, a2)


def _boundary_solve(lam, mu, alpha, beta, k, r):
    """Censored boundary system for a batch of chains.

    Returns (pi0, pi1): boundary vector (n, k+1) and level-1 vector (n, 2).
    """
    n = len(lam)
    m = k + 1
    size = m + 2
    kb = k * beta
    a1 = np.zeros((n, 2, 2))
    a1[:, 0, 0] = -(lam + alpha)
    a1[:, 0, 1] = alpha
    a1[:, 1, 1] = -(lam + mu)
    a2 = np.zeros((n, 2, 2))
    a2[:, 1, 1] = mu

    big = np.zeros((n, size, size))
    # B00
    big[:, 0, 0] = -lam
    idx = np.arange(1, m)
    big[:, idx, idx] = -(lam + kb)[:, None]
    if k > 1:
        big[:, idx[:-1], idx[:-1] + 1] = kb[:, None]
    big[:, k, 0] = kb
    # B01
    big[:, 0, m] = lam
    big[:, 1:m, m + 1] = lam[:, None]
    # B10
    big[:, m + 1, 1] = mu
    # censored level-1 local block: A1 + R A2
    big[:, m:, m:] = a1 + r @ a2

    ones2 = np.ones((n, 2, 1))
    s = (_inv2(np.broadcast_to(np.eye(2), (n, 2, 2)) - r) @ ones2)[..., 0]

    a_sys = np.transpose(big, (0, 2, 1)).copy()
    a_sys[:, 0, :m] = 1.0
    a_sys[:, 0, m:] = s
    b = np.zeros((n, size))
    b[:, 0] = 1.0
    try:
        x = np.linalg.solve(a_sys, b[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular boundary system: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise NumericalError("boundary solve produced non-finite probabilities")
    x = np.maximum(x, 0.0)
    return x[:, :m], x[:, m:]


def _cold_probs_from_parts(pi0, pi1, r):
    """Exact cold-start probability pi_{0,0} + sum_{j>=1} pi_{0,j}."""
    n = pi1.shape[0]
    eye = np.broadcast_to(np.eye(2), (n, 2, 2))
    level_sums = (pi1[:, None, :] @ _inv2(eye - r))[:, 0, :]
    return pi0[:, 0] + level_sums[:, 0]


def cold_start_probabilities(
    lams: np.ndarray,
    mus: np.ndarray,
    alphas: np.ndarray,
    idle_times: np.ndarray,
    k: int = DEFAULT_PHASES,
) -> np.ndarray:
    """Cold-start probabilities of many independent chains at once.

    Vectorized over functions; equivalent to building and solving one chain
    per function but far cheaper inside optimizer loops.
    """
    lams = np.asarray(lams, dtype=float)
    mus = np.asarray(mus, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    idle_times = np.asarray(idle_times, dtype=float)
    if np.any(idle_times <= 0):
        raise InvalidArgumentError("idle times must be positive")
    if np.any(lams <= 0) or np.any(mus <= 0) or np.any(alphas <= 0):
        raise InvalidArgumentError("rates must be positive")
    if np.any(lams >= mus):
        bad = int(np.argmax(lams >= mus))
        raise ModelError(f"unstable chain at index {bad}: lambda >= mu")
    betas = 1.0 / idle_times
    a0, a1, a2 = _repeating_blocks_batch(lams, mus, alphas)
    r = _solve_r(a0, a1, a2)
    pi0, pi1 = _boundary_solve(lams, mus, alphas, betas, int(k), r)
    return _cold_probs_from_parts(pi0, pi1, r)


def solve_stationary(chain: QbdChain, tail_tol: float = TAIL_TOL) -> StationaryDistribution:
    """Matrix-geometric stationary distribution of one chain.

    Levels are materialized until the exact geometric remainder drops below
    ``tail_tol``; the remainder is stored as certified tail mass.
    """
    lam = np.array([chain.lam])
    mu = np.array([chain.mu])
    alpha = np.array([chain.alpha])
    beta = np.array([chain.beta])
    a0, a1, a2 = _repeating_blocks_batch(lam, mu, alpha)
    r = _solve_r(a0, a1, a2)
    pi0, pi1 = _boundary_solve(lam, mu, alpha, beta, chain.k, r)

    r1 = r[0]
    inv_tail = np.linalg.inv(np.eye(2) - r1)
    levels = []
    vec = pi1[0]
    tail_vec = vec @ inv_tail  # total repeating-level mass
    for _ in range(_MAX_LEVELS):
        levels.append(vec)
        tail_vec = tail_vec - vec
        if tail_vec.sum() < tail_tol:
            break
        vec = vec @ r1
    else:
        raise NumericalError("level materialization exceeded the hard cap")
    tail_vec = np.maximum(tail_vec, 0.0)
    return StationaryDistribution(
        k=chain.k,
        boundary=pi0[0],
        levels=np.array(levels),
        tail_mass=float(tail_vec.sum()),
        tail_cold_mass=float(tail_vec[0]),
        method="matrix-geometric",
    )


def truncation_oracle(
    chain: QbdChain, max_level: int = 200, hard_cap: int = 51_200
) -> StationaryDistribution:
    """Direct global solve of pi Q = 0 on the truncated chain.

    The truncation level doubles until the cold-start probability moves by
    less than 1e-10, certifying that the appended tail mass is negligible.
    Independent of the matrix-geometric path; used as its verification oracle.
    """
    prev_cold = None
    level = max_level
    while level <= hard_cap:
        dist = _truncated_solve(chain, level)
        cold = cold_start_probability(dist)
        if prev_cold is not None and abs(cold - prev_cold) < 1e-10:
            return dist
        prev_cold = cold
        level *= 2
    raise NumericalError(
        f"truncation oracle did not stabilize below level {hard_cap}"
    )


def _truncated_solve(chain: QbdChain, max_level: int) -> StationaryDistribution:
    q = chain.generator(max_level)
    n = q.shape[0]
    a = q.transpose().tolil()
    a[n - 1, :] = 1.0
    b = np.zeros(n)
    b[n - 1] = 1.0
    try:
        pi = spla.spsolve(a.tocsc(), b)
    except RuntimeError as exc:  # singular factorization
        raise NumericalError(f"singular truncated system: {exc}") from exc
    if not np.all(np.isfinite(pi)):
        raise NumericalError("truncated solve produced non-finite probabilities")
    pi = np.maximum(pi, 0.0)
    pi = pi / pi.sum()
    m = chain.k + 1
    return StationaryDistribution(
        k=chain.k,
        boundary=pi[:m],
        levels=pi[m:].reshape(max_level, 2),
        tail_mass=0.0,
        tail_cold_mass=0.0,
        method="truncation",
    )


def cold_start_probability(dist: StationaryDistribution) -> float:
    """Total cold mass sum_j pi_{0,j} (including the empty state (0,0)).

    By PASTA this equals the long-run fraction of arrivals that experience a
    cold start.
    """
    return float(dist.boundary[0] + dist.levels[:, 0].sum() + dist.tail_cold_mass)


def stationary_residual(chain: QbdChain, dist: StationaryDistribution) -> float:
    """Max-norm residual ||pi Q||_inf of a solution on the truncated generator
    spanning the solution's materialized levels."""
    j = len(dist.levels)
    q = chain.generator(j)
    pi = np.concatenate([dist.boundary, dist.levels.ravel()])
    pi = pi / pi.sum()
    return float(np.max(np.abs(pi @ q)))
