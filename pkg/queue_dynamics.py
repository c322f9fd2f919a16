"""
Queue-length process and activation-rate functions
Compound Poisson input, drain at speed c while active, reflection at zero
"""

from dataclasses import dataclass, replace
from typing import Iterable, Tuple

import numpy as np


class UnstableQueueError(ValueError):
    """Mean input rate is not below the drain speed"""


FIXED = 'fixed'
QUEUE_BASED = 'queue'


@dataclass(frozen=True)
class QueueParams:
    """Input, service and initial-queue parameters shared by all nodes of a side"""
    arrival_rate: float = 0.0      # packets per unit time at every node
    mean_service_u: float = 1.0    # work per packet at U-nodes
    mean_service_v: float = 1.0    # work per packet at V-nodes
    drain_speed: float = 1.0       # c
    gamma_u: float = 1.0
    gamma_v: float = 1.0
    r: float = 1.0

    @property
    def rho_u(self) -> float:
        return self.arrival_rate * self.mean_service_u

    @property
    def rho_v(self) -> float:
        return self.arrival_rate * self.mean_service_v

    def mean_service(self, side: str) -> float:
        return self.mean_service_u if side == 'u' else self.mean_service_v

    def with_r(self, r: float) -> 'QueueParams':
        return replace(self, r=float(r))

    def validate(self) -> 'QueueParams':
        if self.arrival_rate < 0 or self.mean_service_u <= 0 or self.mean_service_v <= 0:
            raise ValueError("Arrival rate must be >= 0 and mean service times > 0")
        if self.drain_speed <= 0:
            raise ValueError(f"Drain speed must be positive, got {self.drain_speed}")
        if self.rho_u >= self.drain_speed or self.rho_v >= self.drain_speed:
            raise UnstableQueueError(
                f"Unstable queues: rho_U={self.rho_u:g}, rho_V={self.rho_v:g}, c={self.drain_speed:g}")
        if not self.gamma_u >= self.gamma_v > 0:
            raise ValueError(f"Need gamma_U >= gamma_V > 0, got {self.gamma_u:g}, {self.gamma_v:g}")
        if self.r < 0:
            raise ValueError(f"Scale r must be nonnegative, got {self.r}")
        return self


@dataclass(frozen=True)
class RateFunctions:
    """g_U(x) = B x^beta, g_V(x) = B' x^beta' or the fixed rates r^beta, r^beta'"""
    mode: str = FIXED
    B: float = 1.0
    beta: float = 0.5
    B_prime: float = 1.0
    beta_prime: float = 2.0

    def validate(self) -> 'RateFunctions':
        if self.mode not in (FIXED, QUEUE_BASED):
            raise ValueError(f"Unknown rate mode {self.mode!r}")
        if min(self.B, self.beta, self.B_prime, self.beta_prime) <= 0:
            raise ValueError("B, beta, B', beta' must all be positive")
        if not self.beta_prime > self.beta + 1:
            raise ValueError(f"V-nodes must be much more aggressive: need beta' > beta + 1, "
                             f"got beta={self.beta:g}, beta'={self.beta_prime:g}")
        return self


@dataclass(frozen=True)
class QueueState:
    side: str
    length: float
    updated_at: float = 0.0


# =============================================================================
# QUEUE OPERATIONS
# =============================================================================

def initial_queue(side: str, params: QueueParams) -> QueueState:
    gamma = params.gamma_u if side == 'u' else params.gamma_v
    return QueueState(side, gamma * params.r)


def drain(q: QueueState, active_duration: float, params: QueueParams) -> QueueState:
    """Serve work at speed c for active_duration, reflecting at zero"""
    if active_duration < 0:
        raise ValueError(f"Negative active duration {active_duration}")
    length = max(q.length - params.drain_speed * active_duration, 0.0)
    return replace(q, length=length, updated_at=q.updated_at + active_duration)


def arrive(q: QueueState, params: QueueParams, rng: np.random.Generator) -> QueueState:
    """Add one packet with exponential work of mean 1/mu of the node's side"""
    return replace(q, length=q.length + sample_work(q.side, params, rng))


def sample_work(side: str, params: QueueParams, rng: np.random.Generator) -> float:
    return float(rng.exponential(params.mean_service(side)))


def busy_time_to_empty(length, params: QueueParams):
    """Time an active node needs to serve `length` units of work; accepts arrays"""
    return length / params.drain_speed


def activation_rate(q, side: str, rates: RateFunctions, r: float) -> float:
    """
    Activation clock rate of an inactive node.
    `q` may be a QueueState or a bare queue length.
    """
    length = q.length if isinstance(q, QueueState) else float(q)
    if length < 0:
        raise ValueError(f"Negative queue length {length}")
    B, beta = (rates.B, rates.beta) if side == 'u' else (rates.B_prime, rates.beta_prime)
    if rates.mode == FIXED:
        return float(r) ** beta
    return B * length ** beta


def activation_rates(lengths: np.ndarray, side: str, rates: RateFunctions, r: float) -> np.ndarray:
    """Vectorized activation_rate over one side"""
    B, beta = (rates.B, rates.beta) if side == 'u' else (rates.B_prime, rates.beta_prime)
    if rates.mode == FIXED:
        return np.full(lengths.shape, float(r) ** beta)
    return B * np.power(lengths, beta)


def expected_hitting_time_TU(params: QueueParams) -> float:
    """Mean time for an always-active U-queue to drain from gamma_U r to zero"""
    c = params.drain_speed
    if params.rho_u >= c:
        raise UnstableQueueError(f"rho_U={params.rho_u:g} >= c={c:g}: U-queues never empty on average")
    return params.gamma_u * params.r / (c - params.rho_u)


# =============================================================================
# FULL-HISTORY FORM
# =============================================================================

def reflected_queue(q0: float, segments: Iterable[Tuple[float, bool, float]],
                    drain_speed: float) -> float:
    """
    Queue length from the whole history via the running-minimum formula.

    segments: (duration, active, work arriving at the end of the segment).
    Q(t) = Delta(t) + max(Q(0), -inf_{s<=t} Delta(s-)), Delta = input - c * busy time.
    """
    delta = 0.0
    lowest = 0.0
    for duration, active, jump in segments:
        if active:
            delta -= drain_speed * duration
        lowest = min(lowest, delta)
        delta += jump
    return delta + max(q0, -lowest)


def incremental_queue(q0: float, segments: Iterable[Tuple[float, bool, float]],
                      params: QueueParams, side: str = 'u') -> float:
    """Same history replayed through drain/arrive one event at a time"""
    q = QueueState(side, q0)
    for duration, active, jump in segments:
        if active:
            q = drain(q, duration, params)
        q = replace(q, length=q.length + jump)
    return q.length
