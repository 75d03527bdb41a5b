"""Closed-form throughput and delay of the buffer-limited two-hop network."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import UnstableLoad
from .mac import TransmissionProbabilities
from .relay import (BufferModelInput, level_terms, solve_rop,
                    throughput_capacity)

STABILITY_MARGIN = 1e-9
INFINITE_B = 500

__all__ = [
    "DelayReport", "throughput_capacity", "source_queue_length",
    "source_sojourn", "queuing_delay", "psi", "delivery_delay", "e2e_delay",
    "e2e_delay_infinite", "check_stable",
]


@dataclass(frozen=True)
class DelayReport:
    lam: float
    mu: float
    mu_s: float
    rho_s: float
    p_o: float
    q_delay: float
    d_delay: float
    e2e_delay: float
    psi: float

    def as_dict(self) -> dict:
        return asdict(self)


def check_stable(lam: float, mu: float) -> None:
    if lam >= mu * (1.0 - STABILITY_MARGIN):
        raise UnstableLoad(f"lambda={lam:.6g} is not below capacity mu={mu:.6g}")


def source_queue_length(lam: float, mu_s: float) -> float:
    """Mean number of packets in the Bernoulli/Bernoulli source queue."""
    check_stable(lam, mu_s)
    return (lam - lam * lam) / (mu_s - lam)


def source_sojourn(lam: float, mu_s: float) -> float:
    check_stable(lam, mu_s)
    return (1.0 - lam) / (mu_s - lam)


def queuing_delay(lam: float, mu_s: float) -> float:
    """Expected wait before a packet reaches the head of its source queue."""
    check_stable(lam, mu_s)
    return lam * (1.0 - mu_s) / (mu_s * (mu_s - lam))


def psi(n: int, B: int, rho_s: float) -> float:
    """Mean relay-buffer level conditioned on the buffer not being full."""
    if B <= 1 or rho_s == 0.0:
        return 0.0
    w = level_terms(n, B - 1, rho_s)
    return float(np.dot(np.arange(B), w))


def _solve(n, B, lam, probs):
    mu = throughput_capacity(probs, n, B)
    check_stable(lam, mu)
    return mu, solve_rop(BufferModelInput(n, B, lam, probs))


def _delivery(n, B, dist):
    ps = psi(n, B, dist.rho_s)
    return (1.0 + (n - 2 + ps) * (1.0 - dist.p_o)) / dist.mu_s, ps


def delivery_delay(n: int, B: int, lam: float, probs: TransmissionProbabilities) -> float:
    _, dist = _solve(n, B, lam, probs)
    return _delivery(n, B, dist)[0]


def e2e_delay(n: int, B: int, lam: float, probs: TransmissionProbabilities) -> DelayReport:
    mu, dist = _solve(n, B, lam, probs)
    d, ps = _delivery(n, B, dist)
    q = queuing_delay(lam, dist.mu_s)
    return DelayReport(lam=lam, mu=mu, mu_s=dist.mu_s, rho_s=dist.rho_s,
                       p_o=dist.p_o, q_delay=q, d_delay=d, e2e_delay=q + d, psi=ps)


def e2e_delay_infinite(n: int, lam: float,
                       probs: TransmissionProbabilities) -> tuple[float, float]:
    """(delivery delay, end-to-end delay) with an unlimited relay buffer."""
    cap = probs.p_sd + probs.p_sr
    check_stable(lam, cap)
    d = 1.0 / cap + (n - 2) / (cap - lam)
    t = (n - 1 - lam) / (cap - lam)
    return d, t
