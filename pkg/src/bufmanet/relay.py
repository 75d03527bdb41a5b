"""Relay-buffer occupancy model.

The shared relay buffer of a node is described by a birth-death chain over
its level (number of buffered packets). The arrival probability depends on
the utilisation of the source queue, which in turn depends on the overflow
probability of the relay buffer, so the overflow probability is the fixed
point of ``p -> pi_B(rho_s(p))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidParameter, ModelInvalid, NoConvergence, UnstableLoad
from .mac import TransmissionProbabilities

ROOT_TOL = 1e-12
MAX_BISECTIONS = 200
_SCAN_POINTS = 256
_SATURATION_RTOL = 1e-12


@dataclass(frozen=True)
class BufferModelInput:
    n: int
    B: int
    lam: float
    probs: TransmissionProbabilities

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4:
            raise InvalidParameter(f"n must be an integer >= 4, got {self.n!r}")
        if int(self.B) != self.B or self.B < 1:
            raise InvalidParameter(f"B must be an integer >= 1, got {self.B!r}")
        if not 0.0 <= self.lam < 1.0:
            raise InvalidParameter(f"lambda must lie in [0, 1), got {self.lam!r}")


@dataclass
class BufferDistribution:
    p_o: float
    rho_s: float
    mu_s: float
    level_dist: np.ndarray
    n: int
    bracket: tuple[float, float] = (0.0, 0.0)
    residual: float = 0.0
    saturated: bool = False

    @cached_property
    def joint_dist(self) -> np.ndarray:
        """``joint_dist[i, j]``: level i with j non-empty relay queues."""
        return joint_distribution(self.n, self.level_dist)

    def joint(self, i: int, j: int) -> float:
        return float(self.joint_dist[i, j])


def service_rate(probs: TransmissionProbabilities, p_o: float) -> float:
    """Per-slot service probability of the source queue."""
    return probs.p_sd + probs.p_sr * (1.0 - p_o)


def emc_up_probability(rho_s: float, p_sr: float) -> float:
    return rho_s * p_sr


def emc_down_probability(i: int, n: int, p_rd: float) -> float:
    if i <= 0:
        return 0.0
    return i / (n - 3 + i) * p_rd


def throughput_capacity(probs: TransmissionProbabilities, n: int, B: int) -> float:
    """Largest per-node generating rate the network supports stably."""
    return probs.p_sd + probs.p_sr * B / (n - 2 + B)


def saturation_rop(n: int, B: int) -> float:
    return (n - 2) / (n - 2 + B)


def level_terms(n: int, B: int, rho_s: float) -> np.ndarray:
    """Normalised ``C_i * rho_s**i`` for ``i = 0..B``, ``C_i = binom(n-3+i, i)``.

    Built in log space along the ratio ``C_{i+1}/C_i = (n-2+i)/(i+1)`` and
    shifted by the running maximum, so neither the binomials nor the powers
    are ever materialised.
    """
    if rho_s < 0:
        raise InvalidParameter(f"rho_s must be non-negative, got {rho_s!r}")
    out = np.zeros(B + 1)
    if rho_s == 0.0:
        out[0] = 1.0
        return out
    i = np.arange(B)
    steps = math.log(rho_s) + np.log((n - 2 + i) / (i + 1))
    logs = np.concatenate(([0.0], np.cumsum(steps)))
    out = np.exp(logs - logs.max())
    return out / out.sum()


def phase_conditional(n: int, i: int, j: int) -> float:
    """P(j non-empty relay queues | i buffered packets)."""
    if i == 0 and j == 0:
        return 1.0
    if not 1 <= j <= i:
        raise InvalidParameter(f"need 1 <= j <= i, got i={i}, j={j}")
    return (math.comb(n - 2, j) * math.comb(i - 1, j - 1)) / math.comb(n - 3 + i, i)


_lgamma = np.frompyfunc(math.lgamma, 1, 1)


def _log_comb(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return (_lgamma(a + 1) - _lgamma(b + 1) - _lgamma(a - b + 1)).astype(float)


def joint_distribution(n: int, level_dist: np.ndarray) -> np.ndarray:
    """``joint[i, j] = pi_i * P(j | i)``, evaluated in log space."""
    B = len(level_dist) - 1
    joint = np.zeros((B + 1, B + 1))
    joint[0, 0] = level_dist[0]
    if B == 0:
        return joint
    i = np.arange(1, B + 1)[:, None]
    j = np.arange(1, B + 1)[None, :]
    ok = (j <= i) & (j <= n - 2)
    jj = np.where(ok, j, 1)
    logp = _log_comb(n - 2, jj) + _log_comb(i - 1, jj - 1) - _log_comb(n - 3 + i, i)
    joint[1:, 1:] = np.where(ok, np.exp(logp) * level_dist[1:, None], 0.0)
    return joint


def _rho(inp: BufferModelInput, p_o: float) -> float:
    mu_s = service_rate(inp.probs, p_o)
    if mu_s <= 0.0:
        if inp.lam == 0.0:
            return 0.0
        raise ModelInvalid("source service rate is zero")
    return inp.lam / mu_s


def emc_transition_matrix(inp: BufferModelInput, p_o_guess: float) -> np.ndarray:
    """Tridiagonal one-step matrix of the collapsed level chain."""
    rho = _rho(inp, p_o_guess)
    up = emc_up_probability(rho, inp.probs.p_sr)
    P = np.zeros((inp.B + 1, inp.B + 1))
    for i in range(inp.B + 1):
        u = up if i < inp.B else 0.0
        d = emc_down_probability(i, inp.n, inp.probs.p_rd)
        stay = 1.0 - u - d
        if stay < -1e-15:
            raise ModelInvalid(
                f"level {i}: up {u:.6g} + down {d:.6g} exceeds one")
        if i < inp.B:
            P[i, i + 1] = u
        if i > 0:
            P[i, i - 1] = d
        P[i, i] = max(stay, 0.0)
    return P


def rop_map(inp: BufferModelInput, p_o: float) -> float:
    """Overflow probability implied by an assumed overflow probability."""
    return float(level_terms(inp.n, inp.B, _rho(inp, p_o))[-1])


def _bisect(g, lo: float, hi: float) -> tuple[float, float, float]:
    glo = g(lo)
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        gm = g(mid)
        if gm == 0.0:
            return mid, mid, mid
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    best = lo if abs(g(lo)) <= abs(g(hi)) else hi
    return best, lo, hi


def solve_rop(inp: BufferModelInput) -> BufferDistribution:
    """Solve the overflow-probability fixed point and build the distributions.

    The smallest root of ``f(p) - p`` on [0, 1] is returned: a coarse scan
    locates the first sign change and bisection refines it.
    """
    mu = throughput_capacity(inp.probs, inp.n, inp.B)
    if inp.lam > mu * (1.0 + _SATURATION_RTOL):
        raise UnstableLoad(f"lambda={inp.lam:.6g} exceeds capacity mu={mu:.6g}")
    if inp.lam >= mu * (1.0 - _SATURATION_RTOL):
        return saturated_distribution(inp)

    def g(p):
        return rop_map(inp, p) - p

    grid = np.linspace(0.0, 1.0, _SCAN_POINTS + 1)
    lo = 0.0
    if g(0.0) <= 0.0:
        p_o, bracket = 0.0, (0.0, 0.0)
    else:
        for hi in grid[1:]:
            if g(hi) <= 0.0:
                break
            lo = hi
        else:
            raise NoConvergence("no sign change of f(p) - p on [0, 1]")
        p_o, blo, bhi = _bisect(g, lo, float(hi))
        bracket = (blo, bhi)
    residual = abs(g(p_o))
    if residual >= ROOT_TOL:
        raise NoConvergence(f"fixed-point residual {residual:.3g} above {ROOT_TOL}")
    return _distribution(inp, p_o, bracket, residual)


def saturated_distribution(inp: BufferModelInput) -> BufferDistribution:
    """Distribution at the capacity point, where the source utilisation is one."""
    p_o = saturation_rop(inp.n, inp.B)
    levels = level_terms(inp.n, inp.B, 1.0)
    return BufferDistribution(
        p_o=p_o, rho_s=1.0, mu_s=service_rate(inp.probs, p_o),
        level_dist=levels, n=inp.n,
        bracket=(p_o, p_o), residual=float(abs(levels[-1] - p_o)), saturated=True)


def _distribution(inp, p_o, bracket, residual) -> BufferDistribution:
    p_o = float(p_o)
    mu_s = service_rate(inp.probs, p_o)
    rho = inp.lam / mu_s if mu_s > 0 else 0.0
    levels = level_terms(inp.n, inp.B, rho)
    return BufferDistribution(
        p_o=p_o, rho_s=rho, mu_s=mu_s, level_dist=levels,
        n=inp.n,
        bracket=(float(bracket[0]), float(bracket[1])), residual=float(residual))


def recursive_levels(n: int, B: int, p_o: float, rho_s: float) -> np.ndarray:
    """Levels reconstructed downward from the overflow probability."""
    out = np.empty(B + 1)
    out[B] = p_o
    for i in range(B, 0, -1):
        # C_{i-1}/C_i = i/(n-3+i)
        out[i - 1] = out[i] * i / ((n - 3 + i) * rho_s)
    return out
