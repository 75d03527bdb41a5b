"""Per-slot transmission-opportunity probabilities for cell-partitioned MACs.

Two scenarios are supported: local scheduling (LS-MAC), where every occupied
cell elects one transmitter per slot, and equivalent-class scheduling with
power control (EC-MAC), where cells are grouped into ``eps**2`` classes that
take turns and a transmitter reaches every node within ``nu - 1`` cells.

The double-precision routines use closed forms. ``exact=True`` evaluates the
underlying occupancy sums in rational arithmetic instead, which makes it an
independent reference for small networks.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from math import comb

from .errors import InvalidParameter


class MacVariant(str, enum.Enum):
    LS = "ls"
    EC = "ec"


@dataclass(frozen=True)
class TransmissionProbabilities:
    """Probabilities that a tagged node gets an S-D, S-R or R-D opportunity."""

    p_sd: float
    p_sr: float
    p_rd: float

    @property
    def total(self) -> float:
        return self.p_sd + self.p_sr + self.p_rd


@dataclass(frozen=True)
class MacScenario:
    variant: MacVariant
    n: int
    m: int
    nu: int = 1
    delta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "variant", MacVariant(self.variant))
        _check_nm(self.n, self.m)
        if self.variant is MacVariant.EC:
            _check_ec(self.m, self.nu, self.delta)

    @property
    def epsilon(self) -> int:
        if self.variant is MacVariant.LS:
            return 1
        return ec_mac_epsilon(self.nu, self.delta, self.m)

    @property
    def gamma(self) -> int:
        return (2 * self.nu - 1) ** 2 if self.variant is MacVariant.EC else 1

    def probabilities(self) -> TransmissionProbabilities:
        if self.variant is MacVariant.LS:
            return ls_mac_probabilities(self.n, self.m)
        return ec_mac_probabilities(self.n, self.m, self.nu, self.delta)


def _check_nm(n, m):
    if int(n) != n or n < 4:
        raise InvalidParameter(f"n must be an integer >= 4, got {n!r}")
    if int(m) != m or m < 1:
        raise InvalidParameter(f"m must be an integer >= 1, got {m!r}")


def _check_ec(m, nu, delta):
    if int(nu) != nu or nu < 1:
        raise InvalidParameter(f"nu must be an integer >= 1, got {nu!r}")
    if not delta >= 0:
        raise InvalidParameter(f"delta must be non-negative, got {delta!r}")
    if (2 * nu - 1) > m:
        raise InvalidParameter(
            f"transmission range (2*nu-1)^2 = {(2 * nu - 1) ** 2} exceeds m^2 = {m * m}")


def _stay_power(m: int, k: int) -> float:
    """(1 - 1/m^2)**k without forming the base explicitly."""
    if m == 1:
        return 0.0 if k > 0 else 1.0
    return math.exp(k * math.log1p(-1.0 / (m * m)))


def ls_mac_probabilities(n: int, m: int, exact: bool = False) -> TransmissionProbabilities:
    _check_nm(n, m)
    if exact:
        return _ls_exact(n, m)
    m2 = m * m
    q1 = _stay_power(m, n - 1)
    q0 = _stay_power(m, n)
    # m2/n - (m2-1)/(n-1) folded into one fraction to limit cancellation
    p_sd = ((n - m2) + (m2 - 1) * q1) / (n * (n - 1))
    p_sr = 0.5 * ((m2 - 1) / (n - 1) - m2 / (n - 1) * q0 - q1)
    p_sd = max(p_sd, 0.0)
    p_sr = max(p_sr, 0.0)
    return TransmissionProbabilities(p_sd, p_sr, p_sr)


def ec_mac_epsilon(nu: int, delta: float, m: int) -> int:
    """Equivalent-class spacing that satisfies the protocol-model guard zone."""
    if int(nu) != nu or nu < 1:
        raise InvalidParameter(f"nu must be an integer >= 1, got {nu!r}")
    if not delta >= 0:
        raise InvalidParameter(f"delta must be non-negative, got {delta!r}")
    if int(m) != m or m < 1:
        raise InvalidParameter(f"m must be an integer >= 1, got {m!r}")
    return min(math.ceil((1.0 + delta) * math.sqrt(2.0) * nu + nu), int(m))


def ec_mac_probabilities(n: int, m: int, nu: int, delta: float,
                         exact: bool = False) -> TransmissionProbabilities:
    _check_nm(n, m)
    _check_ec(m, nu, delta)
    eps = ec_mac_epsilon(nu, delta, m)
    gamma = (2 * nu - 1) ** 2
    if exact:
        return _ec_exact(n, m, gamma, eps)
    m2 = m * m
    q1 = _stay_power(m, n - 1)
    if gamma == m2:
        r1 = 0.0
    else:
        r1 = math.exp((n - 1) * math.log1p(-gamma / m2))
    scale = 1.0 / (eps * eps)
    p_sd = scale * ((gamma - m2 / n) / (n - 1)
                    + (m2 - 1 - (gamma - 1) * n) / (n * (n - 1)) * q1)
    p_sr = 0.5 * scale * ((m2 - gamma) / (n - 1) * (1.0 - q1) - r1)
    p_sd = max(p_sd, 0.0)
    p_sr = max(p_sr, 0.0)
    return TransmissionProbabilities(p_sd, p_sr, p_sr)


# -- rational-arithmetic occupancy sums -----------------------------------

def _co_located(n: int, a: Fraction):
    """Yield (k, P[k of the n-2 bystanders fall in a cell hit w.p. a])."""
    b = 1 - a
    for k in range(n - 1):
        yield k, comb(n - 2, k) * a ** k * b ** (n - 2 - k)


def _ls_exact(n: int, m: int) -> TransmissionProbabilities:
    a = Fraction(1, m * m)
    # S-D: destination shares S's cell, S wins against k bystanders + D
    p_sd = sum((a * w / (k + 2) for k, w in _co_located(n, a)), Fraction(0))
    # S-R: destination elsewhere, at least one bystander present, S wins, coin
    p_sr = Fraction(1, 2) * (1 - a) * sum(
        (w / (k + 1) for k, w in _co_located(n, a) if k >= 1), Fraction(0))
    return TransmissionProbabilities(p_sd, p_sr, p_sr)


def _ec_exact(n: int, m: int, gamma: int, eps: int) -> TransmissionProbabilities:
    a = Fraction(1, m * m)
    ring = Fraction(gamma - 1, m * m)
    outside = 1 - a - ring
    scale = Fraction(1, eps * eps)
    same = sum((w / (k + 2) for k, w in _co_located(n, a)), Fraction(0))
    near = sum((w / (k + 1) for k, w in _co_located(n, a)), Fraction(0))
    p_sd = scale * (a * same + ring * near)
    # D out of range; S wins its cell; some bystander within range
    with_peer = sum((w / (k + 1) for k, w in _co_located(n, a) if k >= 1), Fraction(0))
    only_ring = (1 - a) ** (n - 2) - outside ** (n - 2)
    p_sr = Fraction(1, 2) * scale * outside * (with_peer + only_ring)
    return TransmissionProbabilities(p_sd, p_sr, p_sr)
