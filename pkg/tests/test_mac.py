import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bufmanet.errors import InvalidParameter
from bufmanet.mac import (MacScenario, ec_mac_epsilon, ec_mac_probabilities,
                          ls_mac_probabilities)
from bufmanet.sim import schedule_transmitters


def brute_force(n, m, gamma_cells, eps):
    """Exact opportunity probabilities by enumerating every placement.

    Node 0 is tagged, node 1 is its destination. Feasible only for tiny n, m.
    """
    m2 = m * m
    nu = (math.isqrt(gamma_cells) + 1) // 2

    def near(a, b):
        dx = abs(a // m - b // m)
        dy = abs(a % m - b % m)
        return min(dx, m - dx) <= nu - 1 and min(dy, m - dy) <= nu - 1

    sd = sr = Fraction(0)
    total = m2 ** n
    for cells in product(range(m2), repeat=n):
        c0 = cells[0]
        share = Fraction(1, sum(1 for c in cells if c == c0))
        # cell activity: 1/eps^2 of the slots for any given cell
        share /= eps * eps
        if near(c0, cells[1]):
            sd += share
        elif any(near(c0, cells[j]) for j in range(2, n)):
            sr += share / 2
    return sd / total, sr / total


@pytest.mark.parametrize("n,m", [(4, 2), (5, 2), (4, 3)])
def test_ls_matches_enumeration(n, m):
    sd, sr = brute_force(n, m, 1, 1)
    p = ls_mac_probabilities(n, m, exact=True)
    assert p.p_sd == sd and p.p_sr == sr
    f = ls_mac_probabilities(n, m)
    assert f.p_sd == pytest.approx(float(sd), rel=1e-12)
    assert f.p_sr == pytest.approx(float(sr), rel=1e-12)


@pytest.mark.parametrize("n,m,nu", [(4, 3, 2), (5, 3, 2)])
def test_ec_matches_enumeration(n, m, nu):
    eps = ec_mac_epsilon(nu, 1.0, m)
    sd, sr = brute_force(n, m, (2 * nu - 1) ** 2, eps)
    p = ec_mac_probabilities(n, m, nu, 1.0, exact=True)
    assert p.p_sd == sd and p.p_sr == sr


@pytest.mark.parametrize("n,m,nu", [(32, 4, 1), (50, 5, 1), (40, 7, 2), (60, 9, 3),
                                    (200, 10, 1), (12, 3, 2)])
def test_closed_forms_match_rational_sums(n, m, nu):
    for variant in ("ls", "ec"):
        if variant == "ls" and nu > 1:
            continue
        if variant == "ls":
            exact, fast = ls_mac_probabilities(n, m, True), ls_mac_probabilities(n, m)
        else:
            exact = ec_mac_probabilities(n, m, nu, 1.0, True)
            fast = ec_mac_probabilities(n, m, nu, 1.0)
        assert fast.p_sd == pytest.approx(float(exact.p_sd), rel=1e-10)
        assert fast.p_sr == pytest.approx(float(exact.p_sr), rel=1e-10)


def test_reference_values():
    p = ls_mac_probabilities(32, 4)
    assert p.p_sd == pytest.approx(0.0181740127, rel=1e-8)
    assert p.p_sr == pytest.approx(0.1415951110, rel=1e-8)
    p = ec_mac_probabilities(32, 4, 1, 1.0)
    assert p.p_sd == pytest.approx(0.00113587579, rel=1e-8)
    assert p.p_sr == pytest.approx(0.00884969444, rel=1e-8)


def test_epsilon():
    assert ec_mac_epsilon(1, 1.0, 4) == 4
    assert ec_mac_epsilon(1, 1.0, 10) == 4
    assert ec_mac_epsilon(2, 1.0, 20) == 8
    assert ec_mac_epsilon(1, 1.0, 3) == 3


@pytest.mark.parametrize("scenario", [MacScenario("ls", 8, 2), MacScenario("ec", 10, 3, 1, 0.0),
                                      MacScenario("ec", 9, 3, 2, 0.0)])
def test_scheduler_monte_carlo(scenario):
    """Empirical opportunity frequencies of the simulator's scheduler."""
    rng = np.random.default_rng(7)
    n, m2 = scenario.n, scenario.m ** 2
    draws = 20_000
    sd = sr = 0
    for t in range(draws):
        cells = rng.integers(0, m2, n)
        for tx, receivers in schedule_transmitters(cells, scenario, t, rng):
            if tx != 0:
                continue
            if 1 in receivers:
                sd += 1
            elif receivers:
                sr += 1
    p = scenario.probabilities()
    for hits, target in ((sd, p.p_sd), (sr / 2, p.p_sr)):
        est = hits / draws
        se = math.sqrt(max(target * (1 - target), 1e-12) / draws)
        assert abs(est - target) < 4.5 * se + 1e-4


def test_invalid():
    with pytest.raises(InvalidParameter):
        ls_mac_probabilities(3, 4)
    with pytest.raises(InvalidParameter):
        ls_mac_probabilities(10, 0)
    with pytest.raises(InvalidParameter):
        ec_mac_probabilities(32, 2, 2, 1.0)
    with pytest.raises(InvalidParameter):
        ec_mac_probabilities(32, 4, 0, 1.0)
    with pytest.raises(InvalidParameter):
        ec_mac_epsilon(1, -0.5, 4)
    with pytest.raises(ValueError):
        MacScenario("csma", 32, 4)


@given(n=st.integers(4, 400), m=st.integers(1, 30))
def test_ls_probabilities_are_probabilities(n, m):
    p = ls_mac_probabilities(n, m)
    assert p.p_sr == p.p_rd
    assert 0.0 <= p.p_sd <= 1.0 and 0.0 <= p.p_sr <= 0.5
    # a node transmits at most once per slot
    assert p.total <= 1.0 + 1e-12


@given(n=st.integers(4, 300), m=st.integers(1, 25), nu=st.integers(1, 4),
       delta=st.floats(0.0, 3.0))
def test_ec_probabilities_are_probabilities(n, m, nu, delta):
    if 2 * nu - 1 > m:
        return
    p = ec_mac_probabilities(n, m, nu, delta)
    assert p.p_sr == p.p_rd
    assert p.p_sd >= 0.0 and p.p_sr >= 0.0
    assert p.total <= 1.0 / ec_mac_epsilon(nu, delta, m) ** 2 + 1e-12
