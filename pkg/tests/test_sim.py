from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bufmanet.delay import e2e_delay
from bufmanet.errors import InvalidParameter
from bufmanet.mac import MacScenario
from bufmanet.relay import throughput_capacity
from bufmanet.sim import (Mobility, NetworkState, SimConfig, h2hr_step, init_topology,
                          mobility_step, run_simulation, schedule_transmitters,
                          traffic_permutation, write_trace)
from bufmanet.sim import kernel as K

# 99.9% chi-square quantiles
CHI2_999 = {8: 26.12, 15: 37.70, 24: 51.18}


def chi2(counts):
    counts = np.asarray(counts, float)
    expected = counts.sum() / len(counts)
    return float(((counts - expected) ** 2 / expected).sum())


def config(variant="ls", n=8, m=2, B=3, workload=0.5, **kw):
    sc = MacScenario(variant, n, m)
    mu = throughput_capacity(sc.probabilities(), n, B)
    kw.setdefault("slots", 20_000)
    kw.setdefault("replications", 1)
    return SimConfig(sc, B, workload * mu, **kw)


def test_traffic_permutation_is_derangement():
    for n in (4, 7, 50):
        p = traffic_permutation(n)
        assert sorted(p) == list(range(n)) and np.all(p != np.arange(n))


def test_initial_placement_uniform():
    cfg = config(n=200, m=3, slots=10_000)
    counts = np.zeros(9)
    rng = np.random.default_rng(11)
    for _ in range(100):
        cells, _ = init_topology(cfg, rng)
        counts += np.bincount(cells, minlength=9)
    assert chi2(counts) < CHI2_999[8]


@pytest.mark.parametrize("mobility", list(Mobility))
def test_mobility_keeps_uniform_distribution(mobility):
    rng = np.random.default_rng(5)
    m = 5
    cells = np.zeros(400, np.int64)
    for _ in range(60):
        cells = mobility_step(cells, m, mobility, rng)
    assert chi2(np.bincount(cells, minlength=m * m)) < CHI2_999[24]


def test_random_walk_moves_to_neighbours_only():
    rng = np.random.default_rng(2)
    m = 6
    cells = rng.integers(0, m * m, 500)
    nxt = mobility_step(cells, m, Mobility.RANDOM_WALK, rng)
    dx = np.abs(cells // m - nxt // m)
    dy = np.abs(cells % m - nxt % m)
    assert np.all(np.minimum(dx, m - dx) <= 1) and np.all(np.minimum(dy, m - dy) <= 1)
    # the nine moves are equally likely
    start = np.full(9000, 7, np.int64)
    moved = mobility_step(start, m, Mobility.RANDOM_WALK, rng)
    assert chi2(np.unique(moved, return_counts=True)[1]) < CHI2_999[8]


def test_ls_schedule_one_transmitter_per_occupied_cell():
    rng = np.random.default_rng(0)
    sc = MacScenario("ls", 30, 3)
    cells = rng.integers(0, 9, 30)
    sched = schedule_transmitters(cells, sc, 0, rng)
    assert sorted(cells[tx] for tx, _ in sched) == sorted(set(cells))
    for tx, receivers in sched:
        assert tx not in receivers
        assert sorted(receivers) == sorted(j for j in range(30) if j != tx and cells[j] == cells[tx])


def test_ec_schedule_activates_one_class():
    rng = np.random.default_rng(0)
    sc = MacScenario("ec", 64, 8, 1, 1.0)
    eps = sc.epsilon
    cells = np.arange(64)
    for t in range(eps * eps):
        active = {cells[tx] for tx, _ in schedule_transmitters(cells, sc, t, rng)}
        k = t % (eps * eps)
        assert active == {c for c in range(64) if (c // 8) % eps == k // eps
                          and (c % 8) % eps == k % eps}


def test_h2hr_source_to_destination_and_idle():
    state = NetworkState(4, 2)
    rng = np.random.default_rng(0)
    ev, _ = h2hr_step(0, [1], state, 0, rng)
    assert ev == K.EV_IDLE
    state.generate(0, 0)
    ev, pkt = h2hr_step(0, [1, 2], state, 3, rng)
    assert ev == K.EV_SD and pkt[0] == 0 and pkt[2] == 1 and pkt[3] == 1
    assert state.packets() == 0


class FixedRng:
    """Stand-in generator: always picks receiver ``pick`` and a fixed coin."""

    def __init__(self, source_to_relay, pick=0):
        self.u = 0.0 if source_to_relay else 0.9
        self.pick = pick

    def integers(self, k):
        return self.pick

    def random(self):
        return self.u


def test_h2hr_handshake_blocks_full_relay():
    state = NetworkState(4, 1)
    state.generate(0, 0)
    state.generate(0, 1)
    state.generate(3, 0)
    ev, _ = h2hr_step(0, [2], state, 2, FixedRng(True))
    assert ev == K.EV_SR and state.relay_queue(2, 0) == [0]
    assert state.occupancy[2] == 1
    ev, _ = h2hr_step(3, [2], state, 3, FixedRng(True))
    assert ev == K.EV_SR_BLOCKED
    assert state.source_queue(3) == [0] and state.occupancy[2] == 1
    assert state.violations(state.packets()) == 0


def test_h2hr_relay_to_destination_fifo():
    state = NetworkState(5, 3)
    for t in range(3):
        state.generate(0, t)
    for t in range(3):
        assert h2hr_step(0, [3], state, 10 + t, FixedRng(True))[0] == K.EV_SR
    assert state.relay_queue(3, 0) == [0, 1, 2]
    # node 3 meets node 1, the destination of flow 0, and takes the R-D branch
    got = [h2hr_step(3, [1], state, 20 + t, FixedRng(False))[1][1] for t in range(3)]
    assert got == [0, 1, 2]
    assert h2hr_step(3, [1], state, 30, FixedRng(False))[0] == K.EV_IDLE


def test_conservation_single_cell():
    cfg = config(n=4, m=1, B=2, workload=0.9, slots=10_000)
    met = run_simulation(cfg, check=True)
    assert met.violations == 0 and met.conserved
    assert met.max_occupancy <= 2


def test_determinism():
    cfg = config(variant="ec", n=16, m=4, B=3, workload=0.7, replications=2,
                 mobility="rw", seed=42)
    a, b = run_simulation(cfg), run_simulation(cfg)
    assert a.rop == b.rop and a.mean_e2e_delay == b.mean_e2e_delay
    assert a.packets_generated == b.packets_generated
    c = run_simulation(config(variant="ec", n=16, m=4, B=3, workload=0.7, replications=2,
                              mobility="rw", seed=43))
    assert c.packets_generated != a.packets_generated or c.rop != a.rop


def test_trace_fifo_and_csv(tmp_path):
    cfg = config(n=10, m=2, B=3, workload=0.8, slots=20_000)
    met = run_simulation(cfg, trace_cap=50_000)
    trace = met.trace
    assert len(trace) > 100
    last = defaultdict(lambda: -1)
    for slot, node, ev, flow, seq in trace:
        if ev in (K.EV_SD, K.EV_SR):
            key = ("src", flow)
        elif ev == K.EV_RD:
            key = ("relay", node, flow)
        else:
            continue
        assert seq > last[key]
        last[key] = seq
    path = tmp_path / "trace.csv"
    write_trace(trace, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "slot,node,event,flow,seq" and len(lines) == len(trace) + 1


def test_little_law_and_identity():
    cfg = config(n=16, m=2, B=4, workload=0.6, slots=200_000, replications=2)
    met = run_simulation(cfg)
    lam = cfg.lam
    assert met.mean_source_length.mean == pytest.approx(
        lam * met.mean_source_sojourn.mean, rel=0.03)
    assert met.mean_e2e_delay.mean == pytest.approx(
        met.mean_q_delay.mean + met.mean_d_delay.mean, rel=1e-9)
    assert met.throughput.mean == pytest.approx(lam, rel=0.05)


def test_short_run_near_theory():
    sc = MacScenario("ls", 32, 4)
    mu = throughput_capacity(sc.probabilities(), 32, 5)
    cfg = SimConfig(sc, 5, 0.6 * mu, slots=300_000, replications=1)
    met = run_simulation(cfg)
    rep = e2e_delay(32, 5, cfg.lam, sc.probabilities())
    assert met.rop.mean == pytest.approx(rep.p_o, rel=0.1)
    assert met.mean_e2e_delay.mean == pytest.approx(rep.e2e_delay, rel=0.1)


def test_config_validation():
    sc = MacScenario("ls", 8, 2)
    with pytest.raises(InvalidParameter):
        SimConfig(sc, 0, 0.01)
    with pytest.raises(InvalidParameter):
        SimConfig(sc, 2, 1.5)
    with pytest.raises(InvalidParameter):
        SimConfig(sc, 2, 0.01, slots=100)
    with pytest.raises(ValueError):
        SimConfig(sc, 2, 0.01, mobility="teleport")


@settings(max_examples=15, deadline=None)
@given(n=st.integers(4, 20), m=st.integers(1, 4), B=st.integers(1, 4),
       workload=st.floats(0.1, 1.4), variant=st.sampled_from(["ls", "ec"]),
       mobility=st.sampled_from(list(Mobility)), seed=st.integers(0, 2**31))
def test_simulation_invariants(n, m, B, workload, variant, mobility, seed):
    sc = MacScenario(variant, n, m)
    mu = throughput_capacity(sc.probabilities(), n, B)
    lam = min(workload * mu, 1.0)
    met = run_simulation(SimConfig(sc, B, lam, mobility, slots=10_000, seed=seed,
                                   replications=1), check=True)
    assert met.violations == 0
    assert met.conserved
    assert met.max_occupancy <= B
    assert 0.0 <= met.rop.mean <= 1.0
