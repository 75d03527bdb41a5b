"""Slot-synchronous Monte Carlo simulation of the buffer-limited network."""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import InvalidParameter
from ..mac import MacScenario, MacVariant
from . import kernel as K

log = logging.getLogger(__name__)

EVENT_NAMES = {K.EV_GENERATE: "generate", K.EV_SD: "s-d", K.EV_SR: "s-r",
               K.EV_RD: "r-d", K.EV_SR_BLOCKED: "s-r-blocked"}


class Mobility(str, enum.Enum):
    IID = "iid"
    RANDOM_WALK = "rw"

    @property
    def code(self) -> int:
        return K.IID if self is Mobility.IID else K.RANDOM_WALK


@dataclass(frozen=True)
class SimConfig:
    scenario: MacScenario
    B: int
    lam: float
    mobility: Mobility = Mobility.IID
    slots: int = 2_000_000
    warmup_fraction: float = 0.2
    seed: int = 1
    replications: int = 4
    batches: int = 20

    def __post_init__(self):
        object.__setattr__(self, "mobility", Mobility(self.mobility))
        if int(self.B) != self.B or self.B < 1:
            raise InvalidParameter(f"B must be an integer >= 1, got {self.B!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidParameter(f"lambda must lie in [0, 1], got {self.lam!r}")
        if self.slots < 10_000:
            raise InvalidParameter(f"slots must be >= 10^4, got {self.slots}")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise InvalidParameter("warmup_fraction must lie in [0, 1)")
        if self.replications < 1 or self.batches < 1:
            raise InvalidParameter("replications and batches must be positive")

    @property
    def n(self) -> int:
        return self.scenario.n

    @property
    def warmup_slots(self) -> int:
        return int(self.slots * self.warmup_fraction)


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float

    def __iter__(self):
        return iter((self.mean, self.stderr))


@dataclass
class SimMetrics:
    rop: Estimate
    throughput: Estimate
    mean_q_delay: Estimate
    mean_d_delay: Estimate
    mean_e2e_delay: Estimate
    mean_source_length: Estimate
    mean_source_sojourn: Estimate
    packets_generated: int
    packets_delivered: int
    packets_in_flight: int
    violations: int = 0
    max_occupancy: int = 0
    trace: np.ndarray | None = field(default=None, repr=False)

    @property
    def conserved(self) -> bool:
        return self.packets_generated == self.packets_delivered + self.packets_in_flight


# -- topology, mobility and scheduling --------------------------------------

def traffic_permutation(n: int) -> np.ndarray:
    """Destination of every flow: the cyclic shift ``i -> i + 1 (mod n)``."""
    return (np.arange(n) + 1) % n


def init_topology(config: SimConfig, rng: np.random.Generator | None = None):
    """Uniform initial cells plus the traffic permutation."""
    sc = config.scenario
    if rng is None:
        rng = np.random.default_rng(config.seed)
    cells = rng.integers(0, sc.m * sc.m, size=sc.n).astype(np.int64)
    return cells, traffic_permutation(sc.n)


def mobility_step(cells: np.ndarray, m: int, mobility: Mobility,
                  rng: np.random.Generator) -> np.ndarray:
    mobility = Mobility(mobility)
    cells = np.array(cells, dtype=np.int64)
    hi = m * m if mobility is Mobility.IID else 9
    draws = rng.integers(0, hi, size=cells.shape[0]).astype(np.int64)
    K.apply_moves(cells, m, mobility.code, draws)
    return cells


def _buckets(cells, m):
    cnt = np.zeros(m * m, np.int64)
    start = np.zeros(m * m, np.int64)
    memb = np.zeros(len(cells), np.int64)
    K.bucket_nodes(np.asarray(cells, np.int64), m * m, cnt, start, memb)
    return cnt, start, memb


def _mac_args(sc: MacScenario):
    if sc.variant is MacVariant.LS:
        return K.LS, 1, 1
    return K.EC, sc.epsilon, sc.nu


def schedule_transmitters(cells: np.ndarray, scenario: MacScenario, slot: int,
                          rng: np.random.Generator) -> list[tuple[int, list[int]]]:
    """Transmitters of this slot with the nodes each one can reach."""
    cells = np.asarray(cells, np.int64)
    m = scenario.m
    mac, eps, nu = _mac_args(scenario)
    cnt, start, memb = _buckets(cells, m)
    choice = (rng.random(m * m) * np.maximum(cnt, 1)).astype(np.int64)
    is_tx = np.zeros(len(cells), np.bool_)
    K.pick_transmitters(m, mac, eps, slot, cnt, start, memb, choice, is_tx)
    buf = np.zeros(len(cells), np.int64)
    out = []
    for s in np.flatnonzero(is_tx):
        k = K.collect_receivers(int(s), cells, m, nu, cnt, start, memb, buf)
        out.append((int(s), sorted(int(x) for x in buf[:k])))
    return out


class NetworkState:
    """Queue contents of every node, in the packed layout the kernel uses."""

    def __init__(self, n: int, B: int, capacity: int = 1024):
        self.n, self.B = n, B
        self.node, self.sq, self.rq, self.rqhl = K.new_state(n, B, capacity)

    @property
    def dest(self) -> np.ndarray:
        return self.node[K.N_DEST]

    @property
    def occupancy(self) -> np.ndarray:
        return self.node[K.N_OCC]

    @property
    def source_lengths(self) -> np.ndarray:
        return self.node[K.N_SQ_LEN]

    def generate(self, node: int, slot: int) -> None:
        """Add a packet generated during ``slot`` to the source queue of ``node``."""
        self.sq = K.push_source(node, slot + 1, self.node, self.sq)

    def packets(self) -> int:
        return int(self.source_lengths.sum() + self.occupancy.sum())

    def relay_queue(self, holder: int, flow: int) -> list[int]:
        """Sequence numbers waiting at ``holder`` for ``flow``, head first."""
        h, k = self.rqhl[0, holder, flow], self.rqhl[1, holder, flow]
        return [int(self.rq[2, holder, flow, (h + i) % self.B]) for i in range(k)]

    def source_queue(self, node: int) -> list[int]:
        cap = self.sq.shape[2]
        h, k = self.node[K.N_SQ_HEAD, node], self.node[K.N_SQ_LEN, node]
        return [int(self.sq[1, node, (h + i) % cap]) for i in range(k)]

    def violations(self, expected_packets: int) -> int:
        return int(K.check_state(self.node, self.rqhl, self.B, expected_packets))


def h2hr_step(transmitter: int, receivers, state: NetworkState, slot: int,
              rng: np.random.Generator) -> tuple[int, tuple[int, int, int, int]]:
    """One H2HR opportunity; returns the event code and the moved packet.

    The packet tuple is (flow, seq, t_generated, t_hol).
    """
    receivers = list(receivers)
    d = int(state.dest[transmitter])
    if d in receivers:
        r, coin = d, False
    elif receivers:
        r = receivers[int(rng.integers(len(receivers)))]
        coin = bool(rng.random() < 0.5)
    else:
        return K.EV_IDLE, (-1, -1, -1, -1)
    out = np.full(4, -1, np.int64)
    ev = K.h2hr_apply(transmitter, r, coin, slot, state.B, state.node, state.sq,
                      state.rq, state.rqhl, out)
    return int(ev), tuple(int(v) for v in out)


# -- replications -------------------------------------------------------------

def _ratio(num: np.ndarray, den: np.ndarray) -> Estimate:
    """Pooled ratio estimate with a batch-means standard error."""
    tot_den = den.sum()
    if tot_den == 0:
        return Estimate(0.0, 0.0)
    mean = float(num.sum() / tot_den)
    ok = den > 0
    if ok.sum() < 2:
        return Estimate(mean, math.nan)
    vals = num[ok] / den[ok]
    return Estimate(mean, float(vals.std(ddof=1) / math.sqrt(ok.sum())))


def run_replication(config: SimConfig, replication: int = 0, *, check: bool = False,
                    trace_cap: int = 0):
    """Raw kernel output for one replication, seeded ``seed + replication``."""
    sc = config.scenario
    seed = (config.seed + replication) & 0xFFFFFFFF
    cells, _ = init_topology(config, np.random.default_rng(seed))
    mac, eps, nu = _mac_args(sc)
    return K.simulate(sc.n, sc.m, config.B, float(config.lam), mac, eps, nu,
                      config.mobility.code, int(config.slots), config.warmup_slots,
                      config.batches, seed, cells, check, trace_cap)


def run_simulation(config: SimConfig, *, check: bool = False,
                   trace_cap: int = 0) -> SimMetrics:
    """Run every replication and pool the post-warm-up statistics."""
    tables, counters, trace = [], np.zeros(6, np.int64), None
    max_occ = 0
    for r in range(config.replications):
        stats, cnt, tr = run_replication(config, r, check=check,
                                         trace_cap=trace_cap if r == 0 else 0)
        log.debug("replication %d: generated=%d delivered=%d", r, cnt[0], cnt[1])
        tables.append(stats)
        counters[:4] += cnt[:4]
        max_occ = max(max_occ, int(cnt[4]))
        if r == 0 and trace_cap:
            trace = tr
    st = np.vstack(tables)
    n = config.n
    return SimMetrics(
        rop=_ratio(st[:, K.ST_FULL], st[:, K.ST_NODE_SLOTS]),
        throughput=_ratio(st[:, K.ST_DELIVERED], st[:, K.ST_SLOTS] * n),
        mean_q_delay=_ratio(st[:, K.ST_Q_SUM], st[:, K.ST_DELIVERED]),
        mean_d_delay=_ratio(st[:, K.ST_D_SUM], st[:, K.ST_DELIVERED]),
        mean_e2e_delay=_ratio(st[:, K.ST_T_SUM], st[:, K.ST_DELIVERED]),
        mean_source_length=_ratio(st[:, K.ST_SRC_LEN_SUM], st[:, K.ST_SLOTS] * n),
        mean_source_sojourn=_ratio(st[:, K.ST_SOJOURN_SUM], st[:, K.ST_SRC_DEPART]),
        packets_generated=int(counters[0]),
        packets_delivered=int(counters[1]),
        packets_in_flight=int(counters[2]),
        violations=int(counters[3]),
        max_occupancy=max_occ,
        trace=trace,
    )


def write_trace(trace: np.ndarray, path: str | Path) -> None:
    """Dump a kernel trace as ``slot,node,event,flow,seq`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "node", "event", "flow", "seq"])
        for slot, node, ev, flow, seq in trace:
            w.writerow([int(slot), int(node), EVENT_NAMES[int(ev)], int(flow), int(seq)])


def with_lambda(config: SimConfig, lam: float) -> SimConfig:
    return replace(config, lam=lam)
