"""Jitted slot loop and the per-slot building blocks it shares with the API.

All state lives in four integer arrays so the whole replication can run
inside one compiled call: ``node`` (per-node scalars, rows ``N_*``), ``sq``
(source-queue rings of (t_gen, seq)), ``rq`` (relay rings of (t_gen, t_hol,
seq) indexed by holder, flow, slot) and ``rqhl`` (relay ring head/length). Timestamps are slot boundaries: slot ``t`` spans
``[t, t + 1)``, a packet generated during slot ``t`` enters its source queue
at boundary ``t + 1`` and a packet delivered during slot ``t`` is stamped
``t + 1``.
"""

import numpy as np
from numba import njit

IID = 0
RANDOM_WALK = 1

LS = 0
EC = 1

# event codes in traces and step results
EV_IDLE = -1
EV_GENERATE = 0
EV_SD = 1
EV_SR = 2
EV_RD = 3
EV_SR_BLOCKED = 4

# columns of the per-batch statistics table
ST_FULL = 0
ST_NODE_SLOTS = 1
ST_DELIVERED = 2
ST_Q_SUM = 3
ST_D_SUM = 4
ST_T_SUM = 5
ST_SRC_LEN_SUM = 6
ST_SLOTS = 7
ST_SRC_DEPART = 8
ST_SOJOURN_SUM = 9
ST_GENERATED = 10
N_STATS = 11

NEVER = np.iinfo(np.int64).max // 4

# rows of the per-node state table
N_DEST = 0
N_SRC_OF = 1
N_SQ_HEAD = 2
N_SQ_LEN = 3
N_LAST_DEP = 4
N_OCC = 5
N_GEN_SEQ = 6
N_ROWS = 7


@njit(cache=True, error_model="numpy")
def seed_kernel_rng(seed):
    np.random.seed(seed)


@njit(cache=True, inline="always", error_model="numpy")
def apply_moves(cell, m, mobility, draws):
    """Move every node. ``draws`` holds a new cell (i.i.d.) or a step code 0..8."""
    if m == 1:
        return
    for i in range(cell.shape[0]):
        if mobility == IID:
            cell[i] = draws[i]
        else:
            x = cell[i] // m
            y = cell[i] % m
            dx = draws[i] // 3 - 1
            dy = draws[i] % 3 - 1
            cell[i] = ((x + dx) % m) * m + (y + dy) % m


@njit(cache=True, inline="always", error_model="numpy")
def bucket_nodes(cell, m2, cnt, start, memb):
    """Counting sort of node ids by cell; members of a cell stay in id order."""
    cnt[:] = 0
    for i in range(cell.shape[0]):
        cnt[cell[i]] += 1
    acc = 0
    for c in range(m2):
        start[c] = acc
        acc += cnt[c]
    fill = start[:m2].copy()
    for i in range(cell.shape[0]):
        c = cell[i]
        memb[fill[c]] = i
        fill[c] += 1


@njit(cache=True, inline="always", error_model="numpy")
def cell_active(c, m, mac, eps, t):
    if mac == LS:
        return True
    k = t % (eps * eps)
    return (c // m) % eps == k // eps and (c % m) % eps == k % eps


@njit(cache=True, inline="always", error_model="numpy")
def pick_transmitters(m, mac, eps, t, cnt, start, memb, choice, is_tx):
    """One transmitter per occupied active cell.

    ``choice[c]`` is the winner's rank among the members of cell ``c``
    (uniform on ``0..cnt[c]-1`` for DCF-style contention).
    """
    is_tx[:] = False
    for c in range(m * m):
        if cnt[c] > 0 and cell_active(c, m, mac, eps, t):
            is_tx[memb[start[c] + choice[c]]] = True


@njit(cache=True, inline="always", error_model="numpy")
def in_range(a, b, m, nu):
    xa = a // m
    ya = a % m
    xb = b // m
    yb = b % m
    dx = abs(xa - xb)
    dy = abs(ya - yb)
    dx = min(dx, m - dx)
    dy = min(dy, m - dy)
    return dx <= nu - 1 and dy <= nu - 1


@njit(cache=True, inline="always", error_model="numpy")
def collect_receivers(s, cell, m, nu, cnt, start, memb, buf):
    """Write the ids of nodes reachable from ``s`` into ``buf``; return the count."""
    c0 = cell[s]
    x0 = c0 // m
    y0 = c0 % m
    k = 0
    r = nu - 1
    for dx in range(-r, r + 1):
        for dy in range(-r, r + 1):
            c = ((x0 + dx) % m) * m + (y0 + dy) % m
            for p in range(start[c], start[c] + cnt[c]):
                j = memb[p]
                if j != s:
                    buf[k] = j
                    k += 1
    return k


@njit(cache=True, inline="always", error_model="numpy")
def h2hr_apply(s, r, coin_sr, t, B, node, sq, rq, rqhl, out):
    """Carry out one transmission opportunity of node ``s``.

    ``r`` is the destination for an S-D opportunity, the chosen receiver
    otherwise, or -1 when nobody is in range. ``coin_sr`` selects S-R over
    R-D. ``out`` receives (flow, seq, t_gen, t_hol) of the moved packet.
    Returns the event code.
    """
    if r < 0:
        return EV_IDLE
    if r == node[N_DEST, s] or coin_sr:
        if node[N_SQ_LEN, s] == 0:
            return EV_IDLE
        sd = r == node[N_DEST, s]
        if not sd and node[N_OCC, r] >= B:
            return EV_SR_BLOCKED
        h = node[N_SQ_HEAD, s]
        tg = sq[0, s, h]
        th = max(node[N_LAST_DEP, s], tg)
        out[0] = s
        out[1] = sq[1, s, h]
        out[2] = tg
        out[3] = th
        node[N_SQ_HEAD, s] = (h + 1) % sq.shape[2]
        node[N_SQ_LEN, s] -= 1
        node[N_LAST_DEP, s] = t + 1
        if sd:
            return EV_SD
        pos = (rqhl[0, r, s] + rqhl[1, r, s]) % B
        rq[0, r, s, pos] = tg
        rq[1, r, s, pos] = th
        rq[2, r, s, pos] = out[1]
        rqhl[1, r, s] += 1
        node[N_OCC, r] += 1
        return EV_SR
    f = node[N_SRC_OF, r]
    if rqhl[1, s, f] == 0:
        return EV_IDLE
    h = rqhl[0, s, f]
    out[0] = f
    out[1] = rq[2, s, f, h]
    out[2] = rq[0, s, f, h]
    out[3] = rq[1, s, f, h]
    rqhl[0, s, f] = (h + 1) % B
    rqhl[1, s, f] -= 1
    node[N_OCC, s] -= 1
    return EV_RD


@njit(cache=True)
def new_state(n, B, cap):
    """Zeroed (node, sq, rq, rqhl) arrays with the traffic permutation filled in."""
    node = np.zeros((N_ROWS, n), np.int64)
    for i in range(n):
        node[N_DEST, i] = (i + 1) % n
        node[N_SRC_OF, (i + 1) % n] = i
    sq = np.zeros((2, n, cap), np.int64)
    rq = np.zeros((3, n, n, B), np.int64)
    rqhl = np.zeros((2, n, n), np.int64)
    return node, sq, rq, rqhl


@njit(cache=True, inline="always", error_model="numpy")
def push_source(i, stamp, node, sq):
    """Append a fresh packet to the source queue of ``i``; return the queue array."""
    if node[N_SQ_LEN, i] == sq.shape[2]:
        sq = _grow(sq, node)
    cap = sq.shape[2]
    pos = (node[N_SQ_HEAD, i] + node[N_SQ_LEN, i]) % cap
    sq[0, i, pos] = stamp
    sq[1, i, pos] = node[N_GEN_SEQ, i]
    node[N_SQ_LEN, i] += 1
    node[N_GEN_SEQ, i] += 1
    return sq


@njit(cache=True, error_model="numpy")
def _grow(sq, node):
    _, n, cap = sq.shape
    g = np.empty((2, n, 2 * cap), np.int64)
    for i in range(n):
        h = node[N_SQ_HEAD, i]
        for k in range(node[N_SQ_LEN, i]):
            g[0, i, k] = sq[0, i, (h + k) % cap]
            g[1, i, k] = sq[1, i, (h + k) % cap]
        node[N_SQ_HEAD, i] = 0
    return g


@njit(cache=True, inline="always", error_model="numpy")
def _trace(trace, tn, t, node, ev, flow, seq):
    if tn < trace.shape[0]:
        trace[tn, 0] = t
        trace[tn, 1] = node
        trace[tn, 2] = ev
        trace[tn, 3] = flow
        trace[tn, 4] = seq
        return tn + 1
    return tn


@njit(cache=True, inline="always")
def _gap(lam):
    if lam <= 0.0:
        return NEVER
    return np.random.geometric(lam)


@njit(cache=True, error_model="numpy")
def simulate(n, m, B, lam, mac, eps, nu, mobility, slots, warm, nbatch,
             seed, init_cell, check, trace_cap):
    """Run one replication.

    Returns ``(stats, counters, trace)`` where ``stats`` is an
    ``(nbatch, N_STATS)`` table of post-warm-up sums, ``counters`` is
    ``[generated, delivered, in_flight, violations, max_occupancy, trace_len]``
    over the whole run and ``trace`` holds the first ``trace_cap`` events.
    """
    np.random.seed(seed)
    m2 = m * m
    cell = init_cell.copy()
    node, sq, rq, rqhl = new_state(n, B, 64)

    cnt = np.zeros(m2, np.int64)
    start = np.zeros(m2, np.int64)
    memb = np.zeros(n, np.int64)
    is_tx = np.zeros(n, np.bool_)
    draws = np.zeros(n, np.int64)
    choice = np.zeros(m2, np.int64)
    buf = np.zeros(n, np.int64)
    out = np.zeros(4, np.int64)

    stats = np.zeros((nbatch, N_STATS))
    trace = np.zeros((trace_cap, 5), np.int64)
    tn = 0
    generated = 0
    delivered = 0
    in_src = 0
    violations = 0
    max_occ = 0
    post = slots - warm
    span = m2 if mobility == IID else 9
    # Bernoulli arrivals sampled through their geometric inter-arrival gaps
    next_arrival = np.empty(n, np.int64)
    for i in range(n):
        next_arrival[i] = _gap(lam) - 1

    for t in range(slots):
        counting = t >= warm
        b = (t - warm) * nbatch // post if counting else 0

        if m > 1:
            for i in range(n):
                draws[i] = np.random.randint(0, span)
            apply_moves(cell, m, mobility, draws)
        bucket_nodes(cell, m2, cnt, start, memb)
        for c in range(m2):
            if cnt[c] > 0 and cell_active(c, m, mac, eps, t):
                choice[c] = np.random.randint(0, cnt[c])
        pick_transmitters(m, mac, eps, t, cnt, start, memb, choice, is_tx)

        for s in range(n):
            if not is_tx[s]:
                continue
            d = node[N_DEST, s]
            if in_range(cell[s], cell[d], m, nu):
                r = d
                coin = False
            elif nu == 1:
                c = cell[s]
                k = cnt[c] - 1
                if k == 0:
                    continue
                # uniform over the cell's other members: the slot s would take
                # is handed to the last member instead
                r = memb[start[c] + np.random.randint(0, k)]
                if r == s:
                    r = memb[start[c] + k]
                coin = np.random.randint(0, 2) == 0
            else:
                k = collect_receivers(s, cell, m, nu, cnt, start, memb, buf)
                if k == 0:
                    continue
                r = buf[np.random.randint(0, k)]
                coin = np.random.randint(0, 2) == 0
            ev = h2hr_apply(s, r, coin, t, B, node, sq, rq, rqhl, out)
            if ev == EV_IDLE:
                continue
            if ev == EV_SR_BLOCKED:
                if trace_cap > 0:
                    tn = _trace(trace, tn, t, s, ev, s, -1)
                continue
            if trace_cap > 0:
                tn = _trace(trace, tn, t, s, ev, out[0], out[1])
            if ev != EV_RD:
                in_src -= 1
                if counting:
                    stats[b, ST_SRC_DEPART] += 1
                    stats[b, ST_SOJOURN_SUM] += t + 1 - out[2]
            if ev != EV_SR:
                delivered += 1
                if counting:
                    stats[b, ST_DELIVERED] += 1
                    stats[b, ST_Q_SUM] += out[3] - out[2]
                    stats[b, ST_D_SUM] += t + 1 - out[3]
                    stats[b, ST_T_SUM] += t + 1 - out[2]

        for i in range(n):
            if next_arrival[i] == t:
                next_arrival[i] = t + _gap(lam)
                if trace_cap > 0:
                    tn = _trace(trace, tn, t, i, EV_GENERATE, i, node[N_GEN_SEQ, i])
                sq = push_source(i, t + 1, node, sq)
                in_src += 1
                generated += 1
                if counting:
                    stats[b, ST_GENERATED] += 1

        if counting:
            full = 0
            for i in range(n):
                if node[N_OCC, i] == B:
                    full += 1
            stats[b, ST_FULL] += full
            stats[b, ST_NODE_SLOTS] += n
            stats[b, ST_SRC_LEN_SUM] += in_src
            stats[b, ST_SLOTS] += 1

        if check:
            violations += check_state(node, rqhl, B, generated - delivered)
            for i in range(n):
                max_occ = max(max_occ, node[N_OCC, i])

    in_flight = in_src
    for i in range(n):
        in_flight += node[N_OCC, i]
    counters = np.array([generated, delivered, in_flight, violations, max_occ, tn],
                        np.int64)
    return stats, counters, trace[:tn].copy()


@njit(cache=True, error_model="numpy")
def check_state(node, rqhl, B, expected_packets):
    """Count broken invariants: buffer bound, occupancy bookkeeping,
    forbidden flows in a relay buffer, and packet conservation."""
    n = node.shape[1]
    bad = 0
    total = 0
    for i in range(n):
        occ = node[N_OCC, i]
        if occ > B or occ < 0:
            bad += 1
        acc = 0
        for f in range(n):
            acc += rqhl[1, i, f]
        if acc != occ:
            bad += 1
        if rqhl[1, i, i] != 0 or rqhl[1, i, node[N_SRC_OF, i]] != 0:
            bad += 1
        total += occ + node[N_SQ_LEN, i]
    if total != expected_packets:
        bad += 1
    return bad
