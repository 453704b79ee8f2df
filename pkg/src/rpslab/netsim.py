"""Packet-level co-location study: prioritized web traffic sharing access
links with droppable learning-update traffic.

Topology is a single switch star: every server has a full-duplex link,
so a message crosses exactly two store-and-forward hops (source uplink,
then destination downlink).  Web messages are packetized, but the switch
forwards a message's packets only once the whole message has arrived, so
an isolated 100 KB message on an idle 1 Gb/s network completes in exactly
2 * 0.8 ms.  Learning traffic is a constant-rate packet stream (a stand-in
for update bursts whose real shape is workload-specific) that is dropped,
never retransmitted, when its queue share overflows.

The dial that produces the study's trade-off is ``web_priority``: the
probability that a contested dequeue serves the web queue first.  At 1.0
the web class has strict priority and the learning stream absorbs all
the queueing (and, with a finite buffer, the losses); at 0.0 the roles
flip.  Sweeping the dial maps learning-drop-rate against web speedup.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng
from ._netsim_kernels import DROPPED, run_link

PACKET_BYTES = 1500


@dataclass(frozen=True)
class Topology:
    server_count: int = 16
    link_rate: float = 1e9  # bits/second, per direction

    def __post_init__(self):
        if self.server_count < 2:
            raise ValueError("need at least two servers")
        if self.link_rate <= 0:
            raise ValueError("link rate must be positive")


@dataclass(frozen=True)
class TrafficModel:
    """Aggregate web message rate (Poisson, uniform random src != dst) and
    aggregate constant-rate learning load."""

    web_lambda: float = 5000.0  # messages/second, summed over servers
    web_msg_bytes: int = 100_000
    learning_load_bps: float = 2.4e9  # summed over servers

    def __post_init__(self):
        if self.web_lambda < 0 or self.learning_load_bps < 0:
            raise ValueError("traffic rates must be nonnegative")
        if self.web_msg_bytes <= 0:
            raise ValueError("web message size must be positive")


@dataclass(frozen=True)
class PriorityConfig:
    """Degree of web prioritization and the learning buffer per link."""

    web_priority: float = 1.0
    learning_buffer_bytes: float = 12000.0

    def __post_init__(self):
        if not 0.0 <= self.web_priority <= 1.0:
            raise ValueError("web_priority must be in [0, 1]")
        if self.learning_buffer_bytes < PACKET_BYTES:
            raise ValueError("buffer must hold at least one packet")


@dataclass
class SimReport:
    duration: float
    warmup: float
    web_messages: int
    web_completed: int
    web_mean_ms: float
    web_p99_ms: float
    learning_offered_bytes: int
    learning_delivered_bytes: int
    learning_dropped_bytes: int
    learning_drop_rate: float
    conservation: dict = field(default_factory=dict)


def _web_messages(topology: Topology, traffic: TrafficModel, duration: float, seed: int):
    """Poisson message arrivals on [0, duration) with uniform src and
    uniform dst among the other servers."""
    lam = traffic.web_lambda
    if lam == 0:
        empty = np.empty(0)
        return empty, np.empty(0, np.int64), np.empty(0, np.int64)
    times = []
    t = 0.0
    block = max(int(lam * duration * 1.25) + 64, 64)
    idx = 0
    while t < duration:
        u = rng.uniform(seed, rng.STAGE_NET_ARRIVAL, 0, np.arange(idx, idx + block, dtype=np.uint64))
        gaps = -np.log1p(-u) / lam
        chunk = t + np.cumsum(gaps)
        times.append(chunk)
        t = chunk[-1]
        idx += block
    times = np.concatenate(times)
    times = times[times < duration]
    m = times.shape[0]
    ids = np.arange(m, dtype=np.uint64)
    n = topology.server_count
    src = (rng.uniform(seed, rng.STAGE_NET_ARRIVAL, 1, ids) * n).astype(np.int64)
    hop = (rng.uniform(seed, rng.STAGE_NET_ARRIVAL, 2, ids) * (n - 1)).astype(np.int64)
    dst = (src + 1 + hop) % n
    return times, src, dst


def _learning_packets(topology: Topology, traffic: TrafficModel, duration: float):
    """Constant-rate learning stream: each server emits evenly spaced
    packets (staggered start) to round-robin destinations."""
    n = topology.server_count
    per_src_bps = traffic.learning_load_bps / n
    if per_src_bps == 0:
        return np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64)
    interval = PACKET_BYTES * 8.0 / per_src_bps
    times, srcs, dsts = [], [], []
    for s in range(n):
        offset = interval * s / n
        count = int(max(0.0, (duration - offset)) / interval) + 1
        t = offset + interval * np.arange(count)
        t = t[t < duration]
        k = np.arange(t.shape[0], dtype=np.int64)
        times.append(t)
        srcs.append(np.full(t.shape[0], s, dtype=np.int64))
        dsts.append((s + 1 + (k + s) % (n - 1)) % n)
    return np.concatenate(times), np.concatenate(srcs), np.concatenate(dsts)


def _sort_key(times, seq):
    return np.lexsort((seq, times))


def _dequeue_coins(count: int, seed: int, link_kind: int, link_id: int) -> np.ndarray:
    if count == 0:
        return np.empty(0)
    lanes = np.arange(count, dtype=np.uint64)
    return rng.uniform(seed, rng.STAGE_NET_DEQUEUE, link_kind, link_id, lanes)


def simulate_messages(
    topology: Topology,
    priority: PriorityConfig,
    web_times: np.ndarray,
    web_src: np.ndarray,
    web_dst: np.ndarray,
    msg_bytes: int,
    learn_times: np.ndarray,
    learn_src: np.ndarray,
    learn_dst: np.ndarray,
    seed: int = 0,
):
    """Push explicit web messages and learning packets through both hops.

    Returns (web_completion_times, learn_delivered_mask, learn_dropped_mask)
    with completion measured at last-packet delivery; links drain fully, so
    every packet is either delivered or dropped.
    """
    n = topology.server_count
    rate = topology.link_rate
    m = web_times.shape[0]

    full, rem = divmod(msg_bytes, PACKET_BYTES)
    sizes_msg = [PACKET_BYTES] * full + ([rem] if rem else [])
    ppm = len(sizes_msg)
    sizes_msg = np.array(sizes_msg, dtype=np.float64)

    web_pkt_time = np.repeat(web_times, ppm)
    web_pkt_msg = np.repeat(np.arange(m), ppm)
    web_pkt_size = np.tile(sizes_msg, m)
    web_pkt_src = np.repeat(web_src, ppm)
    web_pkt_dst = np.repeat(web_dst, ppm)

    lcount = learn_times.shape[0]
    lsize = np.full(lcount, float(PACKET_BYTES))

    # ---- uplinks ----
    web_up_dep = np.empty(m * ppm)
    learn_up_dep = np.empty(lcount)
    for s in range(n):
        wsel = np.flatnonzero(web_pkt_src == s)
        lsel = np.flatnonzero(learn_src == s)
        times = np.concatenate([web_pkt_time[wsel], learn_times[lsel]])
        cls = np.concatenate([np.zeros(wsel.size, np.int64), np.ones(lsel.size, np.int64)])
        sizes = np.concatenate([web_pkt_size[wsel], lsize[lsel]])
        seq = np.concatenate([wsel, m * ppm + lsel])  # global order fixes ties
        order = _sort_key(times, seq)
        coins = _dequeue_coins(times.shape[0], seed, 0, s)
        dep = run_link(
            times[order], cls[order], sizes[order], rate, priority.web_priority,
            priority.learning_buffer_bytes, coins,
        )
        inv = np.empty_like(order)
        inv[order] = np.arange(order.shape[0])
        dep = dep[inv]
        web_up_dep[wsel] = dep[: wsel.size]
        learn_up_dep[lsel] = dep[wsel.size :]

    # switch holds a message until its last packet arrives, then releases
    # the burst to the output queue
    release = np.full(m, -np.inf)
    np.maximum.at(release, web_pkt_msg, web_up_dep)
    web_dn_arrival = release[web_pkt_msg]
    learn_alive = learn_up_dep != DROPPED

    # ---- downlinks ----
    web_dn_dep = np.empty(m * ppm)
    learn_dn_dep = np.full(lcount, DROPPED)
    for s in range(n):
        wsel = np.flatnonzero(web_pkt_dst == s)
        lsel = np.flatnonzero(learn_alive & (learn_dst == s))
        times = np.concatenate([web_dn_arrival[wsel], learn_up_dep[lsel]])
        cls = np.concatenate([np.zeros(wsel.size, np.int64), np.ones(lsel.size, np.int64)])
        sizes = np.concatenate([web_pkt_size[wsel], lsize[lsel]])
        seq = np.concatenate([wsel, m * ppm + lsel])
        order = _sort_key(times, seq)
        coins = _dequeue_coins(times.shape[0], seed, 1, s)
        dep = run_link(
            times[order], cls[order], sizes[order], rate, priority.web_priority,
            priority.learning_buffer_bytes, coins,
        )
        inv = np.empty_like(order)
        inv[order] = np.arange(order.shape[0])
        dep = dep[inv]
        web_dn_dep[wsel] = dep[: wsel.size]
        learn_dn_dep[lsel] = dep[wsel.size :]

    completion = np.full(m, -np.inf)
    np.maximum.at(completion, web_pkt_msg, web_dn_dep)
    delivered = learn_dn_dep != DROPPED
    dropped = ~delivered
    return completion, delivered, dropped


def run_colocation_sim(
    topology: Topology,
    traffic: TrafficModel,
    priority: PriorityConfig,
    duration: float,
    seed: int = 0,
    warmup_frac: float = 0.1,
) -> SimReport:
    """Simulate ``duration`` seconds of offered traffic (links then drain)
    and report web completion statistics and the learning drop rate,
    excluding traffic created during the warmup window."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    web_times, web_src, web_dst = _web_messages(topology, traffic, duration, seed)
    learn_times, learn_src, learn_dst = _learning_packets(topology, traffic, duration)
    completion, delivered, dropped = simulate_messages(
        topology, priority, web_times, web_src, web_dst, traffic.web_msg_bytes,
        learn_times, learn_src, learn_dst, seed,
    )
    warmup = warmup_frac * duration
    wsel = web_times >= warmup
    lsel = learn_times >= warmup
    durations_ms = (completion[wsel] - web_times[wsel]) * 1e3
    offered = int(lsel.sum()) * PACKET_BYTES
    delivered_b = int((delivered & lsel).sum()) * PACKET_BYTES
    dropped_b = int((dropped & lsel).sum()) * PACKET_BYTES
    report = SimReport(
        duration=duration,
        warmup=warmup,
        web_messages=int(web_times.shape[0]),
        web_completed=int(np.isfinite(completion).sum()),
        web_mean_ms=float(durations_ms.mean()) if durations_ms.size else float("nan"),
        web_p99_ms=float(np.percentile(durations_ms, 99)) if durations_ms.size else float("nan"),
        learning_offered_bytes=offered,
        learning_delivered_bytes=delivered_b,
        learning_dropped_bytes=dropped_b,
        learning_drop_rate=(dropped_b / offered) if offered else 0.0,
        conservation={
            "web_injected": int(web_times.shape[0]),
            "web_completed": int(np.isfinite(completion).sum()),
            "learning_injected_bytes": int(learn_times.shape[0]) * PACKET_BYTES,
            "learning_delivered_bytes": int(delivered.sum()) * PACKET_BYTES,
            "learning_dropped_bytes": int(dropped.sum()) * PACKET_BYTES,
        },
    )
    return report


SWEEP_COLUMNS = ("drop_rate", "lambda", "web_mean_ms", "web_p99_ms", "speedup", "sustainable_lambda")


def sweep_priority(
    topology: Topology,
    traffic: TrafficModel,
    priority_grid,
    duration: float,
    seeds,
) -> list:
    """Web speedup versus learning drop rate across prioritization configs.

    For each config, statistics are seed-averaged; speedup is relative to
    the config with the lowest drop rate (the zero-drop end of the dial),
    which gets speedup exactly 1.0.
    """
    seeds = list(seeds)
    if not priority_grid or not seeds:
        raise ValueError("need at least one priority config and one seed")
    stats = []
    for prio in priority_grid:
        drops, means, p99s = [], [], []
        for seed in seeds:
            rep = run_colocation_sim(topology, traffic, prio, duration, seed)
            drops.append(rep.learning_drop_rate)
            means.append(rep.web_mean_ms)
            p99s.append(rep.web_p99_ms)
        stats.append((float(np.mean(drops)), float(np.mean(means)), float(np.mean(p99s))))
    base_mean = stats[int(np.argmin([s[0] for s in stats]))][1]
    rows = []
    for (drop, mean, p99) in stats:
        rows.append(
            {
                "drop_rate": drop,
                "lambda": traffic.web_lambda,
                "web_mean_ms": mean,
                "web_p99_ms": p99,
                "speedup": base_mean / mean,
                "sustainable_lambda": "",
            }
        )
    return rows


def sustainable_lambda(
    topology: Topology,
    traffic: TrafficModel,
    priority: PriorityConfig,
    target_ms: float,
    lambda_grid,
    duration: float,
    seeds,
):
    """Largest web arrival rate in the grid whose seed-averaged mean
    completion stays at or under the target; returns (lambda, drop_rate,
    mean_ms, p99_ms) of that operating point (lambda 0 if none qualify)."""
    seeds = list(seeds)
    best = (0.0, 0.0, float("nan"), float("nan"))
    for lam in sorted(lambda_grid):
        tr = TrafficModel(
            web_lambda=lam,
            web_msg_bytes=traffic.web_msg_bytes,
            learning_load_bps=traffic.learning_load_bps,
        )
        drops, means, p99s = [], [], []
        for seed in seeds:
            rep = run_colocation_sim(topology, tr, priority, duration, seed)
            drops.append(rep.learning_drop_rate)
            means.append(rep.web_mean_ms)
            p99s.append(rep.web_p99_ms)
        if np.mean(means) <= target_ms:
            best = (float(lam), float(np.mean(drops)), float(np.mean(means)), float(np.mean(p99s)))
    return best


def web_completion_light_load_estimate(topology: Topology, traffic: TrafficModel) -> float:
    """Tandem M/D/1 approximation of the mean web completion time (ms)
    under full web priority: two message serializations plus the queueing
    wait behind same-link web messages plus residual learning blocking."""
    serial = traffic.web_msg_bytes * 8.0 / topology.link_rate
    lam_link = traffic.web_lambda / topology.server_count
    rho = lam_link * serial
    if rho >= 1:
        raise ValueError("estimate valid only below saturation")
    wq = rho * serial / (2.0 * (1.0 - rho))
    rho_learn = traffic.learning_load_bps / topology.server_count / topology.link_rate
    pkt = PACKET_BYTES * 8.0 / topology.link_rate
    blocking = rho_learn * pkt / 2.0
    return (2.0 * serial + 2.0 * wq + 2.0 * blocking) * 1e3
