import numpy as np
import pytest

from rpslab import netsim
from rpslab._netsim_kernels import DROPPED, run_link
from rpslab.backend import NUMBA_ENABLED
from rpslab.netsim import PriorityConfig, Topology, TrafficModel

US = 1e-6
PKT = 1500.0
TAU = PKT * 8 / 1e9  # 12 us at 1 Gb/s


def _link(times, cls, sizes, q=1.0, buf=1e9, coins=None):
    times = np.asarray(times, dtype=np.float64)
    cls = np.asarray(cls, dtype=np.int64)
    sizes = np.asarray(sizes, dtype=np.float64)
    if coins is None:
        coins = np.full(times.shape[0], 0.5)
    return run_link(times, cls, sizes, 1e9, q, buf, coins)


class TestLinkScheduler:
    def test_strict_priority_web_first(self):
        dep = _link([0.0, 0.0], [1, 0], [PKT, PKT], q=1.0)
        assert dep[1] == pytest.approx(TAU)
        assert dep[0] == pytest.approx(2 * TAU)

    def test_strict_priority_learning_first_when_dial_zero(self):
        dep = _link([0.0, 0.0], [1, 0], [PKT, PKT], q=0.0)
        assert dep[0] == pytest.approx(TAU)
        assert dep[1] == pytest.approx(2 * TAU)

    def test_learning_only_runs_when_web_queue_empty(self):
        # web backlog of 3 packets; learning arrives mid-backlog and must
        # wait for the whole web queue under the strict dial
        dep = _link([0.0, 0.0, 0.0, TAU / 2], [0, 0, 0, 1], [PKT] * 4, q=1.0)
        assert dep[3] == pytest.approx(4 * TAU)

    def test_nonpreemptive_transmission(self):
        # learning grabs the idle link; web arriving mid-transmission
        # waits only for that packet
        dep = _link([0.0, TAU / 2], [1, 0], [PKT, PKT], q=1.0)
        assert dep[0] == pytest.approx(TAU)
        assert dep[1] == pytest.approx(2 * TAU)

    def test_fifo_within_class(self):
        dep = _link([0.0, 0.0, 0.0], [0, 0, 0], [PKT, PKT, PKT], q=1.0)
        assert dep[0] < dep[1] < dep[2]

    def test_tail_drop_on_full_buffer(self):
        dep = _link([0.0, 0.0], [1, 1], [PKT, PKT], q=1.0, buf=PKT)
        assert dep[0] == pytest.approx(TAU)
        assert dep[1] == DROPPED

    def test_buffer_frees_at_service_start(self):
        # second learning packet arrives after the first started
        # transmitting, so the queue is empty again and it is admitted
        dep = _link([0.0, TAU / 2], [1, 1], [PKT, PKT], q=1.0, buf=PKT)
        assert dep[0] == pytest.approx(TAU)
        assert dep[1] == pytest.approx(2 * TAU)

    def test_web_never_dropped(self):
        dep = _link([0.0] * 5, [0] * 5, [PKT] * 5, q=1.0, buf=PKT)
        assert (dep > 0).all()

    def test_work_conserving_under_backlog(self):
        # everything queued at t=0: the link never idles, so departures
        # are exactly one serialization apart
        dep = _link([0.0] * 6, [0, 1, 0, 1, 0, 1], [PKT] * 6, q=1.0)
        np.testing.assert_allclose(np.sort(dep), TAU * np.arange(1, 7), rtol=1e-12)

    @pytest.mark.skipif(not NUMBA_ENABLED, reason="numba backend not active")
    def test_python_fallback_bit_identical(self):
        rngs = np.random.default_rng(6)
        times = np.sort(rngs.uniform(0, 0.01, 400))
        cls = rngs.integers(0, 2, 400)
        sizes = np.where(cls == 0, PKT, PKT)
        coins = rngs.uniform(size=400)
        jit = run_link(times, cls, sizes.astype(float), 1e9, 0.7, 4500.0, coins)
        plain = run_link.py_func(times, cls, sizes.astype(float), 1e9, 0.7, 4500.0, coins)
        assert np.array_equal(jit, plain)


class TestSimulateMessages:
    def test_single_message_two_store_and_forward_hops(self):
        # 100 KB over 1 Gb/s: 0.8 ms per hop, switch forwards only the
        # complete message, so exactly 1.6 ms end to end
        topo = Topology()
        comp, _, _ = netsim.simulate_messages(
            topo, PriorityConfig(), np.array([0.0]), np.array([3]), np.array([7]), 100_000,
            np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64),
        )
        assert comp[0] == pytest.approx(1.6e-3, rel=1e-12)

    def test_two_messages_same_destination_queue(self):
        topo = Topology()
        comp, _, _ = netsim.simulate_messages(
            topo, PriorityConfig(), np.array([0.0, 0.0]), np.array([0, 1]), np.array([2, 2]), 100_000,
            np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64),
        )
        first, second = sorted(comp)
        assert first == pytest.approx(1.6e-3, rel=1e-9)
        assert second == pytest.approx(2.4e-3, rel=1e-9)  # waits one downlink serialization

    def test_completions_respect_minimum_transit_time(self):
        topo = Topology()
        traffic = TrafficModel(web_lambda=3000.0)
        times, src, dst = netsim._web_messages(topo, traffic, 0.2, seed=8)
        ltimes, lsrc, ldst = netsim._learning_packets(topo, traffic, 0.2)
        comp, _, _ = netsim.simulate_messages(
            topo, PriorityConfig(), times, src, dst, traffic.web_msg_bytes, ltimes, lsrc, ldst, seed=8
        )
        floor = 2 * traffic.web_msg_bytes * 8 / topo.link_rate
        assert np.all(comp - times >= floor - 1e-12)


class TestColocationSim:
    def test_no_web_traffic_no_learning_drops(self):
        rep = netsim.run_colocation_sim(Topology(), TrafficModel(web_lambda=0.0), PriorityConfig(), 0.1, seed=3)
        assert rep.learning_drop_rate == 0.0
        assert np.isnan(rep.web_mean_ms)

    def test_conservation_counts(self):
        rep = netsim.run_colocation_sim(Topology(), TrafficModel(web_lambda=4000.0), PriorityConfig(), 0.25, seed=1)
        c = rep.conservation
        assert c["web_injected"] == c["web_completed"]
        assert c["learning_injected_bytes"] == c["learning_delivered_bytes"] + c["learning_dropped_bytes"]
        assert rep.learning_dropped_bytes > 0  # strict dial with finite buffer sheds load

    def test_deterministic_given_seed(self):
        a = netsim.run_colocation_sim(Topology(), TrafficModel(web_lambda=3000.0), PriorityConfig(), 0.2, seed=9)
        b = netsim.run_colocation_sim(Topology(), TrafficModel(web_lambda=3000.0), PriorityConfig(), 0.2, seed=9)
        assert a == b
        c = netsim.run_colocation_sim(Topology(), TrafficModel(web_lambda=3000.0), PriorityConfig(), 0.2, seed=10)
        assert c.web_mean_ms != a.web_mean_ms

    def test_light_load_matches_queueing_estimate(self):
        topo = Topology()
        traffic = TrafficModel(web_lambda=500.0)
        estimate = netsim.web_completion_light_load_estimate(topo, traffic)
        rep = netsim.run_colocation_sim(topo, traffic, PriorityConfig(), 1.0, seed=4)
        assert rep.web_mean_ms == pytest.approx(estimate, rel=0.1)

    def test_web_completion_decreases_as_learning_loses_protection(self):
        topo = Topology()
        traffic = TrafficModel(web_lambda=5000.0)
        protected = netsim.run_colocation_sim(topo, traffic, PriorityConfig(web_priority=0.0), 0.4, seed=2)
        deprioritized = netsim.run_colocation_sim(topo, traffic, PriorityConfig(web_priority=1.0), 0.4, seed=2)
        assert deprioritized.web_mean_ms < protected.web_mean_ms
        assert deprioritized.learning_drop_rate > protected.learning_drop_rate

    def test_shrinking_learning_buffer_speeds_web_at_partial_priority(self):
        # with the dial below 1 the web class sometimes waits behind the
        # learning queue, so capping that queue (more drops) helps it
        topo = Topology()
        traffic = TrafficModel(web_lambda=5000.0)
        big = netsim.run_colocation_sim(
            topo, traffic, PriorityConfig(web_priority=0.9, learning_buffer_bytes=48_000), 0.5, seed=6
        )
        small = netsim.run_colocation_sim(
            topo, traffic, PriorityConfig(web_priority=0.9, learning_buffer_bytes=4_500), 0.5, seed=6
        )
        assert small.learning_drop_rate > big.learning_drop_rate
        assert small.web_mean_ms < big.web_mean_ms


class TestSweeps:
    def test_sweep_rows_and_baseline(self):
        topo = Topology()
        traffic = TrafficModel(web_lambda=4000.0)
        grid = [PriorityConfig(web_priority=q) for q in (0.0, 0.9, 1.0)]
        rows = netsim.sweep_priority(topo, traffic, grid, 0.3, seeds=[0])
        assert len(rows) == 3
        assert rows[0]["speedup"] == 1.0  # zero-drop dial position
        drops = [r["drop_rate"] for r in rows]
        spds = [r["speedup"] for r in rows]
        assert all(b >= a for a, b in zip(drops, drops[1:]))
        assert all(b >= a for a, b in zip(spds, spds[1:]))

    def test_sustainable_lambda_grows_with_allowed_drops(self):
        topo = Topology()
        traffic = TrafficModel(web_lambda=1000.0)
        grid = [1000.0, 3000.0, 5000.0, 7000.0, 9000.0]
        lam_lo = netsim.sustainable_lambda(topo, traffic, PriorityConfig(web_priority=0.0), 2.3, grid, 0.3, [0])
        lam_hi = netsim.sustainable_lambda(topo, traffic, PriorityConfig(web_priority=1.0), 2.3, grid, 0.3, [0])
        assert lam_hi[0] >= lam_lo[0] > 0


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        Topology(server_count=1)
    with pytest.raises(ValueError):
        TrafficModel(web_lambda=-1)
    with pytest.raises(ValueError):
        PriorityConfig(web_priority=1.5)
    with pytest.raises(ValueError):
        netsim.run_colocation_sim(Topology(), TrafficModel(), PriorityConfig(), 0.0)
