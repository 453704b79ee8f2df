"""Single-link packet scheduler kernel.

One transmitter with two FIFO queues: web (never dropped, unbounded) and
learning (finite byte buffer, tail drop on arrival).  At each service
start the web queue is tried first with probability ``web_priority``
(1.0 = strict priority for web, 0.0 = strict priority for learning); the
losing class transmits only when the preferred queue is empty.
Non-preemptive: an ongoing transmission always finishes.

The same function body runs under numba or as plain Python depending on
the backend flag; it touches only scalars and preallocated arrays, and
all randomness (the contested-dequeue coins) is drawn outside, so both
modes produce bit-identical schedules.
"""

import numpy as np

from .backend import njit_or_plain

DROPPED = -2.0


@njit_or_plain(cache=True)
def run_link(times, cls, size_bytes, rate, web_priority, buffer_bytes, coins):
    """Serve packets sorted by arrival time; return per-packet departure
    times (DROPPED for learning packets that hit a full buffer).

    times/cls/size_bytes: per-packet arrays, time-sorted; cls 0 = web,
    1 = learning.  coins: uniforms consumed one per contested dequeue.
    The link drains completely (arrivals stop, service continues).
    """
    n = times.shape[0]
    dep = np.empty(n)
    webq = np.empty(n, dtype=np.int64)
    lrnq = np.empty(n, dtype=np.int64)
    wh = wt = lh = lt = 0
    buf = 0.0
    i = 0
    t = 0.0
    contested = 0
    while True:
        if wh == wt and lh == lt:
            if i >= n:
                break
            if times[i] > t:
                t = times[i]
        # admit every arrival up to the current instant, in time order
        while i < n and times[i] <= t:
            if cls[i] == 0:
                webq[wt] = i
                wt += 1
            else:
                if buf + size_bytes[i] <= buffer_bytes:
                    lrnq[lt] = i
                    lt += 1
                    buf += size_bytes[i]
                else:
                    dep[i] = DROPPED
            i += 1
        if wh == wt and lh == lt:
            continue
        if wh < wt and lh < lt:
            take_web = coins[contested] < web_priority
            contested += 1
        else:
            take_web = wh < wt
        if take_web:
            pkt = webq[wh]
            wh += 1
        else:
            pkt = lrnq[lh]
            lh += 1
            buf -= size_bytes[pkt]
        t = t + size_bytes[pkt] * 8.0 / rate
        dep[pkt] = t
    return dep
