"""Benchmark the two hot kernels under both backends.

The backend is fixed at import time by RPSLAB_NUMBA, so this script
re-launches itself in child processes (one per backend), times the
mixing-matrix Monte-Carlo sampler and the link scheduler, and checks
that both backends produce the same numbers.

Usage: python benchmarks/bench_kernels.py
"""

import json
import os
import subprocess
import sys
import time


def child() -> None:
    from rpslab import mixing, netsim
    from rpslab.backend import backend_name

    out = {"backend": backend_name()}

    # warm-up triggers JIT compilation so timings measure steady state
    mixing.mc_moments(4, 0.1, samples=1000, seed=0)
    start = time.perf_counter()
    est = mixing.mc_moments(8, 0.3, samples=200_000, seed=1)
    out["mc_seconds"] = time.perf_counter() - start
    out["mc_alpha2"] = est.alpha2

    topo = netsim.Topology()
    traffic = netsim.TrafficModel(web_lambda=5000.0)
    prio = netsim.PriorityConfig(web_priority=0.95)
    netsim.run_colocation_sim(topo, traffic, prio, duration=0.02, seed=0)
    start = time.perf_counter()
    rep = netsim.run_colocation_sim(topo, traffic, prio, duration=0.5, seed=1)
    out["netsim_seconds"] = time.perf_counter() - start
    out["netsim_drop_rate"] = rep.learning_drop_rate
    out["netsim_web_mean_ms"] = rep.web_mean_ms

    print(json.dumps(out))


def main() -> None:
    results = {}
    for flag in ("1", "0"):
        env = dict(os.environ, RPSLAB_NUMBA=flag, RPSLAB_BENCH_CHILD="1")
        proc = subprocess.run([sys.executable, __file__], env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            sys.stderr.write(proc.stderr)
            raise SystemExit(proc.returncode)
        data = json.loads(proc.stdout.strip().splitlines()[-1])
        results[data["backend"]] = data

    nb, np_ = results["numba"], results["numpy"]
    print(f"{'kernel':<28}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for key, label in (("mc_seconds", "mixing MC (200k samples)"), ("netsim_seconds", "link sim (0.5 s traffic)")):
        ratio = np_[key] / nb[key]
        print(f"{label:<28}{nb[key]:>11.3f}s{np_[key]:>11.3f}s{ratio:>9.1f}x")
    drift = abs(nb["mc_alpha2"] - np_["mc_alpha2"])
    print(f"\nalpha2 agreement across backends: |diff| = {drift:.2e}")
    same = nb["netsim_drop_rate"] == np_["netsim_drop_rate"] and nb["netsim_web_mean_ms"] == np_["netsim_web_mean_ms"]
    print(f"link sim reports identical across backends: {same}")
    if drift > 1e-12 or not same:
        raise SystemExit("backend outputs disagree")


if __name__ == "__main__":
    if os.environ.get("RPSLAB_BENCH_CHILD"):
        child()
    else:
        main()
