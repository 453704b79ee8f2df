"""Command-line entry point.

Four subcommands: ``mixing`` (alpha constants over an (n, p) grid),
``train`` (single trace or strategy comparison), ``bounds`` (closed-form
expressions at one parameter point), ``netsim`` (co-location sweeps).
Every CSV starts with ``#``-comment header lines carrying the tool
version, the active kernel backend, the resolved configuration and the
seed; re-running with that configuration reproduces the file bytes
(modulo the version line).

Parameters may come from a flat ``key=value`` config file (``--config``,
``#`` comments allowed); explicit command-line flags override file
values, and unknown keys are rejected.  Exit codes: 0 success, 2 config
error, 3 numerical precondition violated.
"""

import argparse
import sys
from pathlib import Path

from . import __version__, mixing, netsim, trainer
from .backend import backend_name
from .mixing import NumericalPreconditionError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


def _parse_scalar_list(text, cast):
    """Parse '4', '2..8', or '0,0.05,0.1' into a list."""
    text = str(text).strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1)) if cast is int else _fail_range(text)
    out = []
    for part in text.split(","):
        part = part.strip()
        if part:
            out.append(cast(part))
    if not out:
        raise ConfigError(f"empty value list: {text!r}")
    return out


def _fail_range(text):
    raise ConfigError(f"range syntax is only for integers: {text!r}")


def _gamma_value(text):
    text = str(text).strip()
    if text in ("auto", "corollary1"):
        return trainer.GAMMA_AUTO
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"gamma must be a number or 'auto': {text!r}") from exc


def read_config_file(path) -> dict:
    """Flat UTF-8 key=value file; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _merge_config(args, parser_defaults, allowed_keys):
    """defaults < config file < explicit flags; unknown file keys rejected."""
    merged = dict(parser_defaults)
    if args.config:
        file_vals = read_config_file(args.config)
        unknown = set(file_vals) - set(allowed_keys)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_vals)
    for key in allowed_keys:
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            merged[key] = cli_val
    missing = [k for k, v in merged.items() if v is None]
    if missing:
        raise ConfigError(f"missing required parameters: {sorted(missing)}")
    return merged


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, columns, rows, config: dict, seed):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# rpslab {__version__}", f"# backend={backend_name()}"]
    for key in sorted(config):
        if key in ("out", "config"):  # file locations are not experiment identity
            continue
        lines.append(f"# {key}={config[key]}")
    lines.append(f"# seed={seed}")
    lines.append(",".join(columns))
    for row in rows:
        if isinstance(row, dict):
            lines.append(",".join(_fmt(row[c]) for c in columns))
        else:
            lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------- mixing

_MIXING_DEFAULTS = {"n": "4", "p": "0.1", "mode": "exact", "samples": "100000", "seed": "0", "out": "out"}


def cmd_mixing(args) -> int:
    cfg = _merge_config(args, _MIXING_DEFAULTS, _MIXING_DEFAULTS.keys())
    n_list = _parse_scalar_list(cfg["n"], int)
    p_list = _parse_scalar_list(cfg["p"], float)
    mode = str(cfg["mode"])
    if mode not in ("exact", "mc"):
        raise ConfigError(f"mode must be exact or mc, got {mode!r}")
    samples = int(cfg["samples"])
    seed = int(cfg["seed"])
    rows = mixing.sweep_alphas(n_list, p_list, mode=mode, samples=samples, seed=seed)
    path = write_csv(Path(cfg["out"]) / "alphas.csv", mixing.SWEEP_COLUMNS, rows, cfg, seed)
    print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


# ----------------------------------------------------------------- train

_TRAIN_DEFAULTS = {
    "strategy": "rps",
    "n": "8",
    "d": "16",
    "iterations": "2000",
    "p": "0.1",
    "gamma": "auto",
    "owner_mode": "random-permutation",
    "task": "quadratic",
    "heterogeneity": "0.5",
    "noise_sigma": "0.125",
    "curvature_spread": "0.0",
    "task_seed": "0",
    "seed": "0",
    "seeds": "0..19",
    "out": "out",
}


def _train_config(cfg, strategy, p, seed) -> trainer.TrainConfig:
    return trainer.TrainConfig(
        n=int(cfg["n"]),
        d=int(cfg["d"]),
        iterations=int(cfg["iterations"]),
        p=p,
        gamma=_gamma_value(cfg["gamma"]),
        strategy=strategy,
        owner_mode=str(cfg["owner_mode"]),
        task_kind=str(cfg["task"]),
        heterogeneity=float(cfg["heterogeneity"]),
        noise_sigma=float(cfg["noise_sigma"]),
        curvature_spread=float(cfg["curvature_spread"]),
        task_seed=int(cfg["task_seed"]),
        seed=seed,
    )


def cmd_train(args) -> int:
    cfg = _merge_config(args, _TRAIN_DEFAULTS, _TRAIN_DEFAULTS.keys())
    strategy = str(cfg["strategy"])
    p_list = _parse_scalar_list(cfg["p"], float)
    out_dir = Path(cfg["out"])
    if strategy == "both":
        seeds = _parse_scalar_list(cfg["seeds"], int)
        base = _train_config(cfg, trainer.STRATEGY_RPS, p_list[0], seeds[0])
        rows = trainer.compare_strategies(base, seeds, p_list=p_list)
        path = write_csv(out_dir / "compare.csv", trainer.SUMMARY_COLUMNS, rows, cfg, cfg["seeds"])
        print(f"wrote {path} ({len(rows)} rows)")
        return EXIT_OK
    if strategy not in trainer.STRATEGIES:
        raise ConfigError(f"strategy must be one of {trainer.STRATEGIES + ('both',)}")
    if len(p_list) != 1:
        raise ConfigError("single-trace runs take a single p")
    seed = int(cfg["seed"])
    run_cfg = _train_config(cfg, strategy, p_list[0], seed)
    trace = trainer.run_training(run_cfg)
    meta_cfg = dict(cfg)
    meta_cfg["gamma_resolved"] = repr(trace.meta["gamma"])
    meta_cfg["final_loss"] = repr(trace.meta["final_loss"])
    meta_cfg["diverged"] = trace.meta["diverged"]
    path = write_csv(out_dir / "trace.csv", trainer.TRACE_COLUMNS, trace.rows(), meta_cfg, seed)
    print(f"wrote {path} ({trace.t.shape[0]} rows)")
    return EXIT_OK


# ---------------------------------------------------------------- bounds

_BOUNDS_DEFAULTS = {
    "n": "8",
    "p": "0.1",
    "gamma": "auto",
    "sigma": "1.0",
    "zeta": "0.5",
    "lipschitz": "1.0",
    "f_zero": "1.0",
    "f_star": "0.0",
    "iterations": "1000",
    "out": "",
}

BOUNDS_COLUMNS = (
    "n",
    "p",
    "t1",
    "t2",
    "t3",
    "alpha1_bound",
    "alpha2_bound",
    "alpha1_exact",
    "alpha2_exact",
    "beta_exact",
    "gamma",
    "convergence_bound",
    "consensus_bound",
)


def cmd_bounds(args) -> int:
    cfg = _merge_config(args, _BOUNDS_DEFAULTS, _BOUNDS_DEFAULTS.keys())
    n = int(cfg["n"])
    p = float(cfg["p"])
    sigma = float(cfg["sigma"])
    zeta = float(cfg["zeta"])
    lipschitz = float(cfg["lipschitz"])
    f_zero = float(cfg["f_zero"])
    f_star = float(cfg["f_star"])
    iterations = int(cfg["iterations"])
    bounds = mixing.alpha_bounds(n, p)
    est = mixing.exact_moments(n, p)
    gamma = _gamma_value(cfg["gamma"])
    if isinstance(gamma, str):
        gamma = trainer.tuned_learning_rate(lipschitz, sigma, zeta, est.alpha2, est.beta, n, iterations)
    row = {
        "n": n,
        "p": p,
        "t1": bounds.t1,
        "t2": bounds.t2,
        "t3": bounds.t3,
        "alpha1_bound": bounds.alpha1_upper,
        "alpha2_bound": bounds.alpha2_upper,
        "alpha1_exact": est.alpha1,
        "alpha2_exact": est.alpha2,
        "beta_exact": est.beta,
        "gamma": gamma,
        "convergence_bound": trainer.convergence_bound(
            gamma, n, sigma, zeta, lipschitz, f_zero, f_star, iterations, est.alpha2, est.beta
        ),
        "consensus_bound": trainer.consensus_bound(gamma, n, sigma, zeta, lipschitz, iterations, est.beta),
    }
    for key in BOUNDS_COLUMNS:
        print(f"{key} = {_fmt(row[key])}")
    if cfg["out"]:
        path = write_csv(Path(cfg["out"]) / "bounds.csv", BOUNDS_COLUMNS, [row], cfg, 0)
        print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------- netsim

_NETSIM_DEFAULTS = {
    "mode": "speedup",
    "servers": "16",
    "link_rate": "1e9",
    "web_lambda": "2000,5000,10000",
    "msg_bytes": "100000",
    "learning_load": "2.4e9",
    "priorities": "0.0,0.85,0.9,0.93,0.95,0.97,1.0",
    "buffer_bytes": "12000",
    "duration": "1.0",
    "seeds": "0,1",
    "targets_ms": "2,5,10",
    "lambda_grid": "1000,2000,4000,6000,8000,10000",
    "out": "out",
}


def cmd_netsim(args) -> int:
    cfg = _merge_config(args, _NETSIM_DEFAULTS, _NETSIM_DEFAULTS.keys())
    topo = netsim.Topology(server_count=int(cfg["servers"]), link_rate=float(cfg["link_rate"]))
    seeds = _parse_scalar_list(cfg["seeds"], int)
    priorities = [
        netsim.PriorityConfig(web_priority=q, learning_buffer_bytes=float(cfg["buffer_bytes"]))
        for q in _parse_scalar_list(cfg["priorities"], float)
    ]
    duration = float(cfg["duration"])
    mode = str(cfg["mode"])
    out_dir = Path(cfg["out"])
    if mode == "speedup":
        rows = []
        for lam in _parse_scalar_list(cfg["web_lambda"], float):
            traffic = netsim.TrafficModel(
                web_lambda=lam,
                web_msg_bytes=int(cfg["msg_bytes"]),
                learning_load_bps=float(cfg["learning_load"]),
            )
            rows.extend(netsim.sweep_priority(topo, traffic, priorities, duration, seeds))
        path = write_csv(out_dir / "colocation_speedup.csv", netsim.SWEEP_COLUMNS, rows, cfg, cfg["seeds"])
        print(f"wrote {path} ({len(rows)} rows)")
        return EXIT_OK
    if mode != "cost":
        raise ConfigError(f"mode must be speedup or cost, got {mode!r}")
    lam_grid = _parse_scalar_list(cfg["lambda_grid"], float)
    traffic = netsim.TrafficModel(
        web_lambda=lam_grid[0],
        web_msg_bytes=int(cfg["msg_bytes"]),
        learning_load_bps=float(cfg["learning_load"]),
    )
    for target in _parse_scalar_list(cfg["targets_ms"], float):
        rows = []
        for prio in priorities:
            lam, drop, mean_ms, p99_ms = netsim.sustainable_lambda(
                topo, traffic, prio, target, lam_grid, duration, seeds
            )
            rows.append(
                {
                    "drop_rate": drop,
                    "lambda": lam,
                    "web_mean_ms": mean_ms,
                    "web_p99_ms": p99_ms,
                    "speedup": "",
                    "sustainable_lambda": lam,
                }
            )
        meta = dict(cfg)
        meta["target_ms"] = target
        path = write_csv(
            out_dir / f"colocation_cost_target{target:g}ms.csv", netsim.SWEEP_COLUMNS, rows, meta, cfg["seeds"]
        )
        print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


# ------------------------------------------------------------------ main


def _add_common(sub):
    sub.add_argument("--config", help="flat key=value parameter file")
    sub.add_argument("--out", help="output directory for CSV files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rpslab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rpslab {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p_mix = subs.add_parser("mixing", help="mixing-matrix alpha constants over an (n, p) grid")
    _add_common(p_mix)
    p_mix.add_argument("--n", help="worker counts: 4, 2..8 or 2,4,8")
    p_mix.add_argument("--p", help="drop rates: 0.1 or 0,0.05,0.1")
    p_mix.add_argument("--mode", choices=["exact", "mc"])
    p_mix.add_argument("--samples", type=int)
    p_mix.add_argument("--seed", type=int)
    p_mix.set_defaults(func=cmd_mixing)

    p_train = subs.add_parser("train", help="run training, or compare strategies with --strategy both")
    _add_common(p_train)
    p_train.add_argument("--strategy", choices=list(trainer.STRATEGIES) + ["both"])
    p_train.add_argument("--n", type=int)
    p_train.add_argument("--d", type=int)
    p_train.add_argument("--iterations", type=int)
    p_train.add_argument("--p", help="drop rate (list allowed with --strategy both)")
    p_train.add_argument("--gamma", help="step size or 'auto' for the tuned rule")
    p_train.add_argument("--owner-mode", dest="owner_mode", choices=["random-permutation", "fixed-identity"])
    p_train.add_argument("--task", choices=[trainer.TASK_QUADRATIC, trainer.TASK_LOGISTIC])
    p_train.add_argument("--heterogeneity", type=float)
    p_train.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p_train.add_argument("--curvature-spread", dest="curvature_spread", type=float)
    p_train.add_argument("--task-seed", dest="task_seed", type=int)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--seeds", help="seed list for --strategy both, e.g. 0..19")
    p_train.set_defaults(func=cmd_train)

    p_bounds = subs.add_parser("bounds", help="closed-form constants and ceilings at one (n, p) point")
    _add_common(p_bounds)
    p_bounds.add_argument("--n", type=int)
    p_bounds.add_argument("--p", type=float)
    p_bounds.add_argument("--gamma")
    p_bounds.add_argument("--sigma", type=float)
    p_bounds.add_argument("--zeta", type=float)
    p_bounds.add_argument("--lipschitz", type=float)
    p_bounds.add_argument("--f-zero", dest="f_zero", type=float)
    p_bounds.add_argument("--f-star", dest="f_star", type=float)
    p_bounds.add_argument("--iterations", type=int)
    p_bounds.set_defaults(func=cmd_bounds)

    p_net = subs.add_parser("netsim", help="co-location packet simulation sweeps")
    _add_common(p_net)
    p_net.add_argument("--mode", choices=["speedup", "cost"])
    p_net.add_argument("--servers", type=int)
    p_net.add_argument("--link-rate", dest="link_rate", type=float)
    p_net.add_argument("--web-lambda", dest="web_lambda", help="message rates: 5000 or 2000,5000,10000")
    p_net.add_argument("--msg-bytes", dest="msg_bytes", type=int)
    p_net.add_argument("--learning-load", dest="learning_load", type=float)
    p_net.add_argument("--priorities", help="web priority dial values, e.g. 0,0.9,1")
    p_net.add_argument("--buffer-bytes", dest="buffer_bytes", type=float)
    p_net.add_argument("--duration", type=float)
    p_net.add_argument("--seeds", help="seed list, e.g. 0,1")
    p_net.add_argument("--targets-ms", dest="targets_ms", help="completion targets for cost mode")
    p_net.add_argument("--lambda-grid", dest="lambda_grid", help="candidate rates for cost mode")
    p_net.set_defaults(func=cmd_netsim)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalPreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
