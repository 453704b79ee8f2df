"""End-to-end training runs and the closed-form expressions they are
checked against.

A run starts every worker at zero, alternates local SGD steps with the
configured communication rule, and records per-iteration metrics of the
pre-update state X_t for t = 1..T (the averages the guarantees talk
about), plus final-state metrics in the metadata.  Strategies:

* ``rps``                one lossy block-averaging round per iteration
* ``gradient-averaging`` the same lossy pattern applied to gradients
* ``perfect-network``    exact model averaging (loss-free reference)

``consensus_bound`` and ``convergence_bound`` evaluate the theoretical
ceilings for the summed consensus distance and the averaged gradient
norms; ``tuned_learning_rate`` is the step size rule that balances their
terms.  All three take the mixing constants (alpha2, beta) as inputs so
exact enumeration values or their closed-form upper bounds can be
plugged in interchangeably.
"""

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from . import objectives, protocol
from .mixing import NumericalPreconditionError, exact_moments

STRATEGY_RPS = "rps"
STRATEGY_GRAD_AVG = "gradient-averaging"
STRATEGY_PERFECT = "perfect-network"
STRATEGIES = (STRATEGY_RPS, STRATEGY_GRAD_AVG, STRATEGY_PERFECT)

GAMMA_AUTO = "auto"
_GAMMA_AUTO_ALIASES = (GAMMA_AUTO, "corollary1")

TRACE_COLUMNS = ("t", "loss", "grad_norm_sq_mean_model", "grad_norm_sq_avg", "consensus")


TASK_QUADRATIC = "quadratic"
TASK_LOGISTIC = "logistic"


@dataclass(frozen=True)
class TrainConfig:
    n: int
    d: int
    iterations: int
    p: float
    gamma: Union[float, str] = GAMMA_AUTO
    strategy: str = STRATEGY_RPS
    owner_mode: str = protocol.OWNER_MODE_RANDOM
    task_kind: str = TASK_QUADRATIC
    heterogeneity: float = 0.5
    noise_sigma: float = 0.125
    curvature_spread: float = 0.0
    task_seed: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must be in [0, 1]")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy: {self.strategy!r}")
        if self.task_kind not in (TASK_QUADRATIC, TASK_LOGISTIC):
            raise ValueError(f"unknown task kind: {self.task_kind!r}")
        if isinstance(self.gamma, str):
            if self.gamma not in _GAMMA_AUTO_ALIASES:
                raise ValueError(f"gamma must be a positive number or {GAMMA_AUTO!r}")
            if self.task_kind == TASK_LOGISTIC:
                # the tuned rule needs exact noise/heterogeneity constants,
                # which the logistic family only estimates
                raise ValueError("logistic runs need an explicit gamma")
        elif self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass
class Trace:
    """Per-iteration records (state before update t) plus run metadata."""

    t: np.ndarray
    loss: np.ndarray
    grad_norm_sq_mean_model: np.ndarray
    grad_norm_sq_avg: np.ndarray
    consensus: np.ndarray
    meta: dict = field(default_factory=dict)

    def rows(self):
        for k in range(self.t.shape[0]):
            yield (
                int(self.t[k]),
                float(self.loss[k]),
                float(self.grad_norm_sq_mean_model[k]),
                float(self.grad_norm_sq_avg[k]),
                float(self.consensus[k]),
            )


def consensus_distance(x_mat: np.ndarray) -> float:
    """sum_i ||x^(i) - x_mean||^2."""
    centered = x_mat - x_mat.mean(axis=1, keepdims=True)
    return float(np.sum(centered**2))


def _c1(gamma: float, lipschitz: float, beta: float) -> float:
    denom = (1.0 - math.sqrt(beta)) ** 2
    margin = 1.0 - 6.0 * lipschitz**2 * gamma**2 / denom
    if margin <= 0:
        raise NumericalPreconditionError("gamma too large for C1")
    return 1.0 / margin


def consensus_bound(gamma, n, sigma, zeta, lipschitz, iterations, beta) -> float:
    """Ceiling for the time-and-worker summed squared consensus distance."""
    c1 = _c1(gamma, lipschitz, beta)
    shrink = (1.0 - math.sqrt(beta)) ** 2
    return (2.0 * gamma**2 * n * sigma**2 * iterations * c1 + 6.0 * n * zeta**2 * iterations * c1) / shrink


def convergence_bound(gamma, n, sigma, zeta, lipschitz, f_zero, f_star, iterations, alpha2, beta) -> float:
    """Ceiling for (1/T) sum_t [||grad f(x_mean)||^2 + (1 - L gamma)
    ||averaged grad||^2]; five terms, all exactly evaluated."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    c1 = _c1(gamma, lipschitz, beta)
    shrink = (1.0 - math.sqrt(beta)) ** 2
    poly = 2.0 * alpha2 * lipschitz * gamma + lipschitz**2 * gamma**2 + 12.0 * alpha2 * lipschitz**3 * gamma**3
    return (
        2.0 * (f_zero - f_star) / (gamma * iterations)
        + gamma * lipschitz * sigma**2 / n
        + 4.0 * alpha2 * lipschitz * gamma * (sigma**2 + 3.0 * zeta**2)
        + poly * sigma**2 * c1 / shrink
        + 3.0 * poly * zeta**2 * c1 / shrink
    )


def tuned_learning_rate(lipschitz, sigma, zeta, alpha2, beta, n, iterations) -> float:
    """Step size balancing the bound's terms:
    gamma = (1 - sqrt(beta)) / (6L + 3(sigma+zeta) sqrt(alpha2 T) + sigma sqrt(T) / sqrt(n)).

    Also verifies the three side conditions the rule is designed to meet
    (1 - L gamma >= 0, C1 <= 2, 2 + 12 L^2 gamma^2 <= 4).
    """
    if iterations < 1:
        raise ValueError("need at least one iteration")
    if not 0.0 <= beta < 1.0:
        raise NumericalPreconditionError("beta must be in [0, 1)")
    if alpha2 < 0:
        raise ValueError("alpha2 must be nonnegative")
    gamma = (1.0 - math.sqrt(beta)) / (
        6.0 * lipschitz + 3.0 * (sigma + zeta) * math.sqrt(alpha2 * iterations) + sigma * math.sqrt(iterations) / math.sqrt(n)
    )
    assert 1.0 - lipschitz * gamma >= 0.0
    assert _c1(gamma, lipschitz, beta) <= 2.0
    assert 2.0 + 12.0 * lipschitz**2 * gamma**2 <= 4.0
    return gamma


@lru_cache(maxsize=None)
def mixing_constants(n: int, p: float):
    """(alpha2, beta) from exact enumeration; the degenerate single-worker
    and loss-free cases mix perfectly."""
    if n == 1 or p == 0.0:
        return 0.0, 0.0
    est = exact_moments(n, p)
    return est.alpha2, est.beta


def resolve_gamma(cfg: TrainConfig, task: objectives.QuadraticTask) -> float:
    if isinstance(cfg.gamma, str):
        alpha2, beta = mixing_constants(cfg.n, cfg.p)
        return tuned_learning_rate(
            task.lipschitz, task.sigma, task.zeta, alpha2, beta, cfg.n, cfg.iterations
        )
    return float(cfg.gamma)


def make_task(cfg: TrainConfig):
    if cfg.task_kind == TASK_LOGISTIC:
        return objectives.make_logistic(
            cfg.n, cfg.d, heterogeneity=cfg.heterogeneity, seed=cfg.task_seed
        )
    return objectives.make_quadratic(
        cfg.n,
        cfg.d,
        heterogeneity=cfg.heterogeneity,
        noise_sigma=cfg.noise_sigma,
        seed=cfg.task_seed,
        curvature_spread=cfg.curvature_spread,
    )


def _task_fns(task):
    """(loss, full_gradient, gradient_matrix, avg_grad_norm_sq) for either
    objective family."""
    if isinstance(task, objectives.LogisticTask):
        return (
            objectives.logistic_loss,
            objectives.logistic_full_gradient,
            objectives.logistic_gradient_matrix,
            objectives.logistic_grad_norm_sq_avg,
        )
    return (
        objectives.loss,
        objectives.full_gradient,
        objectives.stochastic_gradient_matrix,
        objectives.grad_norm_sq_avg,
    )


def run_training(cfg: TrainConfig, task: Optional[objectives.QuadraticTask] = None) -> Trace:
    """Run T iterations of local SGD plus the configured communication.

    Deterministic given (config, seed): gradients, owners and drops all
    come from keyed streams.  Divergence (non-finite loss) truncates the
    trace and sets meta["diverged"].
    """
    if task is None:
        task = make_task(cfg)
    if task.n != cfg.n or task.d != cfg.d:
        raise ValueError("task shape disagrees with config")
    loss_fn, full_grad_fn, grad_matrix_fn, avg_grad_fn = _task_fns(task)
    gamma = resolve_gamma(cfg, task)
    n, d, big_t = cfg.n, cfg.d, cfg.iterations
    part = protocol.make_partition(d, n) if n > 1 else None
    drop = protocol.DropModel(cfg.p, seed=cfg.seed)

    x = np.zeros((d, n))
    if cfg.strategy == STRATEGY_PERFECT and n > 1:
        # share the lossy-round code path so a p=0 lossy run and the
        # loss-free reference produce bit-identical traces
        full = np.ones((n, n), dtype=bool)
        outcome_full = protocol.CommOutcome(
            owners=np.arange(n, dtype=np.int64), rs_received=full, ag_received=full.copy()
        )
    cols = {name: np.empty(big_t) for name in TRACE_COLUMNS[1:]}
    diverged = False
    steps = 0
    for t in range(1, big_t + 1):
        x_bar = x.mean(axis=1)
        cur_loss = loss_fn(task, x_bar)
        if not np.isfinite(cur_loss):
            diverged = True
            break
        cols["loss"][t - 1] = cur_loss
        cols["grad_norm_sq_mean_model"][t - 1] = float(np.sum(full_grad_fn(task, x_bar) ** 2))
        cols["grad_norm_sq_avg"][t - 1] = avg_grad_fn(task, x)
        cols["consensus"][t - 1] = consensus_distance(x)

        grads = grad_matrix_fn(task, x, key=(cfg.seed, t))
        if cfg.strategy == STRATEGY_GRAD_AVG:
            if n == 1:
                x = x - gamma * grads
            else:
                outcome = protocol.sample_comm_outcome(n, drop, t, cfg.owner_mode)
                x = protocol.gradient_averaging_round(x, grads, gamma, part, outcome)
        else:
            v = protocol.local_sgd_step(x, grads, gamma)
            if n == 1:
                x = v
            elif cfg.strategy == STRATEGY_PERFECT:
                x = protocol.rps_round(v, part, outcome_full)
            else:
                outcome = protocol.sample_comm_outcome(n, drop, t, cfg.owner_mode)
                x = protocol.rps_round(v, part, outcome)
        steps = t

    for name in cols:
        cols[name] = cols[name][:steps]
    x_bar = x.mean(axis=1)
    with np.errstate(over="ignore"):  # divergent runs overflow to inf here
        meta = {
            "config": cfg,
            "gamma": gamma,
            "diverged": diverged,
            "final_loss": loss_fn(task, x_bar),
            "final_grad_norm_sq": float(np.sum(full_grad_fn(task, x_bar) ** 2)),
            "final_consensus": consensus_distance(x),
            "f_star": task.f_star,
            "f_zero": task.f_zero,
        }
    return Trace(
        t=np.arange(1, steps + 1),
        loss=cols["loss"],
        grad_norm_sq_mean_model=cols["grad_norm_sq_mean_model"],
        grad_norm_sq_avg=cols["grad_norm_sq_avg"],
        consensus=cols["consensus"],
        meta=meta,
    )


SUMMARY_COLUMNS = ("p", "strategy", "seeds", "gamma", "final_loss_mean", "final_loss_sd", "excess_mean")


def compare_strategies(base_cfg: TrainConfig, seeds, p_list=None, strategies=(STRATEGY_RPS, STRATEGY_GRAD_AVG)):
    """Mean and spread of the final loss per (p, strategy) over seeds.

    Returns CSV-ready dicts in SUMMARY_COLUMNS order; ``excess_mean`` is
    final loss minus f*.
    """
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("need at least two seeds")
    if p_list is None:
        p_list = [base_cfg.p]
    task = make_task(base_cfg)
    rows = []
    for p in p_list:
        for strategy in strategies:
            finals = []
            gamma = None
            for seed in seeds:
                cfg = replace(base_cfg, p=p, strategy=strategy, seed=seed)
                trace = run_training(cfg, task=task)
                finals.append(trace.meta["final_loss"])
                gamma = trace.meta["gamma"]
            finals = np.asarray(finals)
            rows.append(
                {
                    "p": p,
                    "strategy": strategy,
                    "seeds": len(seeds),
                    "gamma": gamma,
                    "final_loss_mean": float(finals.mean()),
                    "final_loss_sd": float(finals.std(ddof=1)),
                    "excess_mean": float(finals.mean() - task.f_star),
                }
            )
    return rows
