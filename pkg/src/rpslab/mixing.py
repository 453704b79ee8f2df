"""Moments of the random mixing matrix and their closed-form bounds.

For one block, the mixing matrix W is a random column-stochastic operator
determined by the owner draw and the per-message drop events.  Averaged
over the round's randomness, W, W W^T and W A W^T all collapse onto the
two-parameter family ``alpha * I + (1 - alpha) * A`` where A is the
all-1/n matrix.  This module computes those moments two ways:

* ``exact_moments`` enumerates every drop pattern of one block with the
  owner pinned to worker 0 (2^(2(n-1)) outcomes) and then averages over
  the owner position by permutation conjugation, which is exact because
  non-owners are exchangeable.
* ``mc_moments`` samples W through the same keyed RNG the protocol uses.

``alpha1`` names the fitted constant of E[W W^T], ``alpha2`` the one of
E[W A W^T] and ``alpha_ew`` the one of E[W]; ``beta = alpha1 - alpha2``
drives the consensus contraction.  ``t1``/``t2``/``t3`` and the
``*_bound`` functions evaluate the closed-form upper-bound expressions
for alpha1 and alpha2 as functions of (n, p) alone.
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ._mc_kernels import mc_moment_sums
from .protocol import OWNER_MODE_FIXED, OWNER_MODE_RANDOM

MAX_EXACT_N = 12


class NumericalPreconditionError(ValueError):
    """A closed-form expression was evaluated outside its domain."""


@dataclass(frozen=True)
class MomentEstimate:
    """Fitted structural constants of one (n, p) cell.

    ``residuals`` holds the Frobenius distance of each averaged moment
    from its fitted ``alpha * I + (1 - alpha) * A`` form; ``samples`` is
    the Monte-Carlo sample count or the string ``"exact"``.
    """

    n: int
    p: float
    mean_w: np.ndarray
    mean_wwT: np.ndarray
    mean_wAwT: np.ndarray
    samples: Union[int, str]
    alpha_ew: float
    alpha1: float
    alpha2: float
    residuals: dict
    alpha_stderr: Optional[dict] = None

    @property
    def beta(self) -> float:
        return self.alpha1 - self.alpha2

    @property
    def residual_max(self) -> float:
        return max(self.residuals.values())


@dataclass(frozen=True)
class AlphaBounds:
    """Closed-form bound values at one (n, p) cell."""

    n: int
    p: float
    t1: float
    t2: float
    t3: float
    alpha1_upper: float
    alpha2_upper: float

    @property
    def beta_upper(self) -> float:
        # beta = alpha1 - alpha2 <= alpha1 since alpha2 >= 0
        return self.alpha1_upper


def fit_alpha(m: np.ndarray):
    """Project a square matrix onto alpha*I + (1-alpha)*A.

    Returns (alpha, residual) with alpha = (n * mean(diag) - 1) / (n - 1)
    and residual the Frobenius norm of the leftover.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    n = m.shape[0]
    if n == 1:
        raise ValueError("fit is undefined for a 1x1 matrix")
    alpha = (n * np.diag(m).mean() - 1.0) / (n - 1.0)
    target = alpha * np.eye(n) + (1.0 - alpha) / n
    residual = float(np.linalg.norm(m - target))
    return float(alpha), residual


def _symmetrize_over_owner(m: np.ndarray) -> np.ndarray:
    """Average conjugations by the transpositions (0 o), o in range(n).

    Conditional on "worker o owns the block" the moment matrices are the
    owner-0 ones relabeled, and non-owners are exchangeable, so this
    equals the average over the uniform owner draw.
    """
    n = m.shape[0]
    out = np.zeros_like(m)
    for o in range(n):
        perm = np.arange(n)
        perm[0], perm[o] = o, 0
        out += m[np.ix_(perm, perm)]
    return out / n


def exact_moments(n: int, p: float) -> MomentEstimate:
    """Probability-weighted sums of W, W W^T and W A W^T over every drop
    pattern of one block.

    The owner is pinned to worker 0 during enumeration (2^(2(n-1))
    patterns: one collect bit and one broadcast bit per non-owner) and
    the uniform owner choice is restored afterwards by conjugation.
    """
    if n < 2:
        raise ValueError("need at least two workers")
    if n > MAX_EXACT_N:
        raise ValueError("enumeration too large")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")

    others = n - 1
    npat = 1 << others
    bits = (np.arange(npat)[:, None] >> np.arange(others)[None, :]) & 1
    # pattern weight: each set bit is a delivery (prob 1-p)
    weights = ((1.0 - p) ** bits * p ** (1 - bits)).prod(axis=1)

    membership = np.ones((npat, n))
    membership[:, 1:] = bits
    u_all = membership / membership.sum(axis=1, keepdims=True)
    chi_all = membership  # broadcast patterns have the same structure
    eye = np.eye(n)

    ew = np.zeros((n, n))
    eww = np.zeros((n, n))
    ewaw = np.zeros((n, n))
    for b in range(npat):
        u = u_all[b]
        w = np.where(chi_all[:, None, :] > 0, u[None, :, None], eye[None, :, :])
        ww = w @ w.transpose(0, 2, 1)
        r = w.sum(axis=2)
        waw = r[:, :, None] * r[:, None, :] / n
        ew += weights[b] * np.einsum("c,cik->ik", weights, w)
        eww += weights[b] * np.einsum("c,cik->ik", weights, ww)
        ewaw += weights[b] * np.einsum("c,cik->ik", weights, waw)

    ew = _symmetrize_over_owner(ew)
    eww = _symmetrize_over_owner(eww)
    ewaw = _symmetrize_over_owner(ewaw)
    a_ew, r_ew = fit_alpha(ew)
    a1, r1 = fit_alpha(eww)
    a2, r2 = fit_alpha(ewaw)
    return MomentEstimate(
        n=n,
        p=p,
        mean_w=ew,
        mean_wwT=eww,
        mean_wAwT=ewaw,
        samples="exact",
        alpha_ew=a_ew,
        alpha1=a1,
        alpha2=a2,
        residuals={"w": r_ew, "wwT": r1, "wAwT": r2},
    )


def mc_moments(
    n: int,
    p: float,
    owner_mode: str = OWNER_MODE_RANDOM,
    samples: int = 100_000,
    seed: int = 0,
) -> MomentEstimate:
    """Monte-Carlo estimate of the three moments from ``samples``
    independent block-0 rounds.

    With random owners the raw sample means already target the structural
    form; with fixed owners they target the owner-0 conditional moments,
    so the means are owner-symmetrized before fitting (the alpha
    estimates are trace functionals and are unaffected either way).
    Standard errors of the alphas come from the per-sample trace spread.
    """
    if n < 2:
        raise ValueError("need at least two workers")
    if samples < 1:
        raise ValueError("need at least one sample")
    if owner_mode not in (OWNER_MODE_FIXED, OWNER_MODE_RANDOM):
        raise ValueError(f"unknown owner mode: {owner_mode!r}")
    fixed = owner_mode == OWNER_MODE_FIXED
    sum_w, sum_ww, sum_waw, tr_w, tr_ww, tr_waw = mc_moment_sums(n, p, samples, seed, fixed)
    mean_w = sum_w / samples
    mean_ww = sum_ww / samples
    mean_waw = sum_waw / samples
    if fixed:
        mean_w = _symmetrize_over_owner(mean_w)
        mean_ww = _symmetrize_over_owner(mean_ww)
        mean_waw = _symmetrize_over_owner(mean_waw)

    def alpha_stat(tr):
        vals = (tr - 1.0) / (n - 1.0)
        se = vals.std(ddof=1) / np.sqrt(samples) if samples > 1 else np.inf
        return float(vals.mean()), float(se)

    a_ew, se_ew = alpha_stat(tr_w)
    a1, se1 = alpha_stat(tr_ww)
    a2, se2 = alpha_stat(tr_waw)
    return MomentEstimate(
        n=n,
        p=p,
        mean_w=mean_w,
        mean_wwT=mean_ww,
        mean_wAwT=mean_waw,
        samples=samples,
        alpha_ew=a_ew,
        alpha1=a1,
        alpha2=a2,
        residuals={
            "w": fit_alpha(mean_w)[1],
            "wwT": fit_alpha(mean_ww)[1],
            "wAwT": fit_alpha(mean_waw)[1],
        },
        alpha_stderr={"alpha_ew": se_ew, "alpha1": se1, "alpha2": se2},
    )


def _check_bound_domain(n: int, p: float):
    if n < 2:
        raise ValueError("need at least two workers")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    if p == 1.0:
        raise NumericalPreconditionError("bound singular at p=1")


def t1(n: int, p: float) -> float:
    """First tail-sum term of the diagonal second-moment bound."""
    _check_bound_domain(n, p)
    q = 1.0 - p
    num = 2.0 * (1.0 - p ** (n + 1) - (n + 1) * q * p**n - (n + 1) * n * q**2 * p ** (n - 1) / 2.0 - q ** (n + 1))
    return num / (n * (n + 1) * q**2)


def t2(n: int, p: float) -> float:
    """Second tail-sum term of the diagonal second-moment bound."""
    _check_bound_domain(n, p)
    q = 1.0 - p
    return (1.0 - p**n - n * q * p ** (n - 1) - q**n) / ((n - 1) * q)


def t3(n: int, p: float) -> float:
    """First-moment tail term entering the averaged-block bound."""
    _check_bound_domain(n, p)
    q = 1.0 - p
    return n / (n - 1) * (1.0 - p ** (n - 1) - q ** (n - 1)) + q ** (n - 1)


def alpha1_bound(n: int, p: float) -> float:
    """Closed-form upper bound for the E[W W^T] constant.

    Known defect: the expression simplifies away the multiplicity of its
    p^(n-1) term, and at n=2 it falls below the exact alpha1 for every
    p in (0, 1) (exact p(3-p)/2 vs p^2 here).  It does dominate on the
    tested grid for n >= 3.  Kept as stated; tests carry the
    counterexample.
    """
    _check_bound_domain(n, p)
    return (n * p + (1.0 - p) ** n + n * t1(n, p) + n * t2(n, p) - 1.0) / (n - 1)


def alpha2_bound(n: int, p: float) -> float:
    """Closed-form upper bound for the E[W A W^T] constant."""
    _check_bound_domain(n, p)
    q = 1.0 - p
    return (
        (p * (1.0 + 2.0 * t3(n, p)) + q ** (n - 1)) / n
        + 2.0 * p * q**n / n
        + p**n * q / n**2
        + t1(n, p)
        + t2(n, p)
    )


def alpha_bounds(n: int, p: float) -> AlphaBounds:
    return AlphaBounds(
        n=n,
        p=p,
        t1=t1(n, p),
        t2=t2(n, p),
        t3=t3(n, p),
        alpha1_upper=alpha1_bound(n, p),
        alpha2_upper=alpha2_bound(n, p),
    )


SWEEP_COLUMNS = (
    "n",
    "p",
    "mode",
    "samples",
    "alpha_ew",
    "alpha1",
    "alpha2",
    "beta",
    "alpha1_bound",
    "alpha2_bound",
    "residual_max",
)


def sweep_alphas(n_list, p_list, mode: str = "exact", samples: int = 100_000, seed: int = 0):
    """Alpha constants and bounds over an (n, p) grid, one dict per cell,
    ready for CSV emission in ``SWEEP_COLUMNS`` order."""
    if mode not in ("exact", "mc"):
        raise ValueError(f"unknown sweep mode: {mode!r}")
    rows = []
    for n in n_list:
        for p in p_list:
            if mode == "exact":
                est = exact_moments(n, p)
            else:
                est = mc_moments(n, p, samples=samples, seed=seed)
            bounds = alpha_bounds(n, p)
            rows.append(
                {
                    "n": n,
                    "p": p,
                    "mode": mode,
                    "samples": est.samples,
                    "alpha_ew": est.alpha_ew,
                    "alpha1": est.alpha1,
                    "alpha2": est.alpha2,
                    "beta": est.beta,
                    "alpha1_bound": bounds.alpha1_upper,
                    "alpha2_bound": bounds.alpha2_upper,
                    "residual_max": est.residual_max,
                }
            )
    return rows
