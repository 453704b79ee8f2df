"""Synthetic objectives with exactly known constants.

The quadratic task keeps every quantity the convergence expressions need
in closed form: smoothness L, gradient-noise variance sigma^2, worker
heterogeneity zeta^2, the optimum x*, and the loss values f(0) and f*.
Worker i's loss is

    f_i(x) = 1/2 x^T A_i x - b_i^T x + b_i^T A_i^{-1} b_i,

an anchored paraboloid whose gradient is A_i x - b_i.  The default
construction shares one curvature A across workers and spreads only the
b_i, which makes zeta exact: grad f_i - grad f = b_mean - b_i is constant
in x.  (With differing curvatures the heterogeneity of quadratics is
unbounded over x, so the shared-A family is the one used for any
bound-checking; see notes.)  Gradient noise is additive isotropic
Gaussian, so sigma^2 = d * noise_sigma^2 exactly.
"""

from dataclasses import dataclass

import numpy as np

from . import rng


@dataclass(frozen=True)
class QuadraticTask:
    a_mats: np.ndarray  # (n, d, d) symmetric positive definite
    b_vecs: np.ndarray  # (n, d)
    noise_sigma: float
    lipschitz: float
    x_star: np.ndarray
    f_zero: float
    f_star: float
    zeta: float

    @property
    def n(self) -> int:
        return self.b_vecs.shape[0]

    @property
    def d(self) -> int:
        return self.b_vecs.shape[1]

    @property
    def sigma_sq(self) -> float:
        return self.d * self.noise_sigma**2

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma_sq))


@dataclass(frozen=True)
class GradientSample:
    worker: int
    value: np.ndarray


def make_quadratic(
    n: int,
    d: int,
    heterogeneity: float = 0.0,
    noise_sigma: float = 0.0,
    seed: int = 0,
    curvature_spread: float = 0.0,
) -> QuadraticTask:
    """Build an n-worker quadratic task with requested zeta and sigma.

    By default all workers share one curvature matrix with spectrum in
    [0.2, 1.0] (top eigenvalue pinned at 1 so L = 1); the linear targets
    b_i are a common direction plus zero-mean deviations scaled so that
    the exact zeta equals ``heterogeneity`` (except n = 1, where zeta is
    0 by definition).

    ``curvature_spread`` in [0, 1) additionally scales each worker's
    spectrum by its own factor in [1 - spread, 1 + spread] under its own
    rotation.  That breaks the affine cancellation that makes worker
    disagreement invisible to the average model, which is what the
    model- vs gradient-averaging comparison needs; the stored zeta is
    then the value at x = 0 (b-target spread) rather than a supremum,
    since quadratics with unequal curvature have unbounded gradient
    heterogeneity.  L, x*, f(0), f* remain exact either way.
    """
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 workers and d >= 1 coordinates")
    if heterogeneity < 0 or noise_sigma < 0:
        raise ValueError("heterogeneity and noise_sigma must be nonnegative")
    if not 0.0 <= curvature_spread < 1.0:
        raise ValueError("curvature_spread must be in [0, 1)")

    eigvals = np.linspace(1.0, 0.2, d)

    def rotation(tag):
        g = rng.normals((d, d), seed, rng.STAGE_TASK, tag)
        q, _ = np.linalg.qr(g)
        return q

    if curvature_spread == 0:
        if d == 1:
            a = np.array([[1.0]])
        else:
            q = rotation(0)
            a = (q * eigvals) @ q.T
            a = (a + a.T) / 2.0
        a_mats = np.broadcast_to(a, (n, d, d)).copy()
    else:
        factors = 1.0 + curvature_spread * np.linspace(-1.0, 1.0, n)
        a_mats = np.empty((n, d, d))
        for i in range(n):
            if d == 1:
                a_mats[i] = factors[i]
            else:
                q = rotation(10 + i)
                ai = (q * (factors[i] * eigvals)) @ q.T
                a_mats[i] = (ai + ai.T) / 2.0
    a_bar = a_mats.mean(axis=0)

    direction = rng.normals((d,), seed, rng.STAGE_TASK, 1)
    direction /= np.linalg.norm(direction)
    x_star = direction  # unit-norm optimum
    b_mean = a_bar @ x_star

    if n > 1 and heterogeneity > 0:
        dev = rng.normals((n, d), seed, rng.STAGE_TASK, 2)
        dev -= dev.mean(axis=0, keepdims=True)
        scale = heterogeneity / np.sqrt((dev**2).sum(axis=1).mean())
        dev *= scale
    else:
        dev = np.zeros((n, d))
    b_vecs = b_mean[None, :] + dev

    a_inv_b = np.stack([np.linalg.solve(a_mats[i], b_vecs[i]) for i in range(n)])
    c = np.einsum("id,id->i", b_vecs, a_inv_b)
    f_zero = float(c.mean())
    f_star = f_zero - 0.5 * float(b_mean @ x_star)
    lipschitz = float(max(np.linalg.eigvalsh(a_mats[i]).max() for i in range(n)))
    zeta = float(np.sqrt((dev**2).sum(axis=1).mean())) if n > 1 else 0.0

    return QuadraticTask(
        a_mats=a_mats,
        b_vecs=b_vecs,
        noise_sigma=float(noise_sigma),
        lipschitz=lipschitz,
        x_star=x_star,
        f_zero=f_zero,
        f_star=f_star,
        zeta=zeta,
    )


def worker_loss(task: QuadraticTask, x: np.ndarray, worker: int) -> float:
    a, b = task.a_mats[worker], task.b_vecs[worker]
    c = b @ np.linalg.solve(a, b)
    return float(0.5 * x @ (a @ x) - b @ x + c)


def loss(task: QuadraticTask, x: np.ndarray) -> float:
    """Global objective f(x) = mean_i f_i(x); note f(0) = task.f_zero."""
    quad = 0.5 * np.einsum("d,ide,e->", x, task.a_mats, x) / task.n
    lin = float(task.b_vecs.mean(axis=0) @ x)
    return float(quad - lin + task.f_zero)


def full_gradient(task: QuadraticTask, x: np.ndarray) -> np.ndarray:
    """grad f(x) = mean_i (A_i x - b_i)."""
    return np.einsum("ide,e->d", task.a_mats, x) / task.n - task.b_vecs.mean(axis=0)


def worker_gradient(task: QuadraticTask, x: np.ndarray, worker: int) -> np.ndarray:
    return task.a_mats[worker] @ x - task.b_vecs[worker]


def _key_words(key):
    return key if isinstance(key, tuple) else (key,)


def stochastic_gradient(task: QuadraticTask, x: np.ndarray, worker: int, key) -> GradientSample:
    """Worker gradient plus keyed Gaussian noise; total noise variance is
    sigma^2 = d * noise_sigma^2.  ``key`` is an int or tuple of ints
    naming the draw (e.g. (seed, iteration))."""
    if not 0 <= worker < task.n:
        raise ValueError("worker index out of range")
    noise = task.noise_sigma * rng.normals(
        (task.d,), *_key_words(key), rng.STAGE_GRAD, lane_offset=worker * task.d
    )
    return GradientSample(worker=worker, value=worker_gradient(task, x, worker) + noise)


def stochastic_gradient_matrix(task: QuadraticTask, x_mat: np.ndarray, key) -> np.ndarray:
    """Column i is ``stochastic_gradient(task, x_mat[:, i], i, key).value``
    (same keyed noise lanes, evaluated for all workers at once)."""
    grads = np.einsum("ide,ei->di", task.a_mats, x_mat) - task.b_vecs.T
    if task.noise_sigma > 0:
        noise = rng.normals((task.n * task.d,), *_key_words(key), rng.STAGE_GRAD).reshape(task.n, task.d).T
        grads = grads + task.noise_sigma * noise
    return grads


def grad_norm_sq_avg(task: QuadraticTask, x_mat: np.ndarray) -> float:
    """Squared norm of the worker-averaged gradient (1/n) sum_i grad
    f_i(x^(i))."""
    grads = np.einsum("ide,ei->di", task.a_mats, x_mat) - task.b_vecs.T
    return float(np.sum(grads.mean(axis=1) ** 2))


@dataclass(frozen=True)
class LogisticTask:
    """L2-regularized logistic regression on synthetic per-worker data.

    Qualitative companion to the quadratic family: its constants are
    estimates (smoothness from the data Gram matrix, optimum from a
    converged reference fit), so it stays out of any bound checking and
    exists for convergence-shape comparisons only.
    """

    features: np.ndarray  # (n, m, d)
    labels: np.ndarray  # (n, m) in {-1, +1}
    reg: float
    batch: int
    lipschitz: float
    x_star: np.ndarray
    f_star: float
    f_zero: float

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[2]


def _logistic_loss_terms(z):
    # log(1 + exp(-z)) without overflow
    return np.logaddexp(0.0, -z)


def logistic_loss(task: LogisticTask, x: np.ndarray) -> float:
    z = np.einsum("imd,d->im", task.features, x) * task.labels
    return float(_logistic_loss_terms(z).mean() + 0.5 * task.reg * x @ x)


def logistic_full_gradient(task: LogisticTask, x: np.ndarray) -> np.ndarray:
    z = np.einsum("imd,d->im", task.features, x) * task.labels
    coef = -task.labels / (1.0 + np.exp(z))
    n, m, _ = task.features.shape
    return np.einsum("im,imd->d", coef, task.features) / (n * m) + task.reg * x


def logistic_gradient_matrix(task: LogisticTask, x_mat: np.ndarray, key) -> np.ndarray:
    """Column i: minibatch gradient of worker i's local loss at x_mat[:, i].

    The batch indices are keyed draws, so runs are reproducible and
    workers sample independently.
    """
    n, m, d = task.features.shape
    out = np.empty((d, n))
    for i in range(n):
        u = rng.uniform(*_key_words(key), rng.STAGE_GRAD, i, np.arange(task.batch, dtype=np.uint64))
        rows = (u * m).astype(np.int64)
        feats = task.features[i, rows]
        labs = task.labels[i, rows]
        z = feats @ x_mat[:, i] * labs
        coef = -labs / (1.0 + np.exp(z))
        out[:, i] = coef @ feats / task.batch + task.reg * x_mat[:, i]
    return out


def logistic_worker_gradient(task: LogisticTask, x: np.ndarray, worker: int) -> np.ndarray:
    feats = task.features[worker]
    labs = task.labels[worker]
    z = feats @ x * labs
    coef = -labs / (1.0 + np.exp(z))
    return coef @ feats / feats.shape[0] + task.reg * x


def logistic_grad_norm_sq_avg(task: LogisticTask, x_mat: np.ndarray) -> float:
    grads = np.stack([logistic_worker_gradient(task, x_mat[:, i], i) for i in range(task.n)])
    return float(np.sum(grads.mean(axis=0) ** 2))


def make_logistic(
    n: int,
    d: int,
    samples_per_worker: int = 64,
    heterogeneity: float = 1.0,
    reg: float = 0.05,
    batch: int = 8,
    seed: int = 0,
) -> LogisticTask:
    """Synthetic binary classification with worker-specific class centers
    (*heterogeneity* scales how far the per-worker centers drift)."""
    if n < 1 or d < 1 or samples_per_worker < 1:
        raise ValueError("need positive worker, dimension and sample counts")
    center = rng.normals((d,), seed, rng.STAGE_TASK, 100)
    center /= np.linalg.norm(center)
    drift = rng.normals((n, d), seed, rng.STAGE_TASK, 101) * heterogeneity / np.sqrt(d)
    labels = np.where(rng.uniform(seed, rng.STAGE_TASK, 102, np.arange(n * samples_per_worker, dtype=np.uint64)) < 0.5, -1.0, 1.0).reshape(n, samples_per_worker)
    noise = rng.normals((n, samples_per_worker, d), seed, rng.STAGE_TASK, 103)
    features = labels[:, :, None] * (center + drift[:, None, :]) + noise

    gram_top = max(float(np.linalg.eigvalsh(features[i].T @ features[i] / samples_per_worker).max()) for i in range(n))
    lipschitz = gram_top / 4.0 + reg

    task = LogisticTask(
        features=features,
        labels=labels,
        reg=reg,
        batch=min(batch, samples_per_worker),
        lipschitz=lipschitz,
        x_star=np.zeros(d),
        f_star=0.0,
        f_zero=0.0,
    )
    # reference optimum by full-gradient descent (strongly convex, so
    # this converges fast; constants are estimates by design)
    x = np.zeros(d)
    step = 1.0 / lipschitz
    for _ in range(4000):
        g = logistic_full_gradient(task, x)
        x -= step * g
        if np.linalg.norm(g) < 1e-12:
            break
    return LogisticTask(
        features=features,
        labels=labels,
        reg=reg,
        batch=task.batch,
        lipschitz=lipschitz,
        x_star=x,
        f_star=logistic_loss(task, x),
        f_zero=logistic_loss(task, np.zeros(d)),
    )
