"""Message-level model of one lossy averaging round.

Worker ``i`` holds model column ``x[:, i]``.  A round partitions each
intermediate model into ``n`` contiguous blocks; block ``j`` has an owner
that gathers that block from everyone (block-collect), averages whatever
arrived, and broadcasts the average back (block-broadcast).  Every
non-self message is dropped independently with probability ``p``;
self-addressed deliveries are reliable, so the owner always has at least
its own contribution and always holds the averaged block afterwards.

Model matrices are plain ``(d, n)`` float arrays, column per worker.  The
mixing matrix of block ``j`` is the ``n x n`` column-stochastic operator
``W`` with ``x_next_block = v_block @ W``; ``extract_mixing_matrix``
builds it from a sampled outcome and ``rps_round`` is tested to match it
to round-off.
"""

from dataclasses import dataclass

import numpy as np

from . import rng

OWNER_MODE_FIXED = "fixed-identity"
OWNER_MODE_RANDOM = "random-permutation"


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous block ranges covering [0, d), one per owner slot."""

    boundaries: tuple

    @property
    def n_blocks(self) -> int:
        return len(self.boundaries)

    def slices(self):
        return [slice(a, b) for a, b in self.boundaries]


@dataclass(frozen=True)
class DropModel:
    """Per-message drop probability plus the seed of the keyed RNG.

    Each message owns the stream key (seed, iteration, stage, block,
    sender, receiver); distinct keys give independent draws and identical
    keys always replay the same draw.
    """

    p: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"drop probability must be in [0, 1], got {self.p}")


@dataclass(frozen=True)
class CommOutcome:
    """Record of every delivery event of one round.

    owners[j] is the worker averaging block j. rs_received[j, i] says
    worker i's block-j contribution reached the owner; ag_received[j, k]
    says worker k received the averaged block j.
    """

    owners: np.ndarray
    rs_received: np.ndarray
    ag_received: np.ndarray

    def __post_init__(self):
        n = self.owners.shape[0]
        if sorted(self.owners.tolist()) != list(range(n)):
            raise ValueError("owners must be a permutation of range(n)")
        for name, field in (("rs_received", self.rs_received), ("ag_received", self.ag_received)):
            if field.shape != (n, n) or field.dtype != np.bool_:
                raise ValueError(f"{name} must be a boolean (n, n) array")
        blocks = np.arange(n)
        if not (self.rs_received[blocks, self.owners].all() and self.ag_received[blocks, self.owners].all()):
            raise ValueError("self-delivery is reliable: owner must appear in both received sets")

    @property
    def n(self) -> int:
        return self.owners.shape[0]

    def rs_set(self, block: int) -> frozenset:
        return frozenset(np.flatnonzero(self.rs_received[block]).tolist())

    def ag_set(self, block: int) -> frozenset:
        return frozenset(np.flatnonzero(self.ag_received[block]).tolist())


def make_partition(d: int, n: int) -> BlockPartition:
    """Split d coordinates into n contiguous blocks of near-equal size.

    When n does not divide d the remainder goes to the lowest-indexed
    blocks, so sizes differ by at most one.
    """
    if n < 1:
        raise ValueError("need at least one block")
    if d < n:
        raise ValueError("more blocks than coordinates")
    base, rem = divmod(d, n)
    bounds = []
    start = 0
    for j in range(n):
        size = base + (1 if j < rem else 0)
        bounds.append((start, start + size))
        start += size
    return BlockPartition(tuple(bounds))


def local_sgd_step(x: np.ndarray, grads: np.ndarray, gamma: float) -> np.ndarray:
    """Columnwise v = x - gamma * g."""
    if x.shape != grads.shape:
        raise ValueError("model and gradient shapes differ")
    if not np.isfinite(grads).all():
        raise ValueError("non-finite gradient entry")
    return x - gamma * grads


def sample_comm_outcome(
    n: int,
    drop: DropModel,
    iteration: int,
    owner_mode: str = OWNER_MODE_RANDOM,
) -> CommOutcome:
    """Draw one round's owners and delivery events.

    Owners come from a fresh uniform permutation (or identity in fixed
    mode).  Every non-self collect send and broadcast receive is an
    independent Bernoulli(p) drop keyed by
    (seed, iteration, stage, block, sender, receiver).
    """
    if n < 2:
        raise ValueError("need at least two workers")
    if owner_mode == OWNER_MODE_FIXED:
        owners = np.arange(n, dtype=np.int64)
    elif owner_mode == OWNER_MODE_RANDOM:
        owners = rng.permutation(n, drop.seed, iteration, rng.STAGE_OWNER)
    else:
        raise ValueError(f"unknown owner mode: {owner_mode!r}")

    blocks = np.repeat(np.arange(n, dtype=np.uint64), n).reshape(n, n)
    agents = np.tile(np.arange(n, dtype=np.uint64), (n, 1))
    owner_grid = owners.astype(np.uint64)[:, None]

    # collect: sender i -> owner(j); broadcast: owner(j) -> receiver k
    rs_drop = rng.bernoulli(drop.p, drop.seed, iteration, rng.STAGE_RS, blocks, agents, owner_grid)
    ag_drop = rng.bernoulli(drop.p, drop.seed, iteration, rng.STAGE_AG, blocks, owner_grid, agents)
    rs_received = ~rs_drop
    ag_received = ~ag_drop
    idx = np.arange(n)
    rs_received[idx, owners] = True
    ag_received[idx, owners] = True
    return CommOutcome(owners=owners, rs_received=rs_received, ag_received=ag_received)


def rps_round(v: np.ndarray, part: BlockPartition, outcome: CommOutcome) -> np.ndarray:
    """Apply one averaging round to intermediate models ``v`` (d, n).

    For each block the owner averages the contributions that arrived;
    workers that received the broadcast adopt the average, the rest keep
    their own block.
    """
    n = v.shape[1]
    if part.n_blocks != outcome.n or outcome.n != n:
        raise ValueError("partition/outcome/model sizes disagree")
    out = v.copy()
    for j, sl in enumerate(part.slices()):
        members = outcome.rs_received[j]
        avg = v[sl][:, members].mean(axis=1)
        take = outcome.ag_received[j]
        out[sl, :] = np.where(take[None, :], avg[:, None], v[sl])
    return out


def extract_mixing_matrix(outcome: CommOutcome, block: int) -> np.ndarray:
    """Column-stochastic W of one block: column k is uniform over the
    owner's received set when k got the broadcast, else the basis vector
    e_k (k kept its own block)."""
    n = outcome.n
    if not 0 <= block < n:
        raise ValueError("block index out of range")
    members = outcome.rs_received[block].astype(np.float64)
    u = members / members.sum()
    take = outcome.ag_received[block]
    w = np.where(take[None, :], u[:, None], np.eye(n))
    return w


def gradient_averaging_round(
    x: np.ndarray,
    grads: np.ndarray,
    gamma: float,
    part: BlockPartition,
    outcome: CommOutcome,
) -> np.ndarray:
    """Baseline that ships gradient blocks through the identical lossy
    pattern: each worker steps with its possibly-partial averaged
    gradient instead of exchanging models."""
    if x.shape != grads.shape:
        raise ValueError("model and gradient shapes differ")
    if not np.isfinite(grads).all():
        raise ValueError("non-finite gradient entry")
    mixed = rps_round(grads, part, outcome)
    return x - gamma * mixed


def perfect_round(v: np.ndarray) -> np.ndarray:
    """Loss-free baseline: exact average broadcast to every worker."""
    mean = v.mean(axis=1, keepdims=True)
    return np.broadcast_to(mean, v.shape).copy()
