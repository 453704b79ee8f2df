"""Keyed counter-based random streams.

Every random draw in the package is a pure function of a tuple of 64-bit
words, e.g. ``(seed, iteration, stage, block, sender, receiver)``.  The
words are absorbed one at a time into a splitmix64-style finalizer.  This
gives reproducibility without shared-state sequencing: distinct keys yield
independent-looking draws, the same key always yields the same draw, and
nothing depends on call order, so parallel parameter sweeps cannot
perturb each other.

Two equivalent implementations exist: the vectorized numpy one here and
scalar uint64 arithmetic replicated inside the numba kernels.  The draws
themselves are bit-identical across the two (tests assert this); only
downstream float accumulations may differ at round-off between backends.
"""

import numpy as np

# Stage tags keep draw families on disjoint streams.
STAGE_RS = 1
STAGE_AG = 2
STAGE_OWNER = 3
STAGE_GRAD = 4
STAGE_TASK = 5
STAGE_NET_ARRIVAL = 6
STAGE_NET_DEQUEUE = 7

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INIT = np.uint64(0x8A5CD789635D2DFF)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def _finalize(z):
    """splitmix64 output function (works on uint64 scalars and arrays)."""
    z = z + _GOLDEN
    z ^= z >> np.uint64(30)
    z = z * _MIX1
    z ^= z >> np.uint64(27)
    z = z * _MIX2
    z ^= z >> np.uint64(31)
    return z


def hash_words(*words):
    """Absorb integer words (scalars or broadcastable uint64 arrays) into a
    single uint64 hash.  uint64 wraparound is the intended arithmetic."""
    with np.errstate(over="ignore"):
        h = _INIT
        for w in words:
            w = np.asarray(w).astype(np.uint64, copy=False)
            h = _finalize(h ^ w)
    return h


def uniform(*words):
    """Deterministic uniform draw in [0, 1) keyed by the given words."""
    h = hash_words(*words)
    return (h >> np.uint64(11)).astype(np.float64) * _INV53


def bernoulli(p: float, *words):
    """Keyed Bernoulli(p) draw(s); True with probability ``p``."""
    return uniform(*words) < p


def normals(shape, *words, lane_offset: int = 0):
    """Keyed standard-normal draws via Box-Muller.

    Lane indices (offset by ``lane_offset``) are appended to the key so a
    single key can produce a whole array; the same (key, lane) pair always
    yields the same value regardless of the requested shape.
    """
    count = int(np.prod(shape)) if shape else 1
    lanes = np.arange(lane_offset, lane_offset + count, dtype=np.uint64)
    u1 = (hash_words(*words, lanes, np.uint64(0)) >> np.uint64(11)).astype(np.float64)
    u2 = (hash_words(*words, lanes, np.uint64(1)) >> np.uint64(11)).astype(np.float64)
    u1 = (u1 + 1.0) * _INV53  # (0, 1]: keeps log finite
    u2 = u2 * _INV53
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return z.reshape(shape)


def permutation(n: int, *words) -> np.ndarray:
    """Uniform random permutation of range(n) keyed by the given words
    (Fisher-Yates; draw k uses key ``words + (k,)``)."""
    perm = np.arange(n, dtype=np.int64)
    for k in range(n - 1, 0, -1):
        u = float(uniform(*words, np.uint64(k)))
        j = int(u * (k + 1))
        perm[k], perm[j] = perm[j], perm[k]
    return perm


def owner_permutations(samples: np.ndarray, n: int, seed) -> np.ndarray:
    """Vectorized owner draw: row ``s`` equals
    ``permutation(n, seed, samples[s], STAGE_OWNER)``."""
    samples = np.asarray(samples, dtype=np.uint64)
    count = samples.shape[0]
    perms = np.tile(np.arange(n, dtype=np.int64), (count, 1))
    rows = np.arange(count)
    for k in range(n - 1, 0, -1):
        u = uniform(seed, samples, STAGE_OWNER, np.uint64(k))
        j = (u * (k + 1)).astype(np.int64)
        tmp = perms[rows, k].copy()
        perms[rows, k] = perms[rows, j]
        perms[rows, j] = tmp
    return perms
