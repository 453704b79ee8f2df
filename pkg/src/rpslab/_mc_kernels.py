"""Monte-Carlo sampling kernels for mixing-matrix moments.

Samples the block-0 mixing matrix W through the same keyed RNG the
message-level protocol uses (sample index plays the iteration role), and
accumulates W, W W^T and W A W^T together with per-sample traces.  The
numba and numpy paths draw bit-identical per-sample W matrices; the
derived products and their accumulation use different (but fixed)
float summation orders, so aggregate moments agree to ~1e-13 relative
rather than bitwise.  Each backend on its own is exactly reproducible.
"""

import numpy as np

from . import rng
from .backend import NUMBA_ENABLED

_CHUNK = 4096


def mc_moment_sums(n: int, p: float, samples: int, seed: int, fixed_owner: bool):
    """Return (sum_w, sum_ww, sum_waw, tr_w, tr_ww, tr_waw) over samples.

    sum_* are (n, n) accumulators; tr_* hold the per-sample traces used
    for standard-error estimates.
    """
    if NUMBA_ENABLED:
        return _mc_sums_numba(n, p, samples, seed, fixed_owner)
    return _mc_sums_numpy(n, p, samples, seed, fixed_owner)


def sample_block0_matrices(n: int, p: float, samples: int, seed: int, fixed_owner: bool):
    """Per-sample W stack (samples, n, n); used by consistency tests."""
    out = np.empty((samples, n, n))
    for chunk_w, lo in _iter_w_chunks(n, p, samples, seed, fixed_owner):
        out[lo : lo + chunk_w.shape[0]] = chunk_w
    return out


def _iter_w_chunks(n, p, samples, seed, fixed_owner):
    eye = np.eye(n)
    for lo in range(0, samples, _CHUNK):
        hi = min(lo + _CHUNK, samples)
        s = np.arange(lo, hi, dtype=np.uint64)
        count = hi - lo
        if fixed_owner:
            owner0 = np.zeros(count, dtype=np.int64)
        else:
            owner0 = rng.owner_permutations(s, n, seed)[:, 0]
        rows = np.arange(count)
        agents = np.arange(n, dtype=np.uint64)[None, :]
        ow = owner0.astype(np.uint64)[:, None]
        sc = s[:, None]
        members = ~(rng.uniform(seed, sc, rng.STAGE_RS, np.uint64(0), agents, ow) < p)
        take = ~(rng.uniform(seed, sc, rng.STAGE_AG, np.uint64(0), ow, agents) < p)
        members[rows, owner0] = True
        take[rows, owner0] = True
        mf = members.astype(np.float64)
        u = mf / mf.sum(axis=1, keepdims=True)
        w = np.where(take[:, None, :], u[:, :, None], eye[None, :, :])
        yield w, lo


def _mc_sums_numpy(n, p, samples, seed, fixed_owner):
    sum_w = np.zeros((n, n))
    sum_ww = np.zeros((n, n))
    sum_waw = np.zeros((n, n))
    tr_w = np.empty(samples)
    tr_ww = np.empty(samples)
    tr_waw = np.empty(samples)
    idx = np.arange(n)
    for w, lo in _iter_w_chunks(n, p, samples, seed, fixed_owner):
        hi = lo + w.shape[0]
        ww = w @ w.transpose(0, 2, 1)
        r = w.sum(axis=2)
        waw = r[:, :, None] * r[:, None, :] * (1.0 / n)
        sum_w += w.sum(axis=0)
        sum_ww += ww.sum(axis=0)
        sum_waw += waw.sum(axis=0)
        tr_w[lo:hi] = w[:, idx, idx].sum(axis=1)
        tr_ww[lo:hi] = ww[:, idx, idx].sum(axis=1)
        tr_waw[lo:hi] = waw[:, idx, idx].sum(axis=1)
    return sum_w, sum_ww, sum_waw, tr_w, tr_ww, tr_waw


if NUMBA_ENABLED:
    from numba import njit

    _U = np.uint64
    _GOLDEN = _U(0x9E3779B97F4A7C15)
    _MIX1 = _U(0xBF58476D1CE4E5B9)
    _MIX2 = _U(0x94D049BB133111EB)
    _INIT = _U(0x8A5CD789635D2DFF)
    _INV53 = 1.0 / 9007199254740992.0

    @njit(cache=True, inline="always")
    def _absorb(h, w):
        z = h ^ w
        z = z + _GOLDEN
        z ^= z >> _U(30)
        z = z * _MIX1
        z ^= z >> _U(27)
        z = z * _MIX2
        z ^= z >> _U(31)
        return z

    @njit(cache=True)
    def _mc_loop(n, p, samples, seed, fixed_owner):
        sum_w = np.zeros((n, n))
        sum_ww = np.zeros((n, n))
        sum_waw = np.zeros((n, n))
        tr_w = np.empty(samples)
        tr_ww = np.empty(samples)
        tr_waw = np.empty(samples)
        inv_n = 1.0 / n
        perm = np.empty(n, dtype=np.int64)
        members = np.empty(n, dtype=np.bool_)
        take = np.empty(n, dtype=np.bool_)
        u = np.empty(n)
        w = np.empty((n, n))
        r = np.empty(n)
        useed = _U(seed)
        for s in range(samples):
            us = _U(s)
            base = _absorb(_absorb(_INIT, useed), us)
            if fixed_owner:
                owner = 0
            else:
                for i in range(n):
                    perm[i] = i
                base_own = _absorb(base, _U(rng.STAGE_OWNER))
                # Fisher-Yates, draw k keyed (seed, s, STAGE_OWNER, k)
                for k in range(n - 1, 0, -1):
                    h = _absorb(base_own, _U(k))
                    uu = (h >> _U(11)) * _INV53
                    j = int(uu * (k + 1))
                    tmp = perm[k]
                    perm[k] = perm[j]
                    perm[j] = tmp
                owner = perm[0]
            base_rs = _absorb(_absorb(base, _U(rng.STAGE_RS)), _U(0))
            base_ag = _absorb(_absorb(base, _U(rng.STAGE_AG)), _U(0))
            uo = _U(owner)
            cnt = 0
            for i in range(n):
                h = _absorb(_absorb(base_rs, _U(i)), uo)
                members[i] = (i == owner) or not ((h >> _U(11)) * _INV53 < p)
                if members[i]:
                    cnt += 1
                h = _absorb(_absorb(base_ag, uo), _U(i))
                take[i] = (i == owner) or not ((h >> _U(11)) * _INV53 < p)
            inv_cnt = 1.0 / cnt
            for i in range(n):
                u[i] = members[i] * inv_cnt
            for k in range(n):
                if take[k]:
                    for i in range(n):
                        w[i, k] = u[i]
                else:
                    for i in range(n):
                        w[i, k] = 1.0 if i == k else 0.0
            tw = 0.0
            tww = 0.0
            twaw = 0.0
            for i in range(n):
                acc = 0.0
                for k in range(n):
                    acc += w[i, k]
                r[i] = acc
            for i in range(n):
                for k in range(n):
                    sum_w[i, k] += w[i, k]
                    ww_ik = 0.0
                    for m in range(n):
                        ww_ik += w[i, m] * w[k, m]
                    sum_ww[i, k] += ww_ik
                    waw_ik = r[i] * r[k] * inv_n
                    sum_waw[i, k] += waw_ik
                    if i == k:
                        tw += w[i, k]
                        tww += ww_ik
                        twaw += waw_ik
            tr_w[s] = tw
            tr_ww[s] = tww
            tr_waw[s] = twaw
        return sum_w, sum_ww, sum_waw, tr_w, tr_ww, tr_waw

    def _mc_sums_numba(n, p, samples, seed, fixed_owner):
        return _mc_loop(n, float(p), samples, seed, fixed_owner)

else:

    def _mc_sums_numba(n, p, samples, seed, fixed_owner):  # pragma: no cover
        raise RuntimeError("numba backend not active")
