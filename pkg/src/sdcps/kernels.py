"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The numba path is selected by default when numba imports cleanly; set the
environment variable ``SDCPS_NO_NUMBA=1`` to force the numpy fallback.
Both implementations are kept importable (``*_numpy`` / ``*_numba``) so
``benchmarks/bench_kernels.py`` can time them against each other.

All kernels take the neighbor structure in CSR form: ``nbr_idx`` is the
concatenated neighbor lists, ``nbr_ptr[i]:nbr_ptr[i+1]`` slices node i's
neighbors.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("SDCPS_NO_NUMBA", "0").lower() in ("1", "true", "yes")

HAS_NUMBA = False
if not _DISABLED:
    try:
        import numba  # noqa: F401
        HAS_NUMBA = True
    except ImportError:
        HAS_NUMBA = False


def graph_to_csr(adj: dict[int, dict[int, float]], order: list[int] | None = None):
    """Flatten an adjacency dict into (nbr_idx, nbr_ptr, index_of) CSR arrays."""
    nodes = sorted(adj) if order is None else list(order)
    index_of = {v: k for k, v in enumerate(nodes)}
    ptr = [0]
    idx = []
    for v in nodes:
        for w in sorted(adj[v]):
            idx.append(index_of[w])
        ptr.append(len(idx))
    return (np.asarray(idx, dtype=np.int64),
            np.asarray(ptr, dtype=np.int64),
            index_of)


# --- pure-numpy implementations ---

def _segment_sums(values, nbr_ptr, n):
    # reduceat needs in-range segment starts; empty segments are masked out after
    if len(values) == 0:
        return np.zeros(n)
    starts = np.minimum(nbr_ptr[:-1], len(values) - 1)
    sums = np.add.reduceat(values, starts)
    sums[np.diff(nbr_ptr) == 0] = 0.0
    return sums


def consensus_rollout_numpy(x0, nbr_idx, nbr_ptr, eps, steps):
    """Iterate x_i += eps * sum_{j in N_i} (x_j - x_i) for `steps` steps."""
    x = np.asarray(x0, dtype=np.float64).copy()
    n = x.shape[0]
    deg = np.diff(nbr_ptr).astype(np.float64)
    for _ in range(steps):
        sums = _segment_sums(x[nbr_idx], nbr_ptr, n)
        x = x + eps * (sums - deg * x)
    return x


def sync_offsets_numpy(b0, nbr_idx, nbr_ptr, eta, rounds):
    """Clock-offset gossip: b_i += (eta/(|N_i|+1)) sum (b_j - b_i).

    The denominator counts the node itself, which makes each round a proper
    averaging (contraction) for any eta in (0, 1].
    """
    b = np.asarray(b0, dtype=np.float64).copy()
    n = b.shape[0]
    deg = np.diff(nbr_ptr).astype(np.float64)
    for _ in range(rounds):
        sums = _segment_sums(b[nbr_idx], nbr_ptr, n)
        b = b + (eta / (deg + 1.0)) * (sums - deg * b)
    return b


def closed_loop_norms_numpy(A, B, K, x0, steps):
    """Norm trajectory of x(k+1) = (A - B K) x(k)."""
    M = np.asarray(A, dtype=np.float64) - np.asarray(B, dtype=np.float64) @ np.asarray(K, dtype=np.float64)
    x = np.asarray(x0, dtype=np.float64).copy()
    out = np.empty(steps + 1)
    out[0] = np.linalg.norm(x)
    for k in range(steps):
        x = M @ x
        out[k + 1] = np.linalg.norm(x)
    return out


if HAS_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _consensus_rollout_jit(x0, nbr_idx, nbr_ptr, eps, steps):
        n = x0.shape[0]
        x = x0.copy()
        nxt = np.empty(n)
        for _ in range(steps):
            for i in range(n):
                acc = 0.0
                for p in range(nbr_ptr[i], nbr_ptr[i + 1]):
                    acc += x[nbr_idx[p]] - x[i]
                nxt[i] = x[i] + eps * acc
            x, nxt = nxt, x
        return x.copy()

    @njit(cache=True)
    def _sync_offsets_jit(b0, nbr_idx, nbr_ptr, eta, rounds):
        n = b0.shape[0]
        b = b0.copy()
        nxt = np.empty(n)
        for _ in range(rounds):
            for i in range(n):
                deg = nbr_ptr[i + 1] - nbr_ptr[i]
                acc = 0.0
                for p in range(nbr_ptr[i], nbr_ptr[i + 1]):
                    acc += b[nbr_idx[p]] - b[i]
                nxt[i] = b[i] + (eta / (deg + 1.0)) * acc
            b, nxt = nxt, b
        return b.copy()

    @njit(cache=True)
    def _closed_loop_norms_jit(M, x0, steps):
        n = x0.shape[0]
        x = x0.copy()
        out = np.empty(steps + 1)
        out[0] = np.sqrt(np.sum(x * x))
        for k in range(steps):
            y = M @ x
            x = y
            out[k + 1] = np.sqrt(np.sum(x * x))
        return out

    def consensus_rollout_numba(x0, nbr_idx, nbr_ptr, eps, steps):
        return _consensus_rollout_jit(np.asarray(x0, dtype=np.float64),
                                      nbr_idx, nbr_ptr, float(eps), steps)

    def sync_offsets_numba(b0, nbr_idx, nbr_ptr, eta, rounds):
        return _sync_offsets_jit(np.asarray(b0, dtype=np.float64),
                                 nbr_idx, nbr_ptr, float(eta), rounds)

    def closed_loop_norms_numba(A, B, K, x0, steps):
        M = np.asarray(A, dtype=np.float64) - np.asarray(B, dtype=np.float64) @ np.asarray(K, dtype=np.float64)
        return _closed_loop_norms_jit(M, np.asarray(x0, dtype=np.float64), steps)

    consensus_rollout = consensus_rollout_numba
    sync_offsets = sync_offsets_numba
    closed_loop_norms = closed_loop_norms_numba
else:
    consensus_rollout = consensus_rollout_numpy
    sync_offsets = sync_offsets_numpy
    closed_loop_norms = closed_loop_norms_numpy
