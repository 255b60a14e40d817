"""Pure-numpy implementations of the hot kernels.

Every function here mirrors one in ``_ckernels.pyx`` and produces
bit-identical results: the RNG is integer arithmetic, cell selection uses
the same double-precision expression, and per-replicate accumulations are
performed in the same order (first occurrence of each cell in the draw
sequence).
"""
from __future__ import annotations

import math

import numpy as np

NAME = "python"

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
WEYL = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_TWO_M53 = 2.0 ** -53


def mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def seed_mix(seed: int) -> int:
    return int(mix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0])


def _stream_keys(smix: int, reps: np.ndarray) -> np.ndarray:
    reps = np.asarray(reps, dtype=np.uint64)
    return mix64(np.uint64(smix) + (reps + np.uint64(1)) * GOLDEN)


def _raw(keys: np.ndarray, n: int) -> np.ndarray:
    k = np.arange(1, n + 1, dtype=np.uint64) * WEYL
    return mix64(keys[:, None] + k[None, :])


def uniforms(seed: int, rep: int, n: int) -> np.ndarray:
    """The first ``n`` uniforms in [0, 1) of replicate ``rep``'s stream."""
    keys = _stream_keys(seed_mix(seed), np.array([rep]))
    return (_raw(keys, n)[0] >> _S11).astype(np.float64) * _TWO_M53


def _cells_from_raw(u: np.ndarray, r: int, prob: np.ndarray, alias: np.ndarray) -> np.ndarray:
    x = (u >> _S11).astype(np.float64) * _TWO_M53 * float(r)
    c = x.astype(np.int64)
    np.minimum(c, r - 1, out=c)
    if prob.shape[0]:
        frac = x - c
        flip = frac >= prob[c]
        c = np.where(flip, alias[c], c)
    return c


def draw_cells(seed: int, rep: int, n: int, r: int, prob: np.ndarray, alias: np.ndarray) -> np.ndarray:
    """Cell indices (0-based) of the ``n`` trials of one replicate."""
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    keys = _stream_keys(seed_mix(seed), np.array([rep]))
    return _cells_from_raw(_raw(keys, n)[0], r, prob, alias)


def build_alias(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias table from scaled weights ``q = r * p``."""
    q = np.array(q, dtype=np.float64)
    r = q.shape[0]
    prob = np.ones(r, dtype=np.float64)
    alias = np.arange(r, dtype=np.int64)
    small = [i for i in range(r) if q[i] < 1.0]
    large = [i for i in range(r) if q[i] >= 1.0]
    qq = q.tolist()
    while small and large:
        s = small.pop()
        l = large.pop()
        prob[s] = qq[s]
        alias[s] = l
        qq[l] = (qq[l] + qq[s]) - 1.0
        if qq[l] < 1.0:
            small.append(l)
        else:
            large.append(l)
    return prob, alias


def compensated_sum(x: np.ndarray) -> float:
    return math.fsum(np.asarray(x, dtype=np.float64).tolist())


def simulate_block(
    seed: int,
    rep_start: int,
    nrep: int,
    n: int,
    r: int,
    prob: np.ndarray,
    alias: np.ndarray,
    wcell: np.ndarray,
    scell: np.ndarray,
    gk: np.ndarray,
    level: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-replicate weighted cell sum, draw-term sum and level-``level`` occupancy.

    Returns ``(wsum, ssum, occ)`` where ``wsum = sum_j wcell[j] * gk[N_j]``
    over occupied cells, ``ssum = sum_j N_j * scell[j]`` and ``occ`` counts
    cells with ``N_j == level``. Empty ``wcell`` means unit weights and
    ``ssum`` is then left at zero.
    """
    wsum = np.zeros(nrep, dtype=np.float64)
    ssum = np.zeros(nrep, dtype=np.float64)
    occ = np.zeros(nrep, dtype=np.int64)
    if nrep == 0 or n == 0:
        return wsum, ssum, occ
    keys = _stream_keys(seed_mix(seed), np.arange(rep_start, rep_start + nrep, dtype=np.uint64))
    cells = _cells_from_raw(_raw(keys, n), r, prob, alias)
    flat = (np.arange(nrep, dtype=np.int64)[:, None] * r + cells).ravel()
    order = np.argsort(flat, kind="stable")
    sk = flat[order]
    starts = np.flatnonzero(np.concatenate(([True], sk[1:] != sk[:-1])))
    counts = np.diff(np.append(starts, sk.shape[0]))
    # Stable sort: order[start] is the first draw position of that cell.
    by_first = np.argsort(order[starts], kind="stable")
    key = sk[starts][by_first]
    cnt = counts[by_first]
    row = key // r
    cell = key % r
    if wcell.shape[0]:
        wsum = np.bincount(row, weights=wcell[cell] * gk[cnt], minlength=nrep)
        ssum = np.bincount(row, weights=cnt.astype(np.float64) * scell[cell], minlength=nrep)
    else:
        wsum = np.bincount(row, weights=gk[cnt], minlength=nrep)
    occ = np.bincount(row, weights=(cnt == level).astype(np.float64), minlength=nrep).astype(np.int64)
    return wsum, ssum, occ
