"""Bit-parallel witness-search kernels.

A family of K member sets over n inputs is packed into per-input
bitsets: row i carries one bit per member, set when that member
contains input i.  "How many members does this candidate combination
intersect" is then an OR over a few rows plus a popcount, and the
witness search is an exhaustive walk over candidate combinations,
smallest size first, lexicographic within each size, stopping at the
first hit.

That walk sits inside every detection and containment test, so it is
compiled with numba when available.  Set ``XCORR_NO_NUMBA=1`` to force
the pure-numpy fallback (also used automatically when numba is not
installed).  Both paths enumerate candidates in the same order and
return identical witnesses.
"""

from __future__ import annotations

import os
from itertools import combinations, islice

import numpy as np

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)
_S1 = np.uint64(1)
_S2 = np.uint64(2)
_S4 = np.uint64(4)
_S56 = np.uint64(56)

_NUMPY_CHUNK = 2048

HAS_NUMBA = False
if not os.environ.get("XCORR_NO_NUMBA"):
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - depends on the environment
        pass


def pack_bitsets(contains: np.ndarray) -> np.ndarray:
    """Pack a (K, n) boolean membership matrix into shape (n, ceil(K/64)).

    Bit k of word w in row i is set iff member 64*w+k contains input i.
    """
    contains = np.ascontiguousarray(contains, dtype=bool)
    if contains.ndim != 2:
        raise ValueError(f"expected a 2-d membership matrix, got {contains.ndim}-d")
    k, n = contains.shape
    n_words = max(1, -(-k // 64))
    packed = np.zeros((n, n_words), dtype=np.uint64)
    weights = np.left_shift(_S1, np.arange(64, dtype=np.uint64))
    for w in range(n_words):
        block = contains[64 * w : 64 * (w + 1)]
        if block.shape[0] == 0:
            break
        sel = np.where(block.T, weights[: block.shape[0]], np.uint64(0))
        packed[:, w] = np.bitwise_or.reduce(sel, axis=1)
    return packed


def popcount_u64(x: np.ndarray) -> np.ndarray:
    """Per-element population count of a uint64 array."""
    x = np.asarray(x, dtype=np.uint64).copy()
    x = x - ((x >> _S1) & _M1)
    x = (x & _M2) + ((x >> _S2) & _M2)
    x = (x + (x >> _S4)) & _M4
    return ((x * _H01) >> _S56).astype(np.int64)


def _witness_numpy(bitsets: np.ndarray, threshold: int, l_max: int):
    """Fallback search: chunked candidate enumeration, vectorized counts."""
    n = bitsets.shape[0]
    for s in range(1, min(l_max, n) + 1):
        it = combinations(range(n), s)
        while True:
            chunk = list(islice(it, _NUMPY_CHUNK))
            if not chunk:
                break
            idx = np.asarray(chunk, dtype=np.int64)
            acc = bitsets[idx[:, 0]]
            for j in range(1, s):
                acc = acc | bitsets[idx[:, j]]
            counts = popcount_u64(acc).sum(axis=1)
            hits = np.nonzero(counts >= threshold)[0]
            if hits.size:
                return idx[hits[0]].copy()
    return None


if HAS_NUMBA:

    @njit(cache=True)
    def _pop64(x):
        x = x - ((x >> _S1) & _M1)
        x = (x & _M2) + ((x >> _S2) & _M2)
        x = (x + (x >> _S4)) & _M4
        return np.int64((x * _H01) >> _S56)

    @njit(cache=True)
    def _witness_njit(bitsets, threshold, l_max, out):
        n, n_words = bitsets.shape
        for s in range(1, min(l_max, n) + 1):
            idx = np.empty(s, np.int64)
            pref = np.zeros((s + 1, n_words), np.uint64)
            for j in range(s):
                idx[j] = j
                for t in range(n_words):
                    pref[j + 1, t] = pref[j, t] | bitsets[j, t]
            while True:
                count = 0
                for t in range(n_words):
                    count += _pop64(pref[s, t])
                if count >= threshold:
                    for j in range(s):
                        out[j] = idx[j]
                    return s
                j = s - 1
                while j >= 0 and idx[j] == n - s + j:
                    j -= 1
                if j < 0:
                    break
                idx[j] += 1
                for k in range(j, s):
                    if k > j:
                        idx[k] = idx[k - 1] + 1
                    for t in range(n_words):
                        pref[k + 1, t] = pref[k, t] | bitsets[idx[k], t]
        return 0


def find_witness(bitsets: np.ndarray, threshold: int, l_max: int):
    """First combination of ≤ l_max rows whose OR covers ≥ threshold members.

    ``bitsets`` is the (n, n_words) output of :func:`pack_bitsets`.
    Returns a sorted int64 index array, or None when no such combination
    exists.  Candidates are tried smallest size first, lexicographic
    within a size, so the result is deterministic and minimal-size.
    """
    bitsets = np.ascontiguousarray(bitsets, dtype=np.uint64)
    if bitsets.ndim != 2:
        raise ValueError(f"expected 2-d bitsets, got {bitsets.ndim}-d")
    if threshold < 1:
        raise ValueError(f"threshold must be >= 1, got {threshold}")
    if l_max < 1:
        raise ValueError(f"l_max must be >= 1, got {l_max}")
    if bitsets.shape[0] == 0:
        return None
    if HAS_NUMBA:
        out = np.empty(l_max, dtype=np.int64)
        k = int(_witness_njit(bitsets, np.int64(threshold), np.int64(l_max), out))
        return out[:k].copy() if k else None
    return _witness_numpy(bitsets, threshold, l_max)
