"""Compiled CSR segment kernels.

Imported lazily by gridgraph._kernels so the numpy-only path never pays the
numba import/compile cost. All kernels accumulate sequentially within each
segment and parallelize only across segments, which makes results bit-identical
across thread counts and identical to the numpy fallbacks; fastmath stays off
for the same reason.
"""
from __future__ import annotations

import numba
import numpy as np


@numba.njit(parallel=True, cache=True)
def seg_sum(values, indptr, out):
    # out arrives zero-filled; out[k] seeds the accumulator with the right dtype
    for k in numba.prange(out.size):
        s = out[k]
        for h in range(indptr[k], indptr[k + 1]):
            s = s + values[h]
        out[k] = s


@numba.njit(parallel=True, cache=True)
def seg_extreme(values, indptr, out, want_max):
    # out arrives identity-filled (-inf/+inf or integer extremes)
    for k in numba.prange(out.size):
        m = out[k]
        for h in range(indptr[k], indptr[k + 1]):
            v = values[h]
            if want_max:
                if v > m:
                    m = v
            else:
                if v < m:
                    m = v
        out[k] = m


@numba.njit(parallel=True, cache=True)
def gather_sum(indptr, hidx, nbr, w, x, out):
    for k in numba.prange(out.size):
        s = out[k]
        for p in range(indptr[k], indptr[k + 1]):
            h = hidx[p]
            s = s + w[h] * x[nbr[h]]
        out[k] = s


@numba.njit(cache=True)
def total_sum(values, zero):
    s = zero
    for i in range(values.size):
        s = s + values[i]
    return s
