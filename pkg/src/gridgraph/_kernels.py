"""Backend-dispatched reduction kernels for the superstep engine.

Two interchangeable backends compute CSR segment reductions:

* ``numba``  — compiled loops, parallel across segments (gridgraph._kernels_numba)
* ``numpy``  — vectorized fallbacks, no compilation

Selection: the ``GRIDGRAPH_BACKEND`` environment variable (``auto``, ``numba``,
``numpy``; default ``auto`` = numba when importable) or :func:`set_backend` at
runtime.

The backends are bit-identical by construction. Sums accumulate strictly
left-to-right within each segment: numba runs a sequential inner loop per
segment, and the numpy float/complex path uses ``np.bincount``, whose C loop
is a plain sequential scatter-add (``np.add.reduceat`` would NOT qualify - its
inner loop reassociates via pairwise summation). Integer sums are exact under
any association, so those may use ``reduceat``. Max/min are order-insensitive.
NaN inputs are outside the contract (the parser rejects them).
"""
from __future__ import annotations

import os
from typing import Literal

import numpy as np

from .errors import GridGraphError

BackendName = Literal["numba", "numpy"]

_active: str | None = None
_numba_mod = None


def _load_numba():
    global _numba_mod
    if _numba_mod is None:
        from . import _kernels_numba
        _numba_mod = _kernels_numba
    return _numba_mod


def _resolve(name: str) -> str:
    if name not in ("auto", "numba", "numpy"):
        raise GridGraphError(
            f"unknown backend {name!r}: expected 'auto', 'numba', or 'numpy'")
    if name == "numpy":
        return "numpy"
    try:
        _load_numba()
        return "numba"
    except ImportError:
        if name == "numba":
            raise GridGraphError(
                "backend 'numba' requested but numba is not importable") from None
        return "numpy"


def active_backend() -> str:
    """Name of the backend in use, resolving GRIDGRAPH_BACKEND on first call."""
    global _active
    if _active is None:
        _active = _resolve(os.environ.get("GRIDGRAPH_BACKEND", "auto"))
    return _active


def set_backend(name: str) -> str:
    """Select 'numba', 'numpy', or 'auto'. Returns the backend now active."""
    global _active
    _active = _resolve(name)
    return _active


def set_threads(n: int) -> None:
    """Limit compiled-kernel parallelism to n threads (numpy backend: no-op).

    Thread count never changes results; segments are reduced independently.
    """
    if n < 1:
        raise GridGraphError(f"thread count must be >= 1, got {n}")
    if active_backend() == "numba":
        import numba
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def identity_for(combine: str, dtype: np.dtype):
    """Neutral element of a combiner, used to fill empty segments."""
    dtype = np.dtype(dtype)
    if combine == "sum":
        return dtype.type(0)
    if dtype.kind == "f":
        return dtype.type(-np.inf) if combine == "max" else dtype.type(np.inf)
    if dtype.kind == "i":
        info = np.iinfo(dtype)
        return dtype.type(info.min) if combine == "max" else dtype.type(info.max)
    raise GridGraphError(f"combiner {combine!r} does not support dtype {dtype}")


def _np_seg_sum_into(values: np.ndarray, owner_slot: np.ndarray, out: np.ndarray) -> None:
    if values.dtype.kind == "c":
        out.real += np.bincount(owner_slot, weights=values.real, minlength=out.size)
        out.imag += np.bincount(owner_slot, weights=values.imag, minlength=out.size)
    elif values.dtype.kind == "f":
        out += np.bincount(owner_slot, weights=values, minlength=out.size)
    else:
        np.add.at(out, owner_slot, values)


def seg_sum(values: np.ndarray, indptr: np.ndarray, owner_slot: np.ndarray,
            n_out: int) -> np.ndarray:
    """Per-segment sums. values aligned with the segment layout described by
    indptr (len n_out+1); owner_slot maps each value slot to its segment."""
    out = np.zeros(n_out, dtype=values.dtype)
    if values.size == 0:
        return out
    if active_backend() == "numba":
        _load_numba().seg_sum(values, indptr, out)
    else:
        _np_seg_sum_into(values, owner_slot, out)
    return out


def seg_extreme(values: np.ndarray, indptr: np.ndarray, n_out: int,
                combine: str) -> np.ndarray:
    """Per-segment max or min; empty segments yield the combiner identity."""
    out = np.full(n_out, identity_for(combine, values.dtype), dtype=values.dtype)
    if values.size == 0:
        return out
    if active_backend() == "numba":
        _load_numba().seg_extreme(values, indptr, out, combine == "max")
    else:
        ufunc = np.fmax if combine == "max" else np.fmin
        starts = indptr[:-1]
        nonempty = starts < indptr[1:]
        if nonempty.any():
            out[nonempty] = ufunc.reduceat(values, starts[nonempty])
    return out


def gather_sum(indptr: np.ndarray, hidx: np.ndarray, nbr: np.ndarray,
               w: np.ndarray, x: np.ndarray, owner_slot: np.ndarray,
               n_out: int) -> np.ndarray:
    """Fused weighted neighbor gather: out[k] = sum over the k-th segment of
    w[h] * x[nbr[h]], h running over the half-edge ids selected by hidx."""
    out = np.zeros(n_out, dtype=np.result_type(w.dtype, x.dtype))
    if hidx.size == 0:
        return out
    if active_backend() == "numba":
        _load_numba().gather_sum(indptr, hidx, nbr, w, x, out)
    else:
        wh = w[hidx]
        xh = x[nbr[hidx]]
        if out.dtype.kind == "c":
            # explicit parts: numpy's SIMD complex multiply contracts into
            # FMAs on some CPUs, which would break bit-equality with the
            # compiled backend's plain fmul/fadd sequence
            wh = wh.astype(out.dtype, copy=False)
            xh = xh.astype(out.dtype, copy=False)
            contrib = np.empty(wh.size, dtype=out.dtype)
            contrib.real = wh.real * xh.real - wh.imag * xh.imag
            contrib.imag = wh.real * xh.imag + wh.imag * xh.real
        else:
            contrib = wh * xh
        _np_seg_sum_into(contrib, owner_slot, out)
    return out


def total_sum(values: np.ndarray):
    """Whole-array sum accumulated left-to-right (backend bit-identical)."""
    zero = values.dtype.type(0)
    if values.size == 0:
        return zero
    if values.dtype.kind not in "fc":
        return values.dtype.type(values.sum())
    if active_backend() == "numba":
        return values.dtype.type(_load_numba().total_sum(values, zero))
    idx = np.zeros(values.size, dtype=np.intp)
    if values.dtype.kind == "c":
        re = np.bincount(idx, weights=values.real, minlength=1)[0]
        im = np.bincount(idx, weights=values.imag, minlength=1)[0]
        return values.dtype.type(complex(re, im))
    return values.dtype.type(np.bincount(idx, weights=values, minlength=1)[0])


def total_extreme(values: np.ndarray, combine: str):
    """Whole-array max/min; identity on empty input. Order-insensitive."""
    if values.size == 0:
        return identity_for(combine, values.dtype)
    return values.dtype.type(values.max() if combine == "max" else values.min())


def warmup() -> None:
    """Force-compile the numba kernels on toy inputs (no-op on numpy)."""
    if active_backend() != "numba":
        return
    indptr = np.array([0, 1, 2], dtype=np.int64)
    hidx = np.array([0, 1], dtype=np.int64)
    owner = np.array([0, 1], dtype=np.intp)
    for dt in (np.float64, np.complex128, np.int64):
        v = np.ones(2, dtype=dt)
        seg_sum(v, indptr, owner, 2)
        total_sum(v)
        if dt is not np.complex128:
            seg_extreme(v, indptr, 2, "max")
            seg_extreme(v, indptr, 2, "min")
    for dt in (np.float64, np.complex128):
        v = np.ones(2, dtype=dt)
        gather_sum(indptr, hidx, np.array([1, 0], dtype=np.int64), v, v, owner, 2)
