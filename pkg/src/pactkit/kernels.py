"""Portable data-parallel compute kernels.

Serial reference kernels (triple-loop matmul, loop matvec, plain summation)
act as correctness oracles. The parallel kernels partition the output into
disjoint ranges, so no two workers ever write the same element and results
are bit-identical across runs and across worker counts.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from numba import config as _numba_config
from numba import get_num_threads, njit, prange, set_num_threads

__all__ = [
    "TileSpec",
    "WorkerPool",
    "hardware_worker_count",
    "matmul_serial",
    "matmul_tiled_parallel",
    "matvec_serial",
    "matvec_parallel",
    "matvec_adjoint_serial",
    "matvec_adjoint_parallel",
    "tree_reduce",
    "tile_cover_counts",
    "warm_up",
]

# Column-chunk width for the parallel adjoint matvec. Fixed (not derived from
# the worker count) so the partition, and therefore the result, does not
# depend on how many workers execute it.
_ADJOINT_CHUNK = 256


def hardware_worker_count() -> int:
    """Number of hardware workers the kernel layer can use."""
    return int(_numba_config.NUMBA_NUM_THREADS)


@dataclass(frozen=True)
class TileSpec:
    """Block extents: output rows x output cols x shared (summation) dim."""

    tile_rows: int = 32
    tile_cols: int = 32
    tile_depth: int = 64

    def __post_init__(self):
        if min(self.tile_rows, self.tile_cols, self.tile_depth) < 1:
            raise ValueError(f"tile extents must be >= 1, got {self}")


@dataclass(frozen=True)
class WorkerPool:
    """Execution policy for the parallel kernels.

    worker_count may exceed the hardware limit; the excess is clamped at
    kernel launch. deterministic_reduction selects tree combination of the
    per-block slab partials instead of sequential slab order.
    """

    worker_count: int = field(default_factory=hardware_worker_count)
    deterministic_reduction: bool = False

    def __post_init__(self):
        if self.worker_count < 1:
            raise ValueError(f"worker_count must be >= 1, got {self.worker_count}")

    @property
    def effective_workers(self) -> int:
        return min(self.worker_count, hardware_worker_count())


@contextmanager
def _active_workers(n: int):
    prev = get_num_threads()
    set_num_threads(min(max(1, n), hardware_worker_count()))
    try:
        yield
    finally:
        set_num_threads(prev)


def _as_operand(a, name: str) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype.kind in "iub":
        a = a.astype(np.float64)
    elif a.dtype == np.float32:
        a = a.astype(np.float64)
    elif a.dtype == np.complex64:
        a = a.astype(np.complex128)
    if a.dtype not in (np.float64, np.complex128):
        raise ValueError(f"{name}: unsupported dtype {a.dtype}")
    return np.ascontiguousarray(a)


def _check_kinds(a: np.ndarray, b: np.ndarray, what: str):
    if a.dtype != b.dtype:
        raise ValueError(f"{what}: scalar kind mismatch ({a.dtype} vs {b.dtype})")


# ---------------------------------------------------------------------------
# compiled cores (outputs preallocated by the wrappers, zero-initialized)


@njit(cache=True)
def _matmul_serial_core(A, B, C):
    n_i, n_k = A.shape
    n_j = B.shape[1]
    for i in range(n_i):
        for j in range(n_j):
            acc = C[i, j]
            for k in range(n_k):
                acc += A[i, k] * B[k, j]
            C[i, j] = acc


@njit(cache=True, parallel=True)
def _matmul_tiled_core(A, B, C, tr, tc, td, use_tree, counts, track):
    n_i, n_k = A.shape
    n_j = B.shape[1]
    nbi = (n_i + tr - 1) // tr
    nbj = (n_j + tc - 1) // tc
    nslab = (n_k + td - 1) // td
    for blk in prange(nbi * nbj):
        bi = blk // nbj
        bj = blk % nbj
        i0 = bi * tr
        i1 = min(i0 + tr, n_i)
        j0 = bj * tc
        j1 = min(j0 + tc, n_j)
        bh = i1 - i0
        bw = j1 - j0
        if use_tree:
            # one partial product per slab, then pairwise-halving combination
            partials = np.zeros((nslab, bh, bw), dtype=C.dtype)
            for s in range(nslab):
                k0 = s * td
                k1 = min(k0 + td, n_k)
                As = A[i0:i1, k0:k1].copy()  # worker-local staging
                Bs = B[k0:k1, j0:j1].copy()
                for ii in range(bh):
                    for kk in range(k1 - k0):
                        a = As[ii, kk]
                        for jj in range(bw):
                            partials[s, ii, jj] += a * Bs[kk, jj]
            span = 1
            while span < nslab:
                span *= 2
            half = span // 2
            while half >= 1:
                for s in range(half):
                    o = s + half
                    if o < nslab:  # missing partials pad with zero
                        for ii in range(bh):
                            for jj in range(bw):
                                partials[s, ii, jj] += partials[o, ii, jj]
                half //= 2
            for ii in range(bh):
                for jj in range(bw):
                    C[i0 + ii, j0 + jj] = partials[0, ii, jj]
        else:
            acc = np.zeros((bh, bw), dtype=C.dtype)
            for s in range(nslab):
                k0 = s * td
                k1 = min(k0 + td, n_k)
                As = A[i0:i1, k0:k1].copy()
                Bs = B[k0:k1, j0:j1].copy()
                for ii in range(bh):
                    for kk in range(k1 - k0):
                        a = As[ii, kk]
                        for jj in range(bw):
                            acc[ii, jj] += a * Bs[kk, jj]
            for ii in range(bh):
                for jj in range(bw):
                    C[i0 + ii, j0 + jj] = acc[ii, jj]
        if track:
            for ii in range(bh):
                for jj in range(bw):
                    counts[i0 + ii, j0 + jj] += 1


@njit(cache=True)
def _matvec_serial_core(A, x, out):
    n_i, n_j = A.shape
    for i in range(n_i):
        acc = out[i]
        for j in range(n_j):
            acc += A[i, j] * x[j]
        out[i] = acc


@njit(cache=True, parallel=True)
def _matvec_parallel_core(A, x, out):
    n_i, n_j = A.shape
    for i in prange(n_i):
        acc = out[i]
        for j in range(n_j):
            acc += A[i, j] * x[j]
        out[i] = acc


@njit(cache=True)
def _matvec_adjoint_serial_core(A, y, out):
    # row-major sweep; each out[j] still accumulates in ascending i order
    n_i, n_j = A.shape
    for i in range(n_i):
        yi = y[i]
        for j in range(n_j):
            out[j] += np.conj(A[i, j]) * yi


@njit(cache=True, parallel=True)
def _matvec_adjoint_parallel_core(A, y, out, chunk):
    n_i, n_j = A.shape
    n_chunks = (n_j + chunk - 1) // chunk
    for c in prange(n_chunks):
        j0 = c * chunk
        j1 = min(j0 + chunk, n_j)
        for i in range(n_i):
            yi = y[i]
            for j in range(j0, j1):
                out[j] += np.conj(A[i, j]) * yi


# ---------------------------------------------------------------------------
# public kernels


def matmul_serial(A, B) -> np.ndarray:
    """Exact triple-loop matrix product in (i, j, k) order.

    This is the correctness oracle for every parallel kernel; it never
    delegates to a library product.
    """
    A = _as_operand(A, "A")
    B = _as_operand(B, "B")
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError("matmul_serial expects 2-D operands")
    _check_kinds(A, B, "matmul_serial")
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} x {B.shape}")
    C = np.zeros((A.shape[0], B.shape[1]), dtype=A.dtype)
    _matmul_serial_core(A, B, C)
    return C


def matmul_tiled_parallel(
    A,
    B,
    tiles: TileSpec | None = None,
    pool: WorkerPool | None = None,
    write_counts: np.ndarray | None = None,
) -> np.ndarray:
    """Tiled parallel matrix product.

    The output is partitioned into disjoint tile_rows x tile_cols blocks,
    one block per parallel task. Each block accumulates over tile_depth
    slabs of the shared dimension; every slab's operand sub-blocks are
    copied into worker-local scratch before use. With
    pool.deterministic_reduction the slab partials are combined by
    pairwise-halving tree order, otherwise sequentially. Either way the
    combination order is fixed, so results are bit-identical across runs
    and worker counts.

    write_counts, when given an int64 array of the output shape, is
    incremented once per element written (debug aid for the tiling cover).
    """
    tiles = tiles or TileSpec()
    pool = pool or WorkerPool()
    A = _as_operand(A, "A")
    B = _as_operand(B, "B")
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError("matmul_tiled_parallel expects 2-D operands")
    _check_kinds(A, B, "matmul_tiled_parallel")
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} x {B.shape}")
    C = np.zeros((A.shape[0], B.shape[1]), dtype=A.dtype)
    track = write_counts is not None
    counts = write_counts if track else np.zeros((1, 1), dtype=np.int64)
    if track and counts.shape != C.shape:
        raise ValueError("write_counts shape must match the output shape")
    with _active_workers(pool.effective_workers):
        _matmul_tiled_core(
            A,
            B,
            C,
            tiles.tile_rows,
            tiles.tile_cols,
            tiles.tile_depth,
            pool.deterministic_reduction,
            counts,
            track,
        )
    return C


def _matvec_operands(A, x, what: str):
    A = _as_operand(A, "A")
    x = _as_operand(x, "x")
    if A.ndim != 2 or x.ndim != 1:
        raise ValueError(f"{what} expects a 2-D matrix and a 1-D vector")
    _check_kinds(A, x, what)
    return A, x


def matvec_serial(A, x) -> np.ndarray:
    """Serial y = A @ x reference loop."""
    A, x = _matvec_operands(A, x, "matvec_serial")
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} x {x.shape}")
    out = np.zeros(A.shape[0], dtype=A.dtype)
    _matvec_serial_core(A, x, out)
    return out


def matvec_parallel(A, x, pool: WorkerPool | None = None) -> np.ndarray:
    """Parallel y = A @ x over disjoint output rows."""
    pool = pool or WorkerPool()
    A, x = _matvec_operands(A, x, "matvec_parallel")
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} x {x.shape}")
    out = np.zeros(A.shape[0], dtype=A.dtype)
    with _active_workers(pool.effective_workers):
        _matvec_parallel_core(A, x, out)
    return out


def matvec_adjoint_serial(A, y) -> np.ndarray:
    """Serial x = A^H @ y without materializing the transpose."""
    A, y = _matvec_operands(A, y, "matvec_adjoint_serial")
    if A.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape}^H x {y.shape}")
    out = np.zeros(A.shape[1], dtype=A.dtype)
    _matvec_adjoint_serial_core(A, y, out)
    return out


def matvec_adjoint_parallel(A, y, pool: WorkerPool | None = None) -> np.ndarray:
    """Parallel x = A^H @ y over disjoint output column chunks."""
    pool = pool or WorkerPool()
    A, y = _matvec_operands(A, y, "matvec_adjoint_parallel")
    if A.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape}^H x {y.shape}")
    out = np.zeros(A.shape[1], dtype=A.dtype)
    with _active_workers(pool.effective_workers):
        _matvec_adjoint_parallel_core(A, y, out, _ADJOINT_CHUNK)
    return out


def tree_reduce(values, pool: WorkerPool | None = None):
    """Pairwise-halving summation.

    Round r combines pairs (i, i + n / 2**r); lengths that are not a power
    of two are padded with the additive identity. The combination order is
    fixed, so the result is bit-stable across runs. Empty input sums to 0.
    The pool argument is accepted for interface uniformity; each round is a
    single data-parallel vector add.
    """
    v = np.asarray(values)
    if v.dtype.kind in "iub":
        v = v.astype(np.float64)
    if v.ndim != 1:
        v = v.ravel()
    n = v.size
    if n == 0:
        return 0.0
    span = 1
    while span < n:
        span *= 2
    buf = np.zeros(span, dtype=v.dtype)
    buf[:n] = v
    while span > 1:
        half = span // 2
        buf[:half] += buf[half:span]
        span = half
    return buf[0].item()


def tile_cover_counts(rows: int, cols: int, tiles: TileSpec) -> np.ndarray:
    """How many tile blocks claim each output element (should be all ones).

    Mirrors the block index arithmetic of matmul_tiled_parallel; used by the
    tiling-completeness checks together with the kernel's write_counts mode.
    """
    counts = np.zeros((rows, cols), dtype=np.int64)
    nbi = (rows + tiles.tile_rows - 1) // tiles.tile_rows
    nbj = (cols + tiles.tile_cols - 1) // tiles.tile_cols
    for bi in range(nbi):
        i0 = bi * tiles.tile_rows
        i1 = min(i0 + tiles.tile_rows, rows)
        for bj in range(nbj):
            j0 = bj * tiles.tile_cols
            j1 = min(j0 + tiles.tile_cols, cols)
            counts[i0:i1, j0:j1] += 1
    return counts


def warm_up():
    """Force JIT compilation of every kernel for both scalar kinds."""
    for dtype in (np.float64, np.complex128):
        a = np.ones((3, 3), dtype=dtype)
        v = np.ones(3, dtype=dtype)
        matmul_serial(a, a)
        matmul_tiled_parallel(a, a, TileSpec(2, 2, 2), WorkerPool(1, True))
        matmul_tiled_parallel(a, a, TileSpec(2, 2, 2), WorkerPool(1, False))
        matvec_serial(a, v)
        matvec_parallel(a, v, WorkerPool(1))
        matvec_adjoint_serial(a, v)
        matvec_adjoint_parallel(a, v, WorkerPool(1))
