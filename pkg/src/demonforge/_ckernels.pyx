# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: direct LAPACK eigensolves and partial traces.

Avoids numpy dispatch overhead, which dominates for the 2x2 .. 64x64
matrices this package works with.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log
from functools import lru_cache

from scipy.linalg.cython_lapack cimport zheevd

cnp.import_array()


cdef int _heev(char jobz, double complex[:, ::1] buf, double[::1] w) except -1:
    cdef int n = buf.shape[0]
    cdef int lda = n if n > 0 else 1
    cdef int lwork, lrwork, liwork
    cdef int info = 0
    cdef char uplo = b'L'
    if jobz == b'V':
        lwork = 2 * n + n * n + 1
        lrwork = 1 + 5 * n + 2 * n * n
        liwork = 3 + 5 * n
    else:
        lwork = n + 1
        lrwork = n + 1
        liwork = 1
    cdef double complex[::1] work = np.empty(lwork, dtype=np.complex128)
    cdef double[::1] rwork = np.empty(lrwork, dtype=np.float64)
    cdef int[::1] iwork = np.empty(liwork, dtype=np.intc)
    zheevd(&jobz, &uplo, &n, &buf[0, 0], &lda, &w[0], &work[0], &lwork,
           &rwork[0], &lrwork, &iwork[0], &liwork, &info)
    if info != 0:
        raise np.linalg.LinAlgError(f"zheevd failed with info={info}")
    return 0


def eigvalsh(a):
    # A C-ordered Hermitian buffer read column-major is conj(A): same spectrum.
    cdef double complex[:, ::1] buf = np.array(a, dtype=np.complex128, order="C", copy=True)
    cdef double[::1] w = np.empty(buf.shape[0], dtype=np.float64)
    _heev(b'N', buf, w)
    return np.asarray(w)


def eigh(a):
    cdef double complex[:, ::1] buf = np.array(a, dtype=np.complex128, order="C", copy=True)
    cdef double[::1] w = np.empty(buf.shape[0], dtype=np.float64)
    _heev(b'V', buf, w)
    # Rows of the buffer are eigenvectors of conj(A).
    return np.asarray(w), np.asarray(buf).T.conj()


def xlogx_entropy(w):
    cdef const double[::1] ww = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t i
    cdef double s = 0.0
    cdef double lo = ww[0]
    for i in range(ww.shape[0]):
        if ww[i] < lo:
            lo = ww[i]
        if ww[i] > 0.0:
            s -= ww[i] * log(ww[i])
    return s, lo


def entropy(a):
    return xlogx_entropy(eigvalsh(a))


@lru_cache(maxsize=256)
def _offsets(tuple dims, tuple idx):
    cdef Py_ssize_t n = len(dims)
    strides = [1] * n
    for i in range(n - 2, -1, -1):
        strides[i] = strides[i + 1] * dims[i + 1]
    off = np.zeros(1, dtype=np.intp)
    for i in idx:
        off = (off[:, None] + np.arange(dims[i], dtype=np.intp)[None, :] * strides[i]).ravel()
    return off


def ptrace(a, dims, keep):
    dims = tuple(int(d) for d in dims)
    keep = tuple(sorted(keep))
    traced = tuple(i for i in range(len(dims)) if i not in keep)
    cdef cnp.intp_t[::1] ko = _offsets(dims, keep)
    cdef cnp.intp_t[::1] to = _offsets(dims, traced)
    cdef const double complex[:, ::1] r = np.ascontiguousarray(a, dtype=np.complex128)
    cdef Py_ssize_t dk = ko.shape[0], dt = to.shape[0]
    out_arr = np.zeros((dk, dk), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, t
    cdef double complex acc
    for i in range(dk):
        for j in range(dk):
            acc = 0
            for t in range(dt):
                acc = acc + r[ko[i] + to[t], ko[j] + to[t]]
            out[i, j] = acc
    return out_arr
