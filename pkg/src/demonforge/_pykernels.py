"""Numpy implementations of the hot kernels.

Always importable; used when the compiled extension is unavailable or when
``DEMONFORGE_PURE_PYTHON`` is set.
"""
import numpy as np


def eigvalsh(a):
    return np.linalg.eigvalsh(a)


def eigh(a):
    return np.linalg.eigh(a)


def xlogx_entropy(w):
    """Return ``(-sum w ln w, min(w))`` with non-positive entries skipped."""
    w = np.asarray(w, dtype=float)
    pos = w[w > 0.0]
    return float(-np.sum(pos * np.log(pos))), float(w.min())


def entropy(a):
    return xlogx_entropy(np.linalg.eigvalsh(a))


def ptrace(a, dims, keep):
    dims = [int(d) for d in dims]
    n = len(dims)
    keep = sorted(keep)
    traced = [i for i in range(n) if i not in keep]
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    dt = int(np.prod([dims[i] for i in traced])) if traced else 1
    t = a.reshape(dims + dims)
    perm = keep + traced + [n + i for i in keep] + [n + i for i in traced]
    t = t.transpose(perm).reshape(dk, dt, dk, dt)
    return np.einsum("ajbj->ab", t)
