"""Dense Hermitian linear algebra and quantum-state primitives.

Conventions: k_B = hbar = 1, entropies in nats, subsystem ordering is
big-endian (the first entry of ``dims`` is the most significant factor).
"""
from __future__ import annotations

from dataclasses import InitVar, dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
NEG_EIG_TOL = 1e-9
SUPPORT_TOL = 1e-12


class QuantumStateError(ValueError):
    """Raised when an operator violates a construction invariant."""


def _as_matrix(m) -> np.ndarray:
    if isinstance(m, (HermitianOperator, DensityOperator)):
        return m.matrix
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise QuantumStateError(f"expected a square matrix, got shape {a.shape}")
    return a


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128, order="C")
    a.setflags(write=False)
    return a


def _symmetrize(a: np.ndarray, tol: float, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise QuantumStateError(f"{what} has non-finite entries")
    dev = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if dev > tol:
        raise QuantumStateError(f"{what} is not Hermitian (max |M - M^dag| = {dev:.3g})")
    return 0.5 * (a + a.conj().T)


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Hermitian matrix, stored symmetrized.  Energy units when used as a Hamiltonian."""

    matrix: np.ndarray

    def __post_init__(self):
        a = _as_matrix(self.matrix)
        object.__setattr__(self, "matrix", _frozen(_symmetrize(a, HERMITIAN_TOL, "operator")))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def zeros(cls, dim: int) -> "HermitianOperator":
        return cls(np.zeros((dim, dim)))

    @classmethod
    def diag(cls, values: Sequence[float]) -> "HermitianOperator":
        return cls(np.diag(np.asarray(values, dtype=float)))

    def expectation(self, rho) -> float:
        return float(np.real(np.trace(_as_matrix(rho) @ self.matrix)))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Positive unit-trace matrix tagged with its subsystem factorization.

    Parameters
    ----------
    matrix : array_like
        Square complex matrix.
    dims : sequence of int, optional
        Subsystem dimensions whose product is the matrix dimension.  Defaults
        to a single factor.
    validate : bool
        Check trace, hermiticity and positivity (skip only for states produced
        internally by trace-preserving maps).
    """

    matrix: np.ndarray
    dims: tuple = None
    validate: InitVar[bool] = True

    def __post_init__(self, validate):
        a = _as_matrix(self.matrix)
        n = a.shape[0]
        dims = (n,) if self.dims is None else tuple(int(d) for d in self.dims)
        if any(d < 1 for d in dims) or int(np.prod(dims)) != n:
            raise QuantumStateError(f"dims {dims} do not factor dimension {n}")
        if validate:
            a = _symmetrize(a, HERMITIAN_TOL, "density operator")
            tr = np.trace(a).real
            if abs(tr - 1.0) > TRACE_TOL:
                raise QuantumStateError(f"density operator trace is {tr!r}, expected 1")
            lo = kernels.eigvalsh(a)[0]
            if lo < -NEG_EIG_TOL:
                raise QuantumStateError(f"density operator has negative eigenvalue {lo:.3g}")
        else:
            a = 0.5 * (a + a.conj().T)
        object.__setattr__(self, "matrix", _frozen(a))
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def ptrace(self, keep: Iterable[int]) -> "DensityOperator":
        return partial_trace(self, keep)

    @classmethod
    def pure(cls, psi, dims=None) -> "DensityOperator":
        psi = np.asarray(psi, dtype=np.complex128).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), dims)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(np.eye(dim) / dim)

    @classmethod
    def basis(cls, dim: int, index: int) -> "DensityOperator":
        m = np.zeros((dim, dim))
        m[index, index] = 1.0
        return cls(m)


def _trusted(matrix, dims) -> DensityOperator:
    return DensityOperator(matrix, dims, validate=False)


def tensor(a, b):
    """Kronecker product; ``dims`` are concatenated for density operators."""
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        return _trusted(np.kron(a.matrix, b.matrix), a.dims + b.dims)
    if isinstance(a, HermitianOperator) and isinstance(b, HermitianOperator):
        return HermitianOperator(np.kron(a.matrix, b.matrix))
    raise TypeError("tensor operands must both be DensityOperator or both HermitianOperator")


def _check_selector(dims: Sequence[int], keep) -> tuple:
    keep = tuple(sorted(int(i) for i in keep))
    if len(set(keep)) != len(keep) or any(i < 0 or i >= len(dims) for i in keep):
        raise QuantumStateError(f"invalid subsystem selector {keep} for dims {tuple(dims)}")
    return keep


def partial_trace(rho: DensityOperator, keep: Iterable[int]) -> DensityOperator:
    """Reduced state on the subsystems listed in ``keep`` (order follows ``dims``)."""
    keep = _check_selector(rho.dims, keep)
    if len(keep) == len(rho.dims):
        return rho
    out = kernels.ptrace(rho.matrix, rho.dims, keep)
    return _trusted(out, tuple(rho.dims[i] for i in keep) or (1,))


def hermitian_eig(h):
    """Ascending eigenvalues and a unitary whose columns are the eigenvectors."""
    return kernels.eigh(_as_matrix(h))


def spectrum(rho) -> np.ndarray:
    return kernels.eigvalsh(_as_matrix(rho))


def von_neumann_entropy(rho) -> float:
    """S(rho) = -Tr rho ln rho in nats, with 0 ln 0 = 0.

    Eigenvalues in [-1e-9, 0) are treated as round-off; anything lower raises.
    """
    s, lo = kernels.entropy(_as_matrix(rho))
    if lo < -NEG_EIG_TOL:
        raise QuantumStateError(f"entropy of a non-positive operator (min eigenvalue {lo:.3g})")
    return max(s, 0.0)


def cross_entropy(rho, sigma) -> float:
    """-Tr[rho ln sigma]; +inf when rho leaves the support of sigma."""
    r, s = _as_matrix(rho), _as_matrix(sigma)
    if r.shape != s.shape:
        raise QuantumStateError(f"dimension mismatch {r.shape} vs {s.shape}")
    w, v = kernels.eigh(s)
    weights = np.real(np.einsum("ij,ik,kj->j", v.conj(), r, v))
    inside = w > SUPPORT_TOL
    if np.sum(weights[~inside]) > SUPPORT_TOL:
        return np.inf
    return float(-np.dot(weights[inside], np.log(w[inside])))


def relative_entropy(rho, sigma) -> float:
    """S(rho || sigma) = -Tr[rho ln sigma] - S(rho), or +inf outside the support."""
    ce = cross_entropy(rho, sigma)
    if np.isinf(ce):
        return np.inf
    return ce - von_neumann_entropy(rho)


def trace_distance(rho, sigma) -> float:
    d = _as_matrix(rho) - _as_matrix(sigma)
    return 0.5 * float(np.sum(np.abs(kernels.eigvalsh(d))))


def canonical_state(h, beta: float):
    """Gibbs state e^{-beta H}/Z and its free energy -ln(Z)/beta.

    The exponent is shifted by the ground energy so that no term overflows.
    """
    if not (np.isfinite(beta) and beta > 0):
        raise QuantumStateError(f"inverse temperature must be finite and positive, got {beta}")
    w, v = hermitian_eig(h)
    e0 = w[0]
    boltz = np.exp(-beta * (w - e0))
    z = boltz.sum()
    p = boltz / z
    rho = (v * p) @ v.conj().T
    free_energy = e0 - np.log(z) / beta
    return _trusted(rho, None), float(free_energy)


def is_canonical(rho, h, beta: float, tol: float = 1e-9) -> bool:
    can, _ = canonical_state(h, beta)
    return bool(np.max(np.abs(_as_matrix(rho) - can.matrix)) <= tol)


def unitary_from_generator(g) -> np.ndarray:
    """exp(-i G) computed in the eigenbasis of G."""
    w, v = hermitian_eig(g)
    return (v * np.exp(-1j * w)) @ v.conj().T


def unitarity_residual(u) -> float:
    u = np.asarray(u, dtype=np.complex128)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return np.inf
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def check_unitary(u, tol: float = 1e-9, what: str = "operator") -> np.ndarray:
    u = np.asarray(u, dtype=np.complex128)
    res = unitarity_residual(u)
    if res > tol:
        raise QuantumStateError(f"{what} is not unitary (residual {res:.3g})")
    return u


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_unitary(dim: int, seed=None) -> np.ndarray:
    """Haar-random unitary: QR of a complex Gaussian matrix with the R diagonal phase-fixed."""
    rng = _rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_density(dim: int, rank: int | None = None, seed=None, dims=None) -> DensityOperator:
    rank = dim if rank is None else rank
    if not 1 <= rank <= dim:
        raise QuantumStateError(f"rank must lie in [1, {dim}], got {rank}")
    rng = _rng(seed)
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    m = g @ g.conj().T
    return DensityOperator(m / np.trace(m).real, dims)


def random_hermitian(dim: int, seed=None, scale: float = 1.0) -> HermitianOperator:
    rng = _rng(seed)
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return HermitianOperator(scale * 0.5 * (g + g.conj().T) / np.sqrt(2 * dim))


def lift_operator(op, dims: Sequence[int], targets: Sequence[int]) -> np.ndarray:
    """Full matrix of ``op`` acting on ``targets`` (in that order) and identity elsewhere."""
    dims = [int(d) for d in dims]
    n = len(dims)
    eye = np.eye(int(np.prod(dims)), dtype=np.complex128)
    return _left_apply(np.asarray(op, dtype=np.complex128), eye.reshape(dims + dims), dims, targets).reshape(eye.shape)


def _left_apply(op, t, dims, targets):
    n = len(dims)
    targets = list(targets)
    m = len(targets)
    tdims = [dims[i] for i in targets]
    u = op.reshape(tdims + tdims)
    t = np.tensordot(u, t, axes=(list(range(m, 2 * m)), targets))
    return np.moveaxis(t, list(range(m)), targets)


def conjugate(op, rho, dims: Sequence[int], targets: Sequence[int]) -> np.ndarray:
    """Return (op on targets) rho (op on targets)^dagger as a matrix.

    ``targets`` lists the subsystems ``op`` acts on, in the order of its own
    tensor factors; they need not be contiguous or sorted.
    """
    dims = [int(d) for d in dims]
    n = len(dims)
    targets = list(targets)
    m = len(targets)
    op = np.asarray(op, dtype=np.complex128)
    r = np.asarray(_as_matrix(rho)).reshape(dims + dims)
    r = _left_apply(op, r, dims, targets)
    tdims = [dims[i] for i in targets]
    u = op.conj().reshape(tdims + tdims)
    cols = [n + i for i in targets]
    r = np.tensordot(r, u, axes=(cols, list(range(m, 2 * m))))
    r = np.moveaxis(r, list(range(2 * n - m, 2 * n)), cols)
    d = int(np.prod(dims))
    return r.reshape(d, d)


def ket(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=np.complex128)
    v[index] = 1.0
    return v


PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)


def gell_mann_basis(dim: int) -> list[HermitianOperator]:
    """Generalized Gell-Mann matrices (traceless, dim^2 - 1 of them)."""
    basis = []
    for j in range(dim):
        for k in range(j + 1, dim):
            s = np.zeros((dim, dim), dtype=np.complex128)
            s[j, k] = s[k, j] = 1.0
            basis.append(HermitianOperator(s))
            a = np.zeros((dim, dim), dtype=np.complex128)
            a[j, k], a[k, j] = -1j, 1j
            basis.append(HermitianOperator(a))
    for l in range(1, dim):
        d = np.zeros(dim)
        d[:l] = 1.0
        d[l] = -l
        basis.append(HermitianOperator(np.diag(d * np.sqrt(2.0 / (l * (l + 1))))))
    return basis
