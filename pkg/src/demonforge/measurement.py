"""Block-structured memories, indirect measurements and Kraus families.

The memory Hilbert space is a direct sum of outcome blocks; block ``k``
occupies a contiguous range of computational basis indices.  Registering an
outcome means the memory ends up supported on its block.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .infotheory import PROB_DROP, Outcome, OutcomeEnsemble
from .qlinalg import (
    DensityOperator,
    HermitianOperator,
    QuantumStateError,
    _trusted,
    canonical_state,
    check_unitary,
    conjugate,
    hermitian_eig,
    kernels,
    tensor,
)

COMPLETENESS_TOL = 1e-9
OPERATOR_PRUNE = 1e-12
CROSS_CHECK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MemoryModel:
    """Memory H^M = (+)_k H^M_k with a designated standard block.

    ``initial_state`` lives on the whole memory space but must be supported on
    the standard block.
    """

    block_dims: tuple
    block_hamiltonians: tuple
    initial_state: DensityOperator
    standard_block: int = 0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.block_dims)
        if not dims or any(d < 1 for d in dims):
            raise QuantumStateError(f"invalid memory block dimensions {dims}")
        hams = tuple(h if isinstance(h, HermitianOperator) else HermitianOperator(h) for h in self.block_hamiltonians)
        if len(hams) != len(dims):
            raise QuantumStateError("one Hamiltonian per memory block is required")
        for k, (d, h) in enumerate(zip(dims, hams)):
            if h.dim != d:
                raise QuantumStateError(f"block {k} Hamiltonian has dimension {h.dim}, block has {d}")
        if not 0 <= self.standard_block < len(dims):
            raise QuantumStateError(f"standard block {self.standard_block} out of range")
        object.__setattr__(self, "block_dims", dims)
        object.__setattr__(self, "block_hamiltonians", hams)
        rho = self.initial_state
        if not isinstance(rho, DensityOperator):
            rho = DensityOperator(rho)
        if rho.dim != sum(dims):
            raise QuantumStateError(f"memory initial state has dimension {rho.dim}, memory has {sum(dims)}")
        rho = DensityOperator(rho.matrix, (rho.dim,), validate=False)
        leak = 1.0 - np.trace(self.projector(self.standard_block) @ rho.matrix).real
        if leak > 1e-10:
            raise QuantumStateError(f"memory initial state has weight {leak:.3g} outside the standard block")
        object.__setattr__(self, "initial_state", rho)

    @property
    def dim(self) -> int:
        return sum(self.block_dims)

    @property
    def n_blocks(self) -> int:
        return len(self.block_dims)

    def offset(self, k: int) -> int:
        return sum(self.block_dims[:k])

    def block_slice(self, k: int) -> slice:
        o = self.offset(k)
        return slice(o, o + self.block_dims[k])

    def projector(self, k: int) -> np.ndarray:
        p = np.zeros((self.dim, self.dim))
        s = self.block_slice(k)
        p[s, s] = np.eye(self.block_dims[k])
        return p

    def basis_vector(self, k: int, b: int) -> np.ndarray:
        v = np.zeros(self.dim, dtype=np.complex128)
        v[self.offset(k) + b] = 1.0
        return v

    @property
    def hamiltonian(self) -> HermitianOperator:
        h = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for k, hk in enumerate(self.block_hamiltonians):
            s = self.block_slice(k)
            h[s, s] = hk.matrix
        return HermitianOperator(h)

    def embed(self, k: int, block_matrix) -> np.ndarray:
        m = np.zeros((self.dim, self.dim), dtype=np.complex128)
        s = self.block_slice(k)
        m[s, s] = block_matrix
        return m

    def block_canonical(self, k: int, beta: float):
        """Canonical state of block ``k`` embedded in the memory, and its free energy."""
        rho, f = canonical_state(self.block_hamiltonians[k], beta)
        return _trusted(self.embed(k, rho.matrix), (self.dim,)), f

    def initial_is_canonical(self, beta: float, tol: float = 1e-9) -> bool:
        can, _ = self.block_canonical(self.standard_block, beta)
        return bool(np.max(np.abs(can.matrix - self.initial_state.matrix)) <= tol)

    def is_pure_initial(self, tol: float = 1e-9) -> bool:
        w = kernels.eigvalsh(self.initial_state.matrix)
        return bool(abs(w[-1] - 1.0) <= tol)

    @classmethod
    def register(cls, n_outcomes: int, energies: Sequence[float] | None = None) -> "MemoryModel":
        """One-dimensional blocks, pure standard state |0>."""
        energies = [0.0] * n_outcomes if energies is None else list(energies)
        hams = tuple(HermitianOperator.diag([e]) for e in energies)
        init = DensityOperator.basis(n_outcomes, 0)
        return cls((1,) * n_outcomes, hams, init)


@dataclass(frozen=True, eq=False)
class IndirectMeasurement:
    """Joint unitary on S (x) M followed by the block projective readout of M.

    ``dim_system`` is the dimension of the measured subsystem S (A for the
    first round, B for a second round).
    """

    joint_unitary: np.ndarray
    memory: MemoryModel
    dim_system: int

    def __post_init__(self):
        d = self.dim_system * self.memory.dim
        u = np.asarray(self.joint_unitary, dtype=np.complex128)
        if u.shape != (d, d):
            raise QuantumStateError(f"joint unitary has shape {u.shape}, expected {(d, d)}")
        u = check_unitary(u, COMPLETENESS_TOL, "joint measurement unitary").copy()
        u.setflags(write=False)
        object.__setattr__(self, "joint_unitary", u)


@dataclass(frozen=True, eq=False)
class KrausFamily:
    """Measurement operators grouped by outcome.

    ``labels[k][j]`` is the ``(a, b)`` pair of operator ``j`` of outcome ``k``:
    ``a`` indexes the eigenvectors of the memory's initial state and ``b`` the
    basis vector within block ``k`` that the operator writes to.
    """

    operators: dict
    labels: dict = field(default=None)

    def __post_init__(self):
        ops = {}
        for k, mats in self.operators.items():
            mats = [np.asarray(m, dtype=np.complex128) for m in mats]
            if mats:
                ops[k] = mats
        if not ops:
            raise QuantumStateError("Kraus family has no operators")
        shapes = {m.shape for mats in ops.values() for m in mats}
        if len(shapes) != 1 or next(iter(shapes))[0] != next(iter(shapes))[1]:
            raise QuantumStateError(f"Kraus operators must be square and equal-sized, got {shapes}")
        labels = self.labels
        if labels is None:
            labels = {k: [(0, j) for j in range(len(m))] for k, m in ops.items()}
        labels = {k: [tuple(x) for x in labels[k]] for k in ops}
        if any(len(labels[k]) != len(ops[k]) for k in ops):
            raise QuantumStateError("Kraus labels do not match the operators")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "labels", labels)
        res = self.completeness_residual()
        if res > COMPLETENESS_TOL:
            raise QuantumStateError(f"Kraus family is incomplete (residual {res:.3g})")

    @property
    def dim(self) -> int:
        return next(iter(self.operators.values()))[0].shape[0]

    @property
    def outcomes(self) -> list:
        return list(self.operators)

    @property
    def efficient(self) -> bool:
        return all(len(m) == 1 for m in self.operators.values())

    def completeness_residual(self) -> float:
        s = sum(m.conj().T @ m for mats in self.operators.values() for m in mats)
        return float(np.max(np.abs(s - np.eye(s.shape[0]))))

    @classmethod
    def projective(cls, basis: np.ndarray | None = None, dim: int = 2) -> "KrausFamily":
        basis = np.eye(dim) if basis is None else np.asarray(basis)
        return cls({k: [np.outer(basis[:, k], basis[:, k].conj())] for k in range(basis.shape[1])})

    @classmethod
    def identity(cls, dim: int) -> "KrausFamily":
        return cls({0: [np.eye(dim)]})


def is_efficient(family: KrausFamily) -> bool:
    """True iff every outcome has exactly one (non-pruned) operator."""
    return family.efficient


def kraus_from_dilation(m: IndirectMeasurement) -> KrausFamily:
    """M_{k,a,b} = sqrt(p0(a)) <psi_k(b)| U |psi_0(a)>, norms <= 1e-12 pruned."""
    mem = m.memory
    ds, dm = m.dim_system, mem.dim
    u = m.joint_unitary.reshape(ds, dm, ds, dm)
    p0, vecs = hermitian_eig(mem.initial_state.matrix)
    ops: dict = {}
    labels: dict = {}
    for a in range(dm):
        if p0[a] <= OPERATOR_PRUNE:
            continue
        # <mem index| U |psi_0(a)> as an operator on S, for every memory index
        block = np.sqrt(p0[a]) * np.einsum("imjn,n->mij", u, vecs[:, a])
        for k in range(mem.n_blocks):
            for b in range(mem.block_dims[k]):
                op = block[mem.offset(k) + b]
                if np.linalg.norm(op) <= OPERATOR_PRUNE:
                    continue
                ops.setdefault(k, []).append(op)
                labels.setdefault(k, []).append((a, b))
    return KrausFamily(ops, labels)


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    """Outcome ensemble plus, when a memory is involved, the joint states with it.

    ``joint_states[k]`` has the memory appended as the last tensor factor.
    """

    ensemble: OutcomeEnsemble
    joint_states: dict | None
    family: KrausFamily
    memory: MemoryModel | None

    @property
    def probabilities(self) -> dict:
        return {o.label: o.probability for o in self.ensemble.outcomes}

    @property
    def efficient(self) -> bool:
        return self.family.efficient


def _kraus_route(family: KrausFamily, rho: DensityOperator, target: int):
    if family.dim != rho.dims[target]:
        raise QuantumStateError(
            f"measurement acts on dimension {family.dim}, subsystem {target} has dimension {rho.dims[target]}"
        )
    probs, states = {}, {}
    for k, mats in family.operators.items():
        acc = sum(conjugate(m, rho.matrix, rho.dims, [target]) for m in mats)
        p = float(np.trace(acc).real)
        if p < -CROSS_CHECK_TOL:
            raise QuantumStateError(f"negative outcome probability {p:.3g}")
        probs[k] = p
        states[k] = acc
    total = sum(probs.values())
    if abs(total - 1.0) > COMPLETENESS_TOL:
        raise QuantumStateError(f"outcome probabilities sum to {total!r}")
    return probs, states


def _joint_from_labels(family, rho, target, memory):
    """sum_{a,b,c} M_kab rho M_kac^dag (x) |k,b><k,c| for every outcome."""
    joint = {}
    for k, mats in family.operators.items():
        labels = family.labels[k]
        if k >= memory.n_blocks or any(b >= memory.block_dims[k] for _, b in labels):
            raise QuantumStateError(f"memory block {k} cannot hold the labels of outcome {k}")
        d = rho.dim * memory.dim
        acc = np.zeros((d, d), dtype=np.complex128)
        by_a: dict = {}
        for m, (a, b) in zip(mats, labels):
            by_a.setdefault(a, []).append((m, b))
        dims = list(rho.dims)
        for group in by_a.values():
            # stack the group into one operator S -> S (x) block, then conjugate
            iso = np.zeros((rho.dims[target] * memory.dim, rho.dims[target]), dtype=np.complex128)
            iso = iso.reshape(rho.dims[target], memory.dim, rho.dims[target])
            for m, b in group:
                iso[:, memory.offset(k) + b, :] += m
            acc += _apply_isometry(iso, rho, target, memory.dim)
        joint[k] = acc
    return joint


def _apply_isometry(iso, rho, target, dm):
    """V rho V^dag for V: S -> S (x) M (memory appended last)."""
    dims = list(rho.dims)
    n = len(dims)
    r = rho.matrix.reshape(dims + dims)
    # rows
    r = np.tensordot(iso, r, axes=([2], [target]))  # (s, m, rest..., cols...)
    r = np.moveaxis(r, [0, 1], [target, n])  # rows in place, memory row after system rows
    # columns
    r = np.tensordot(r, iso.conj(), axes=([n + 1 + target], [2]))
    r = np.moveaxis(r, [2 * n, 2 * n + 1], [n + 1 + target, 2 * n + 1])
    d = rho.dim * dm
    return r.reshape(d, d)


def apply_measurement(measurement, rho: DensityOperator, target: int = 0, memory: MemoryModel | None = None) -> MeasurementRecord:
    """Measure subsystem ``target`` of ``rho``.

    With an :class:`IndirectMeasurement` the joint states are built through the
    unitary and block projections and cross-checked against the Kraus route.
    With a :class:`KrausFamily` and a ``memory`` they are built from the
    operator labels; without a memory only the ensemble is returned.
    """
    dims = tuple(rho.dims)
    if isinstance(measurement, IndirectMeasurement):
        memory = measurement.memory
        family = kraus_from_dilation(measurement)
    elif isinstance(measurement, KrausFamily):
        family = measurement
    else:
        raise TypeError(f"unsupported measurement {type(measurement).__name__}")

    probs, states = _kraus_route(family, rho, target)
    joint = None
    if isinstance(measurement, IndirectMeasurement):
        full = tensor(rho, memory.initial_state)
        n = len(dims)
        evolved = conjugate(measurement.joint_unitary, full.matrix, full.dims, [target, n])
        joint = {}
        for k in range(memory.n_blocks):
            proj = np.kron(np.eye(rho.dim), memory.projector(k))
            pk = proj @ evolved @ proj
            p = float(np.trace(pk).real)
            if abs(p - probs.get(k, 0.0)) > CROSS_CHECK_TOL:
                raise QuantumStateError(f"dilation and Kraus probabilities disagree for outcome {k}")
            if k not in probs:
                continue
            joint[k] = pk
            reduced = kernels.ptrace(pk, full.dims, tuple(range(n)))
            if np.max(np.abs(reduced - states[k])) > CROSS_CHECK_TOL:
                raise QuantumStateError(f"dilation and Kraus post-states disagree for outcome {k}")
    elif memory is not None:
        joint = _joint_from_labels(family, rho, target, memory)

    kept = [k for k in probs if probs[k] >= PROB_DROP]
    ens = OutcomeEnsemble(
        tuple(Outcome(k, probs[k], _trusted(states[k] / probs[k], dims)) for k in kept)
    )
    joint_states = None
    if joint is not None:
        jd = dims + (memory.dim,)
        joint_states = {k: _trusted(joint[k] / probs[k], jd) for k in kept}
    return MeasurementRecord(ens, joint_states, family, memory)


def second_round(families: Mapping, first_round: OutcomeEnsemble, memory: MemoryModel | None = None):
    """Measure B of each post-feedback state rho_f(k) with the k-dependent family.

    Returns a :class:`~demonforge.infotheory.TwoRoundEnsemble`.
    """
    from .infotheory import TwoRoundEnsemble

    rows = []
    for o in first_round.outcomes:
        if o.label not in families:
            raise QuantumStateError(f"no second-round measurement for outcome {o.label!r}")
        rec = apply_measurement(families[o.label], o.state, target=1, memory=memory)
        for oo in rec.ensemble.outcomes:
            rows.append((o.label, oo.label, o.probability, oo.probability, oo.state))
    return TwoRoundEnsemble(tuple(rows), first_round)


def controlled_readout(dim_system: int, n_outcomes: int | None = None) -> np.ndarray:
    """Unitary on S (x) M copying the computational basis of S into a register.

    |j>|m> -> |j>|m + j mod n>; with memory in |0> this is a projective
    measurement (CNOT for qubits).
    """
    n = dim_system if n_outcomes is None else n_outcomes
    d = dim_system * n
    u = np.zeros((d, d))
    for j in range(dim_system):
        for m in range(n):
            u[j * n + (m + j) % n, j * n + m] = 1.0
    return u


def weak_readout(theta: float) -> np.ndarray:
    """Qubit dilation with M_0 = diag(cos t, sin t), M_1 = diag(sin t, cos t).

    theta = 0 is the projective measurement, theta = pi/4 carries no information.
    """
    c, s = np.cos(theta), np.sin(theta)
    r0 = np.array([[c, -s], [s, c]])
    r1 = np.array([[s, c], [c, -s]])
    return np.kron(np.diag([1.0, 0.0]), r0) + np.kron(np.diag([0.0, 1.0]), r1)
