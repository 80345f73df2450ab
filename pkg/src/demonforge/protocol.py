"""Measurement, feedback and erasure cycle on a bipartite system with a memory.

Subsystem ordering inside every joint state is ``(A, B, M)``; a second-round
memory is appended after ``M``.  The total Hamiltonian of the composite is the
non-interacting sum of the subsystem Hamiltonians.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Mapping

import numpy as np

from . import infotheory as it
from .measurement import (
    IndirectMeasurement,
    KrausFamily,
    MemoryModel,
    apply_measurement,
    kraus_from_dilation,
)
from .qlinalg import (
    DensityOperator,
    HermitianOperator,
    QuantumStateError,
    _trusted,
    canonical_state,
    check_unitary,
    conjugate,
    cross_entropy,
    hermitian_eig,
    is_canonical,
    partial_trace,
    relative_entropy,
    tensor,
    trace_distance,
    von_neumann_entropy,
)

CROSS_CHECK_TOL = 1e-8
CANONICAL_TOL = 1e-9
LEAKAGE_TOL = 1e-6
UNITARY_TOL = 1e-9

RECIPES = ("canonical-product", "thermal-entangled", "classical-correlated", "explicit", "preamble")


class ScenarioError(QuantumStateError):
    """Invalid scenario; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class ConsistencyError(RuntimeError):
    """Two independent evaluations of the same quantity disagree."""


def _herm(h, path: str) -> HermitianOperator:
    try:
        return h if isinstance(h, HermitianOperator) else HermitianOperator(h)
    except QuantumStateError as exc:
        raise ScenarioError(path, str(exc)) from None


def _unitary(u, dim: int, path: str) -> np.ndarray:
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (dim, dim):
        raise ScenarioError(path, f"expected a {dim}x{dim} unitary, got shape {u.shape}")
    try:
        u = check_unitary(u, UNITARY_TOL, "matrix").copy()
    except QuantumStateError as exc:
        raise ScenarioError(path, str(exc)) from None
    u.setflags(write=False)
    return u


def _density(rho, dim: int, path: str) -> DensityOperator:
    try:
        rho = rho if isinstance(rho, DensityOperator) else DensityOperator(rho)
    except QuantumStateError as exc:
        raise ScenarioError(path, str(exc)) from None
    if rho.dim != dim:
        raise ScenarioError(path, f"expected dimension {dim}, got {rho.dim}")
    return rho


def _as_density(rho) -> DensityOperator:
    return rho if isinstance(rho, DensityOperator) else DensityOperator(rho)


def _sum_hamiltonian(h_a: HermitianOperator, h_b: HermitianOperator) -> HermitianOperator:
    return HermitianOperator(np.kron(h_a.matrix, np.eye(h_b.dim)) + np.kron(np.eye(h_a.dim), h_b.matrix))


def _energy(rho, h) -> float:
    m = rho.matrix if isinstance(rho, DensityOperator) else rho
    return float(np.real(np.vdot(h.matrix, m)))  # Tr[H rho] for Hermitian H


# --------------------------------------------------------------------------- plans


@dataclass(frozen=True, eq=False)
class FeedbackPlan:
    """Outcome-conditioned feedback unitaries and final Hamiltonians.

    ``mode == "local"``: ``unitaries[k] = (U_A, U_B)``,
    ``final_hamiltonians[k] = (H_A, H_B)`` and optional
    ``references[k] = (rho_r^A, rho_r^B)``.

    ``mode == "nonlocal"``: single operators on A (x) B in each slot.
    """

    mode: str
    unitaries: dict
    final_hamiltonians: dict
    references: dict | None = None

    def __post_init__(self):
        if self.mode not in ("local", "nonlocal"):
            raise ScenarioError("feedback.mode", f"unknown mode {self.mode!r}")
        if set(self.unitaries) != set(self.final_hamiltonians):
            raise ScenarioError("feedback", "unitaries and final Hamiltonians cover different outcomes")

    @property
    def local(self) -> bool:
        return self.mode == "local"

    def validated(self, dims) -> "FeedbackPlan":
        d_a, d_b = dims
        us, hs, rs = {}, {}, None
        for k in self.unitaries:
            p = f"feedback.outcomes[{k}]"
            if self.local:
                ua, ub = self.unitaries[k]
                ha, hb = self.final_hamiltonians[k]
                us[k] = (_unitary(ua, d_a, p + ".unitary_A"), _unitary(ub, d_b, p + ".unitary_B"))
                ha, hb = _herm(ha, p + ".hamiltonian_A"), _herm(hb, p + ".hamiltonian_B")
                if ha.dim != d_a or hb.dim != d_b:
                    raise ScenarioError(p, "final Hamiltonian dimensions do not match dims")
                hs[k] = (ha, hb)
            else:
                us[k] = _unitary(self.unitaries[k], d_a * d_b, p + ".unitary_AB")
                h = _herm(self.final_hamiltonians[k], p + ".hamiltonian_AB")
                if h.dim != d_a * d_b:
                    raise ScenarioError(p + ".hamiltonian_AB", f"expected dimension {d_a * d_b}")
                hs[k] = h
        if self.references is not None:
            rs = {}
            for k, ref in self.references.items():
                p = f"feedback.outcomes[{k}].reference"
                if k not in us:
                    raise ScenarioError(p, "reference given for an outcome without a plan entry")
                if self.local:
                    rs[k] = (_density(ref[0], d_a, p + "_A"), _density(ref[1], d_b, p + "_B"))
                else:
                    rs[k] = _density(ref, d_a * d_b, p + "_AB")
        return FeedbackPlan(self.mode, us, hs, rs)

    def lifted(self) -> "FeedbackPlan":
        """The same local plan written as a nonlocal one (U_A (x) U_B, H_A (x) 1 + 1 (x) H_B)."""
        if not self.local:
            return self
        us = {k: np.kron(np.asarray(a), np.asarray(b)) for k, (a, b) in self.unitaries.items()}
        hs = {k: _sum_hamiltonian(_herm(a, ""), _herm(b, "")) for k, (a, b) in self.final_hamiltonians.items()}
        rs = None
        if self.references is not None:
            rs = {k: tensor(_as_density(a), _as_density(b)) for k, (a, b) in self.references.items()}
        return FeedbackPlan("nonlocal", us, hs, rs)

    @classmethod
    def identity(cls, dims, outcomes, h_a, h_b) -> "FeedbackPlan":
        """Do-nothing local plan keeping the initial Hamiltonians."""
        d_a, d_b = dims
        return cls(
            "local",
            {k: (np.eye(d_a), np.eye(d_b)) for k in outcomes},
            {k: (h_a, h_b) for k in outcomes},
        )


@dataclass(frozen=True, eq=False)
class ErasureModel:
    """``idealized`` saturates the erasure bound; ``explicit`` evolves M with a bath R."""

    variant: str = "idealized"
    bath_hamiltonian: HermitianOperator | None = None
    unitary: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in ("idealized", "explicit"):
            raise ScenarioError("erasure.variant", f"unknown erasure variant {self.variant!r}")
        if self.variant == "explicit":
            if self.bath_hamiltonian is None or self.unitary is None:
                raise ScenarioError("erasure", "explicit erasure needs a bath Hamiltonian and a unitary")
            object.__setattr__(self, "bath_hamiltonian", _herm(self.bath_hamiltonian, "erasure.bath_hamiltonian"))

    def validated(self, memory_dim: int) -> "ErasureModel":
        if self.variant == "idealized":
            return self
        d = memory_dim * self.bath_hamiltonian.dim
        return ErasureModel("explicit", self.bath_hamiltonian, _unitary(self.unitary, d, "erasure.unitary"))


@dataclass(frozen=True, eq=False)
class InitialState:
    """Recipe for the initial state of A (x) B.

    ``canonical-product``
        rho_can^A (x) rho_can^B.
    ``thermal-entangled``
        Pure state with canonical marginals; needs equal spectra of H_A, H_B.
    ``classical-correlated``
        sum_k w_k |kk><kk| from ``weights``.
    ``explicit``
        ``matrix`` on A (x) B; no creation stage.
    ``preamble``
        U (rho_A (x) rho_B) U^dagger from ``rho_a``, ``rho_b``, ``unitary`` and
        optional ``references`` for the creation-cost accounting.
    """

    recipe: str = "canonical-product"
    weights: tuple | None = None
    matrix: np.ndarray | None = None
    rho_a: np.ndarray | None = None
    rho_b: np.ndarray | None = None
    unitary: np.ndarray | None = None
    references: tuple | None = None

    def __post_init__(self):
        if self.recipe not in RECIPES:
            raise ScenarioError("initial_state.recipe", f"unknown recipe {self.recipe!r}; expected one of {RECIPES}")


@dataclass(frozen=True, eq=False)
class SecondRound:
    """Measurement of B conditioned on the first outcome, with its own memory.

    ``feedback[(k, l)] = (U_A, U_B)`` and ``final_hamiltonians[(k, l)]`` default
    to identities and to the first-round final Hamiltonians.
    """

    measurements: dict
    memory: MemoryModel
    feedback: dict = field(default_factory=dict)
    final_hamiltonians: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class Scenario:
    beta: float
    dims: tuple
    h_a: HermitianOperator
    h_b: HermitianOperator
    initial: InitialState
    memory: MemoryModel
    measurement: object
    feedback: FeedbackPlan
    erasure: ErasureModel = field(default_factory=ErasureModel)
    second_round: SecondRound | None = None
    name: str = ""
    optimize: dict | None = None

    def __post_init__(self):
        beta = float(self.beta)
        if not (np.isfinite(beta) and beta > 0):
            raise ScenarioError("beta", f"must be finite and positive, got {self.beta!r}")
        object.__setattr__(self, "beta", beta)
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 2 or min(dims) < 1:
            raise ScenarioError("dims", f"expected two positive subsystem dimensions, got {self.dims!r}")
        object.__setattr__(self, "dims", dims)
        h_a, h_b = _herm(self.h_a, "hamiltonians.A"), _herm(self.h_b, "hamiltonians.B")
        if h_a.dim != dims[0]:
            raise ScenarioError("hamiltonians.A", f"dimension {h_a.dim} does not match dims[0] = {dims[0]}")
        if h_b.dim != dims[1]:
            raise ScenarioError("hamiltonians.B", f"dimension {h_b.dim} does not match dims[1] = {dims[1]}")
        object.__setattr__(self, "h_a", h_a)
        object.__setattr__(self, "h_b", h_b)
        if not isinstance(self.initial, InitialState):
            raise ScenarioError("initial_state", "expected an InitialState")
        _check_initial(self.initial, dims)

        outcomes = _check_measurement(self.measurement, self.memory, dims[0], "measurement")
        plan = self.feedback.validated(dims)
        missing = [k for k in outcomes if k not in plan.unitaries]
        if missing:
            raise ScenarioError("feedback", f"no plan entry for outcomes {missing}")
        object.__setattr__(self, "feedback", plan)
        object.__setattr__(self, "erasure", self.erasure.validated(self.memory.dim))

        if self.second_round is not None:
            sr = self.second_round
            for k in outcomes:
                if k not in sr.measurements:
                    raise ScenarioError("second_round.measurements", f"no measurement for outcome {k}")
                _check_measurement(sr.measurements[k], sr.memory, dims[1], f"second_round.measurements[{k}]")
            fb = {}
            for key, (ua, ub) in sr.feedback.items():
                p = f"second_round.feedback[{key}]"
                fb[tuple(key)] = (_unitary(ua, dims[0], p + ".unitary_A"), _unitary(ub, dims[1], p + ".unitary_B"))
            hs = {}
            for key, (ha, hb) in sr.final_hamiltonians.items():
                p = f"second_round.final_hamiltonians[{key}]"
                ha, hb = _herm(ha, p + ".A"), _herm(hb, p + ".B")
                if (ha.dim, hb.dim) != dims:
                    raise ScenarioError(p, "dimensions do not match dims")
                hs[tuple(key)] = (ha, hb)
            object.__setattr__(self, "second_round", SecondRound(sr.measurements, sr.memory, fb, hs))

    @property
    def outcomes(self) -> list:
        return _outcome_labels(self.measurement)

    def replace(self, **changes) -> "Scenario":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return Scenario(**kw)


def _check_initial(ini: InitialState, dims) -> None:
    d_a, d_b = dims
    if ini.recipe == "thermal-entangled" and d_a != d_b:
        raise ScenarioError("initial_state", "thermal entangled state needs equal subsystem dimensions")
    if ini.recipe == "classical-correlated":
        w = np.asarray(ini.weights if ini.weights is not None else (), dtype=float)
        if w.ndim != 1 or len(w) < 1 or len(w) > min(d_a, d_b):
            raise ScenarioError("initial_state.weights", f"expected between 1 and {min(d_a, d_b)} weights")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ScenarioError("initial_state.weights", "weights must be nonnegative and sum to 1")
    elif ini.recipe == "explicit":
        if ini.matrix is None:
            raise ScenarioError("initial_state.matrix", "explicit recipe needs a matrix")
        _density(ini.matrix, d_a * d_b, "initial_state.matrix")
    elif ini.recipe == "preamble":
        for name, value, d in (("rho_A", ini.rho_a, d_a), ("rho_B", ini.rho_b, d_b)):
            if value is None:
                raise ScenarioError(f"initial_state.{name}", "preamble recipe needs both local states")
            _density(value, d, f"initial_state.{name}")
        if ini.unitary is None:
            raise ScenarioError("initial_state.unitary", "preamble recipe needs a unitary")
        _unitary(ini.unitary, d_a * d_b, "initial_state.unitary")
        if ini.references is not None:
            if len(ini.references) != 2:
                raise ScenarioError("initial_state.references", "expected two reference states")
            _density(ini.references[0], d_a, "initial_state.references[0]")
            _density(ini.references[1], d_b, "initial_state.references[1]")


def _outcome_labels(measurement) -> list:
    fam = kraus_from_dilation(measurement) if isinstance(measurement, IndirectMeasurement) else measurement
    return sorted(fam.outcomes)


def _check_measurement(meas, memory, dim_system, path) -> list:
    if not isinstance(memory, MemoryModel):
        raise ScenarioError(path + ".memory", "expected a MemoryModel")
    if isinstance(meas, IndirectMeasurement):
        if meas.dim_system != dim_system:
            raise ScenarioError(path, f"dilation acts on dimension {meas.dim_system}, system has {dim_system}")
        if meas.memory.block_dims != memory.block_dims:
            raise ScenarioError(path + ".memory", "dilation memory differs from the scenario memory")
        return _outcome_labels(meas)
    if isinstance(meas, KrausFamily):
        if meas.dim != dim_system:
            raise ScenarioError(path, f"Kraus operators act on dimension {meas.dim}, system has {dim_system}")
        if not memory.is_pure_initial():
            raise ScenarioError(path + ".memory.initial_state", "a Kraus measurement needs a pure memory initial state")
        for k, ops in meas.operators.items():
            if not isinstance(k, (int, np.integer)) or not 0 <= k < memory.n_blocks:
                raise ScenarioError(path, f"outcome {k!r} is not a memory block index")
            if len(ops) > memory.block_dims[k]:
                raise ScenarioError(path, f"outcome {k} has {len(ops)} operators but memory block {k} has dimension {memory.block_dims[k]}")
        return sorted(meas.outcomes)
    raise ScenarioError(path, f"unsupported measurement type {type(meas).__name__}")


# --------------------------------------------------------------------------- initial states


@dataclass(frozen=True, eq=False)
class PreambleResult:
    """Correlation-creation stage: rho_i = U (rho_A (x) rho_B) U^dagger."""

    rho_i: DensityOperator
    sigma_ent_a: float
    sigma_ent_b: float
    rho_a: DensityOperator
    rho_b: DensityOperator
    unitary: np.ndarray
    ref_a: DensityOperator
    ref_b: DensityOperator
    equality_references: bool


def thermal_entangled_state(h, beta: float, h_b=None) -> DensityOperator:
    """Z^{-1/2} sum_k exp(-beta e_k / 2) |k>_A |k>_B in the energy eigenbases.

    ``h_b`` defaults to ``h``; it must have the same spectrum.
    """
    psi = _thermal_vector(h, beta, h_b)
    d = int(round(np.sqrt(len(psi))))
    return DensityOperator.pure(psi, (d, d))


def _thermal_vector(h, beta, h_b=None) -> np.ndarray:
    h = _herm(h, "hamiltonian")
    w, v = hermitian_eig(h.matrix)
    if h_b is None:
        vb = v
    else:
        wb, vb = hermitian_eig(_herm(h_b, "hamiltonian_B").matrix)
        if wb.shape != w.shape or np.max(np.abs(wb - w)) > 1e-10:
            raise ScenarioError("hamiltonians", "thermal entangled state needs equal spectra on A and B")
    amps = np.exp(-0.5 * beta * (w - w[0]))
    amps /= np.linalg.norm(amps)
    return sum(a * np.kron(v[:, k], vb[:, k]) for k, a in enumerate(amps))


def _complete_unitary(first_column: np.ndarray) -> np.ndarray:
    """Unitary whose first column is the given unit vector."""
    d = len(first_column)
    m = np.eye(d, dtype=np.complex128)
    m[:, 0] = first_column
    q, r = np.linalg.qr(m)
    # QR fixes the column only up to a phase
    return q * (np.conj(np.sign(r[0, 0])) if r[0, 0] != 0 else 1.0)


def entanglement_preamble(rho_a, rho_b, u_ab, ref_a=None, ref_b=None) -> PreambleResult:
    """Create correlation by a joint unitary and charge its entropy cost.

    With the default references (the post-preamble marginals) the two costs sum
    to I(A:B) of the result.
    """
    rho_a = rho_a if isinstance(rho_a, DensityOperator) else DensityOperator(rho_a)
    rho_b = rho_b if isinstance(rho_b, DensityOperator) else DensityOperator(rho_b)
    d = rho_a.dim * rho_b.dim
    u = _unitary(u_ab, d, "initial_state.unitary")
    prod = tensor(rho_a, rho_b)
    rho_i = _trusted(conjugate(u, prod.matrix, prod.dims, [0, 1]), prod.dims)
    ma, mb = partial_trace(rho_i, (0,)), partial_trace(rho_i, (1,))
    equality = ref_a is None and ref_b is None
    ra = ma if ref_a is None else _density(ref_a, rho_a.dim, "initial_state.references[0]")
    rb = mb if ref_b is None else _density(ref_b, rho_b.dim, "initial_state.references[1]")
    s_a = cross_entropy(ma.matrix, ra.matrix) - von_neumann_entropy(rho_a)
    s_b = cross_entropy(mb.matrix, rb.matrix) - von_neumann_entropy(rho_b)
    return PreambleResult(rho_i, s_a, s_b, rho_a, rho_b, u, ra, rb, equality)


def _shift_unitary(d_a: int, d_b: int) -> np.ndarray:
    """|a, b> -> |a, (a + b) mod d_B>."""
    u = np.zeros((d_a * d_b, d_a * d_b))
    for a in range(d_a):
        for b in range(d_b):
            u[a * d_b + (a + b) % d_b, a * d_b + b] = 1.0
    return u


def prepare_initial(s: Scenario):
    """Return ``(rho_i, preamble or None)`` for the scenario's recipe."""
    d_a, d_b = s.dims
    ini = s.initial
    if ini.recipe == "canonical-product":
        ca, _ = canonical_state(s.h_a, s.beta)
        cb, _ = canonical_state(s.h_b, s.beta)
        pre = entanglement_preamble(ca, cb, np.eye(d_a * d_b))
        return pre.rho_i, pre
    if ini.recipe == "thermal-entangled":
        if d_a != d_b:
            raise ScenarioError("initial_state", "thermal entangled state needs equal subsystem dimensions")
        u = _complete_unitary(_thermal_vector(s.h_a, s.beta, s.h_b))
        pre = entanglement_preamble(DensityOperator.basis(d_a, 0), DensityOperator.basis(d_b, 0), u)
        return pre.rho_i, pre
    if ini.recipe == "classical-correlated":
        w = np.asarray(ini.weights, dtype=float)
        if w.ndim != 1 or len(w) < 1 or len(w) > min(d_a, d_b):
            raise ScenarioError("initial_state.weights", f"expected between 1 and {min(d_a, d_b)} weights")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ScenarioError("initial_state.weights", "weights must be nonnegative and sum to 1")
        ra = np.zeros((d_a, d_a))
        ra[np.arange(len(w)), np.arange(len(w))] = w
        pre = entanglement_preamble(DensityOperator(ra), DensityOperator.basis(d_b, 0), _shift_unitary(d_a, d_b))
        return pre.rho_i, pre
    if ini.recipe == "explicit":
        rho = _density(ini.matrix, d_a * d_b, "initial_state.matrix")
        return DensityOperator(rho.matrix, s.dims, validate=False), None
    # preamble
    ra = _density(ini.rho_a, d_a, "initial_state.rho_a")
    rb = _density(ini.rho_b, d_b, "initial_state.rho_b")
    refs = ini.references or (None, None)
    pre = entanglement_preamble(ra, rb, ini.unitary, refs[0], refs[1])
    return pre.rho_i, pre


# --------------------------------------------------------------------------- ledgers


@dataclass(frozen=True, eq=False)
class LoccLedger:
    """Two-round quantities; works and free energies refer to the whole LOCC cycle."""

    labels: tuple  # (k, l) pairs
    probabilities: dict
    conditionals: dict
    rho_ab_kl: dict
    rho_ab_f_kl: dict
    rho_m_kl: dict
    i_a_xy: float
    i_b_xy: float
    i_ab_xy: float
    h_xy: float
    residual_conditional_mi: float
    chain_residuals: dict
    w_a: float
    w_b: float
    w_mes: float
    w_ers: float
    w_net: float
    df_a: float
    df_b: float
    df_ab: float
    df_m: float
    sigma_a: float
    sigma_b: float
    sigma_mes: float
    sigma_net: float
    info_part: float
    one_round_info_part: float
    rhs: float
    one_round_rhs: float
    memory2_initial_canonical: bool
    checks: dict


@dataclass(frozen=True, eq=False)
class RunLedger:
    """Everything one protocol execution produced.

    Works and heats are in energy units; entropies and informations in nats.
    Fields that do not apply to the run (e.g. ``w_a`` under nonlocal feedback)
    are ``None``.
    """

    name: str
    beta: float
    dims: tuple
    mode: str
    recipe: str
    erasure_variant: str
    efficient: bool
    labels: tuple
    probabilities: dict
    # states
    rho_i: DensityOperator
    rho_ab: dict
    rho_abm: dict
    rho_ab_f: dict
    rho_abm_f: dict
    rho_m: dict
    rho_m_0: DensityOperator
    rho_m_f: DensityOperator
    rho_m_ers: DensityOperator
    rho_r_ers: DensityOperator | None
    references_a: dict | None
    references_b: dict | None
    references_ab: dict
    references_m: dict
    # works, heat and free energies
    w_a: float | None
    w_b: float | None
    w_ab: float
    w_mes: float
    w_ers: float
    w_net: float
    q_ers: float | None
    df_a: float | None
    df_b: float | None
    df_ab: float
    df_m: float
    apparatus_energy_delta: float
    # entropy production
    sigma_a: float | None
    sigma_b: float | None
    sigma_mes: float
    sigma_ers: float
    sigma_net: float | None
    sigma_ab_prime: float
    sigma_cycle: float | None
    sigma_cycle_prime: float
    sigma_ent_a: float | None
    sigma_ent_b: float | None
    delta_s: float
    mes_relative_entropy: float
    # information
    i_a_x: float
    i_b_x: float
    i_ab_x: float
    i_ab: float
    i_ab_given_x: float
    h_x: float
    # equality-distance hints
    td_a: float | None
    td_b: float | None
    td_ab: float
    td_mes: float
    erasure_leakage: float
    # applicability flags
    canonical_initial: bool
    default_references: bool
    memory_initial_canonical: bool
    memory_post_canonical: bool
    erasure_ok: bool
    preamble: PreambleResult | None
    checks: dict
    locc: LoccLedger | None = None

    @property
    def local(self) -> bool:
        return self.mode == "local"

    @property
    def has_preamble(self) -> bool:
        return self.preamble is not None

    @property
    def w_net_bound_info_part(self) -> float:
        """I(A:B) - I(A:B|X), the information part of the net-work bound (nats)."""
        return self.i_ab - self.i_ab_given_x

    def scalars(self) -> dict:
        """Every scalar field in declaration order."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None or isinstance(v, (bool, int, float, str, np.floating, np.bool_)):
                out[f.name] = v.item() if isinstance(v, (np.floating, np.bool_)) else v
        return out


def _check(checks: dict, name: str, a: float, b: float):
    if not (np.isfinite(a) and np.isfinite(b)):
        return
    res = abs(a - b)
    checks[name] = res
    if res > CROSS_CHECK_TOL * max(1.0, abs(a), abs(b)):
        raise ConsistencyError(f"{name}: independent evaluations differ by {res:.3g} ({a!r} vs {b!r})")


def _local_feedback_op(plan: FeedbackPlan, k):
    if plan.local:
        ua, ub = plan.unitaries[k]
        return np.kron(ua, ub)
    return plan.unitaries[k]


def _subsystem_side(beta, rho_i_x, h_i, probs, finals, hams, refs):
    """Work, free-energy change and entropy production for one subsystem (or AB)."""
    f_i = canonical_state(h_i, beta)[1]
    w = _energy(rho_i_x, h_i)
    df = -f_i
    ce = 0.0
    td = 0.0
    for k, p in probs.items():
        w -= p * _energy(finals[k], hams[k])
        df += p * canonical_state(hams[k], beta)[1]
        ce += p * cross_entropy(finals[k].matrix, refs[k].matrix)
        td += p * trace_distance(finals[k].matrix, refs[k].matrix)
    return w, df, ce, td


def _default_refs(beta, hams, supplied):
    return {k: (supplied[k] if supplied is not None and k in supplied else canonical_state(h, beta)[0])
            for k, h in hams.items()}


def run_protocol(s: Scenario) -> RunLedger:
    """Execute measurement, feedback and erasure and record every quantity."""
    beta = s.beta
    d_a, d_b = s.dims
    mem = s.memory
    checks: dict = {}

    rho_i, pre = prepare_initial(s)
    rho_a_i, rho_b_i = partial_trace(rho_i, (0,)), partial_trace(rho_i, (1,))
    canonical_initial = is_canonical(rho_a_i, s.h_a, beta, CANONICAL_TOL) and is_canonical(rho_b_i, s.h_b, beta, CANONICAL_TOL)
    if s.initial.recipe in ("canonical-product", "thermal-entangled") and not canonical_initial:
        raise ConsistencyError(f"recipe {s.initial.recipe!r} produced non-canonical marginals")

    # step 2: measurement
    rec = apply_measurement(s.measurement, rho_i, target=0, memory=mem)
    ens = rec.ensemble
    labels = tuple(ens.labels)
    probs = {o.label: o.probability for o in ens.outcomes}
    rho_ab = {o.label: o.state for o in ens.outcomes}
    rho_abm = rec.joint_states

    # step 3: feedback
    plan = s.feedback
    jd = (d_a, d_b, mem.dim)
    rho_abm_f, rho_ab_f, rho_m = {}, {}, {}
    for k in labels:
        u = _local_feedback_op(plan, k)
        rho_abm_f[k] = _trusted(conjugate(u, rho_abm[k].matrix, jd, [0, 1]), jd)
        rho_ab_f[k] = partial_trace(rho_abm_f[k], (0, 1))
        rho_m[k] = partial_trace(rho_abm[k], (2,))

    # information content
    i_a_x = it.subsystem_information(rho_i, ens, "A")
    i_b_x = it.subsystem_information(rho_i, ens, "B")
    i_ab_x = it.subsystem_information(rho_i, ens, "AB")
    i_ab = it.mutual_information(rho_i)
    i_ab_given_x = it.conditional_mutual_information(ens)
    h_x = it.shannon_entropy(ens)
    checks["balance_identity"] = it.balance_identity_residual(rho_i, ens)

    s_ab_i = von_neumann_entropy(rho_i)
    h_ab_i = _sum_hamiltonian(s.h_a, s.h_b)
    supplied = plan.references

    if plan.local:
        fa = {k: partial_trace(rho_ab_f[k], (0,)) for k in labels}
        fb = {k: partial_trace(rho_ab_f[k], (1,)) for k in labels}
        ha = {k: plan.final_hamiltonians[k][0] for k in labels}
        hb = {k: plan.final_hamiltonians[k][1] for k in labels}
        refs_a = _default_refs(beta, ha, None if supplied is None else {k: r[0] for k, r in supplied.items()})
        refs_b = _default_refs(beta, hb, None if supplied is None else {k: r[1] for k, r in supplied.items()})
        w_a, df_a, ce_a, td_a = _subsystem_side(beta, rho_a_i, s.h_a, probs, fa, ha, refs_a)
        w_b, df_b, ce_b, td_b = _subsystem_side(beta, rho_b_i, s.h_b, probs, fb, hb, refs_b)
        sigma_a = ce_a - von_neumann_entropy(rho_a_i)
        sigma_b = ce_b - von_neumann_entropy(rho_b_i)
        refs_ab = {k: tensor(refs_a[k], refs_b[k]) for k in labels}
        h_ab_f = {k: _sum_hamiltonian(ha[k], hb[k]) for k in labels}
        w_ab, df_ab = w_a + w_b, df_a + df_b
        for k in labels:
            _check(checks, f"feedback_preserves_entropy_A[{k}]", von_neumann_entropy(fa[k]),
                   von_neumann_entropy(partial_trace(rho_ab[k], (0,))))
    else:
        w_a = w_b = df_a = df_b = sigma_a = sigma_b = td_a = td_b = None
        refs_a = refs_b = None
        h_ab_f = dict(plan.final_hamiltonians)
        refs_ab = _default_refs(beta, h_ab_f, supplied)
        w_ab, df_ab, _, _ = _subsystem_side(beta, rho_i, h_ab_i, probs, rho_ab_f, h_ab_f, refs_ab)
        # the free energy of the non-interacting initial Hamiltonian splits over A and B
    default_references = supplied is None

    ce_ab = sum(probs[k] * cross_entropy(rho_ab_f[k].matrix, refs_ab[k].matrix) for k in labels)
    td_ab = sum(probs[k] * trace_distance(rho_ab_f[k].matrix, refs_ab[k].matrix) for k in labels)
    sigma_ab_prime = ce_ab - s_ab_i
    if canonical_initial and default_references:
        if plan.local:
            _check(checks, "sigma_A_work_form", sigma_a, -beta * w_a - beta * df_a)
            _check(checks, "sigma_B_work_form", sigma_b, -beta * w_b - beta * df_b)
        _check(checks, "sigma_AB_prime_work_form", sigma_ab_prime, -beta * w_ab - beta * df_ab + i_ab)

    # memory accounting
    h_m = mem.hamiltonian
    rho_m_0 = mem.initial_state
    e_m0 = _energy(rho_m_0, h_m)
    f_m0 = mem.block_canonical(mem.standard_block, beta)[1]
    refs_m, f_mk = {}, {}
    for k in labels:
        refs_m[k], f_mk[k] = mem.block_canonical(k, beta)
    rho_m_f = _trusted(sum(probs[k] * rho_m[k].matrix for k in labels), (mem.dim,))
    w_mes = sum(probs[k] * _energy(rho_m[k], h_m) for k in labels) - e_m0
    df_m = sum(probs[k] * f_mk[k] for k in labels) - f_m0
    rho_m_r = sum(probs[k] * refs_m[k].matrix for k in labels)
    s_m0 = von_neumann_entropy(rho_m_0)
    sigma_mes = cross_entropy(rho_m_f.matrix, rho_m_r) - s_m0
    memory_initial_canonical = mem.initial_is_canonical(beta, CANONICAL_TOL)
    memory_post_canonical = all(
        np.max(np.abs(rho_m[k].matrix - refs_m[k].matrix)) <= CANONICAL_TOL for k in labels
    )
    if memory_initial_canonical:
        _check(checks, "sigma_mes_work_form", sigma_mes, h_x + beta * w_mes - beta * df_m)

    rho_abm_f_avg = sum(probs[k] * rho_abm_f[k].matrix for k in labels)
    delta_s = von_neumann_entropy(rho_abm_f_avg) - s_ab_i - s_m0
    mes_rel, td_mes = 0.0, 0.0
    for k in labels:
        prod = np.kron(rho_ab_f[k].matrix, refs_m[k].matrix)
        mes_rel += probs[k] * relative_entropy(rho_abm_f[k].matrix, prod)
        td_mes += probs[k] * trace_distance(rho_abm_f[k].matrix, prod)
    _check(checks, "sigma_mes_decomposition", sigma_mes - i_ab_x, delta_s + mes_rel)

    apparatus = sum(probs[k] * _energy(partial_trace(rho_ab[k], (0,)), s.h_a) for k in labels) - _energy(rho_a_i, s.h_a)

    # step 4: erasure
    er = s.erasure
    if er.variant == "idealized":
        w_ers = h_x / beta - df_m
        rho_m_ers, rho_r_ers, q_ers = rho_m_0, None, None
        sigma_ers, leakage = 0.0, 0.0
    else:
        h_r = er.bath_hamiltonian
        rho_r, _ = canonical_state(h_r, beta)
        d_r = h_r.dim
        mr = conjugate(er.unitary, np.kron(rho_m_f.matrix, rho_r.matrix), (mem.dim, d_r), [0, 1])
        mr = _trusted(mr, (mem.dim, d_r))
        rho_m_ers = partial_trace(mr, (0,))
        rho_r_ers = partial_trace(mr, (1,))
        q_ers = _energy(rho_r, h_r) - _energy(rho_r_ers, h_r)
        sigma_ers = von_neumann_entropy(rho_m_ers) - von_neumann_entropy(rho_m_f) - beta * q_ers
        _check(checks, "sigma_ers_relative_form", sigma_ers,
               relative_entropy(mr.matrix, np.kron(rho_m_ers.matrix, rho_r.matrix)))
        w_ers = _energy(rho_m_ers, h_m) - _energy(rho_m_f, h_m) - q_ers
        leakage = max(0.0, 1.0 - float(np.trace(mem.projector(mem.standard_block) @ rho_m_ers.matrix).real))
    erasure_ok = leakage <= LEAKAGE_TOL

    if plan.local:
        w_net = w_a + w_b - w_mes - w_ers
        sigma_net = sigma_a + sigma_b + sigma_mes
    else:
        w_net = w_ab - w_mes - w_ers
        sigma_net = None
    sigma_cycle_prime = sigma_ab_prime + sigma_mes
    sigma_ent_a = pre.sigma_ent_a if pre is not None else None
    sigma_ent_b = pre.sigma_ent_b if pre is not None else None
    sigma_cycle = None
    if pre is not None and sigma_net is not None:
        sigma_cycle = sigma_ent_a + sigma_ent_b + sigma_net

    return RunLedger(
        name=s.name, beta=beta, dims=s.dims, mode=plan.mode, recipe=s.initial.recipe,
        erasure_variant=er.variant, efficient=rec.efficient, labels=labels, probabilities=probs,
        rho_i=rho_i, rho_ab=rho_ab, rho_abm=rho_abm, rho_ab_f=rho_ab_f, rho_abm_f=rho_abm_f,
        rho_m=rho_m, rho_m_0=rho_m_0, rho_m_f=rho_m_f, rho_m_ers=rho_m_ers, rho_r_ers=rho_r_ers,
        references_a=refs_a, references_b=refs_b, references_ab=refs_ab, references_m=refs_m,
        w_a=w_a, w_b=w_b, w_ab=w_ab, w_mes=w_mes, w_ers=w_ers, w_net=w_net, q_ers=q_ers,
        df_a=df_a, df_b=df_b, df_ab=df_ab, df_m=df_m, apparatus_energy_delta=apparatus,
        sigma_a=sigma_a, sigma_b=sigma_b, sigma_mes=sigma_mes, sigma_ers=sigma_ers,
        sigma_net=sigma_net, sigma_ab_prime=sigma_ab_prime, sigma_cycle=sigma_cycle,
        sigma_cycle_prime=sigma_cycle_prime, sigma_ent_a=sigma_ent_a, sigma_ent_b=sigma_ent_b,
        delta_s=delta_s, mes_relative_entropy=mes_rel,
        i_a_x=i_a_x, i_b_x=i_b_x, i_ab_x=i_ab_x, i_ab=i_ab, i_ab_given_x=i_ab_given_x, h_x=h_x,
        td_a=td_a, td_b=td_b, td_ab=td_ab, td_mes=td_mes, erasure_leakage=leakage,
        canonical_initial=canonical_initial, default_references=default_references,
        memory_initial_canonical=memory_initial_canonical, memory_post_canonical=memory_post_canonical,
        erasure_ok=erasure_ok, preamble=pre, checks=checks,
    )


def run_nonlocal(s: Scenario) -> RunLedger:
    """:func:`run_protocol` for scenarios whose feedback acts jointly on A and B."""
    if s.feedback.local:
        raise ScenarioError("feedback.mode", "run_nonlocal needs a nonlocal feedback plan")
    return run_protocol(s)


def run_locc(s: Scenario) -> RunLedger:
    """One-round ledger extended with the two-round (LOCC) quantities."""
    if s.second_round is None:
        raise ScenarioError("second_round", "run_locc needs a second-round specification")
    if not s.feedback.local:
        raise ScenarioError("feedback.mode", "two-round protocols need local first-round feedback")
    base = run_protocol(s)
    beta = s.beta
    d_a, d_b = s.dims
    sr = s.second_round
    m1, m2 = s.memory, sr.memory
    checks: dict = {}

    probs, cond, rho_ab_kl, rho_ab_f_kl, rho_m_kl, ham_kl = {}, {}, {}, {}, {}, {}
    rows = []
    jd = (d_a, d_b, m1.dim, m2.dim)
    for k in base.labels:
        rec2 = apply_measurement(sr.measurements[k], base.rho_abm_f[k], target=1, memory=m2)
        for o in rec2.ensemble.outcomes:
            l, key = o.label, (k, o.label)
            ua, ub = sr.feedback.get(key, (np.eye(d_a), np.eye(d_b)))
            abmm = rec2.joint_states[l]
            abmm_f = conjugate(np.kron(ua, ub), abmm.matrix, jd, [0, 1])
            probs[key] = base.probabilities[k] * o.probability
            cond[key] = o.probability
            rho_ab_kl[key] = partial_trace(abmm, (0, 1))
            rho_ab_f_kl[key] = _trusted(partial_trace(_trusted(abmm_f, jd), (0, 1)).matrix, (d_a, d_b))
            rho_m_kl[key] = partial_trace(abmm, (2, 3))
            ham_kl[key] = sr.final_hamiltonians.get(key, s.feedback.final_hamiltonians[k])
            rows.append((k, l, base.probabilities[k], o.probability, rho_ab_kl[key]))
    first = it.OutcomeEnsemble(tuple(it.Outcome(k, base.probabilities[k], base.rho_ab_f[k]) for k in base.labels))
    tre = it.TwoRoundEnsemble(tuple(rows), first)
    round_one = it.OutcomeEnsemble(tuple(it.Outcome(k, base.probabilities[k], base.rho_ab[k]) for k in base.labels))
    labels = tuple(probs)

    rho_i = base.rho_i
    i_xy = {w: it.two_round_information(rho_i, tre, w) for w in ("A", "B", "AB")}
    chain = {}
    for w in ("A", "B", "AB"):
        total, parts = it.two_round_chain(rho_i, round_one, tre, w)
        chain[w] = abs(total - parts)
    residual = it.residual_conditional_information(tre)
    h_xy = it.shannon_entropy(np.array([probs[key] for key in labels]))

    rho_a_i, rho_b_i = partial_trace(rho_i, (0,)), partial_trace(rho_i, (1,))
    fa = {key: partial_trace(rho_ab_f_kl[key], (0,)) for key in labels}
    fb = {key: partial_trace(rho_ab_f_kl[key], (1,)) for key in labels}
    ha = {key: ham_kl[key][0] for key in labels}
    hb = {key: ham_kl[key][1] for key in labels}
    refs_a = _default_refs(beta, ha, None)
    refs_b = _default_refs(beta, hb, None)
    w_a, df_a, ce_a, _ = _subsystem_side(beta, rho_a_i, s.h_a, probs, fa, ha, refs_a)
    w_b, df_b, ce_b, _ = _subsystem_side(beta, rho_b_i, s.h_b, probs, fb, hb, refs_b)
    sigma_a = ce_a - von_neumann_entropy(rho_a_i)
    sigma_b = ce_b - von_neumann_entropy(rho_b_i)

    # joint memory M1 (x) M2
    h_mm = HermitianOperator(np.kron(m1.hamiltonian.matrix, np.eye(m2.dim)) + np.kron(np.eye(m1.dim), m2.hamiltonian.matrix))
    rho_mm_0 = np.kron(m1.initial_state.matrix, m2.initial_state.matrix)
    f0 = m1.block_canonical(m1.standard_block, beta)[1] + m2.block_canonical(m2.standard_block, beta)[1]
    rho_mm_f = sum(probs[key] * rho_m_kl[key].matrix for key in labels)
    ref_mm = 0.0
    df_m = -f0
    for (k, l) in labels:
        c1, f1 = m1.block_canonical(k, beta)
        c2, f2 = m2.block_canonical(l, beta)
        ref_mm = ref_mm + probs[(k, l)] * np.kron(c1.matrix, c2.matrix)
        df_m += probs[(k, l)] * (f1 + f2)
    w_mes = sum(probs[key] * _energy(rho_m_kl[key], h_mm) for key in labels) - _energy(rho_mm_0, h_mm)
    sigma_mes = cross_entropy(rho_mm_f, ref_mm) - von_neumann_entropy(rho_mm_0)
    m2_canonical = m2.initial_is_canonical(beta, CANONICAL_TOL)
    if base.memory_initial_canonical and m2_canonical:
        _check(checks, "sigma_mes_work_form", sigma_mes, h_xy + beta * w_mes - beta * df_m)
    w_ers = h_xy / beta - df_m
    w_net = w_a + w_b - w_mes - w_ers
    df_ab = df_a + df_b

    info_part = base.i_ab - residual
    one_round_info = base.i_ab - base.i_ab_given_x
    return _with_locc(base, LoccLedger(
        labels=labels, probabilities=probs, conditionals=cond, rho_ab_kl=rho_ab_kl,
        rho_ab_f_kl=rho_ab_f_kl, rho_m_kl=rho_m_kl,
        i_a_xy=i_xy["A"], i_b_xy=i_xy["B"], i_ab_xy=i_xy["AB"], h_xy=h_xy,
        residual_conditional_mi=residual, chain_residuals=chain,
        w_a=w_a, w_b=w_b, w_mes=w_mes, w_ers=w_ers, w_net=w_net,
        df_a=df_a, df_b=df_b, df_ab=df_ab, df_m=df_m,
        sigma_a=sigma_a, sigma_b=sigma_b, sigma_mes=sigma_mes, sigma_net=sigma_a + sigma_b + sigma_mes,
        info_part=info_part, one_round_info_part=one_round_info,
        rhs=info_part - beta * df_ab, one_round_rhs=one_round_info - beta * base.df_ab,
        memory2_initial_canonical=m2_canonical, checks=checks,
    ))


def _with_locc(base: RunLedger, locc: LoccLedger) -> RunLedger:
    kw = {f.name: getattr(base, f.name) for f in fields(base)}
    kw["locc"] = locc
    return RunLedger(**kw)


def run(s: Scenario) -> RunLedger:
    """Dispatch to :func:`run_locc` when a second round is present."""
    return run_locc(s) if s.second_round is not None else run_protocol(s)
