"""Named demonstration scenarios.

Every builder takes ``beta``, ``gap`` (energy gap of the final qubit
Hamiltonians, so ``beta * gap`` is the dimensionless gap) and ``angle`` (the
weak-readout angle of the first measurement; 0 is projective).
"""
from __future__ import annotations

import numpy as np

from .measurement import IndirectMeasurement, MemoryModel, controlled_readout, weak_readout
from .protocol import ErasureModel, FeedbackPlan, InitialState, Scenario, SecondRound
from .qlinalg import PAULI_X, HermitianOperator

DEFAULT_BETA = 1.0
DEFAULT_GAP = 20.0

I2 = np.eye(2)
CNOT = controlled_readout(2)


def _qubit_gap(gap: float) -> HermitianOperator:
    return HermitianOperator.diag([0.0, gap])


def _register() -> MemoryModel:
    return MemoryModel.register(2)


def _readout(angle: float, memory: MemoryModel) -> IndirectMeasurement:
    return IndirectMeasurement(weak_readout(angle), memory, 2)


def _flip_plan(gap: float, both: bool) -> FeedbackPlan:
    """Flip outcome 1 back to |0> (on A, or on A and B) and raise the gap."""
    hf = _qubit_gap(gap)
    if both:
        return FeedbackPlan("local", {0: (I2, I2), 1: (PAULI_X, PAULI_X)}, {0: (hf, hf), 1: (hf, hf)})
    one = np.eye(1)
    hb = HermitianOperator.zeros(1)
    return FeedbackPlan("local", {0: (I2, one), 1: (PAULI_X, one)}, {0: (hf, hb), 1: (hf, hb)})


def szilard_qubit(beta=DEFAULT_BETA, gap=DEFAULT_GAP, angle=0.0, erasure="idealized") -> Scenario:
    """Maximally mixed qubit, readout into a one-bit memory, flip to |0>.

    ``erasure="finite-bath"`` resets the memory by two swaps with a two-qubit
    bath of dimensionless gaps 1 and 20 instead of the idealized reset.
    """
    mem = _register()
    er = ErasureModel()
    if erasure == "finite-bath":
        er = finite_bath_erasure(beta)
    elif erasure != "idealized":
        raise ValueError(f"unknown erasure {erasure!r}")
    return Scenario(
        beta=beta,
        dims=(2, 1),
        h_a=HermitianOperator.zeros(2),
        h_b=HermitianOperator.zeros(1),
        initial=InitialState("canonical-product"),
        memory=mem,
        measurement=_readout(angle, mem),
        feedback=_flip_plan(gap, both=False),
        erasure=er,
        name="szilard-qubit" if erasure == "idealized" else "szilard-finite-bath",
    )


def _swap(n_qubits: int, i: int, j: int) -> np.ndarray:
    d = 2**n_qubits
    u = np.zeros((d, d))
    for x in range(d):
        bits = [(x >> (n_qubits - 1 - q)) & 1 for q in range(n_qubits)]
        bits[i], bits[j] = bits[j], bits[i]
        y = int("".join(map(str, bits)), 2)
        u[y, x] = 1.0
    return u


def finite_bath_erasure(beta=DEFAULT_BETA, gaps=(1.0, 20.0)) -> ErasureModel:
    """Swap the memory bit into bath qubit R1, then pull a near-ground qubit from R2.

    Bath energies are ``gaps / beta``; the memory is left in R2's thermal state,
    so the reset is exact only up to a weight exp(-gaps[1]) outside block 0.
    """
    e1, e2 = (g / beta for g in gaps)
    h_r = np.diag([0.0, e2, e1, e1 + e2])  # |r1 r2>
    u = _swap(3, 0, 2) @ _swap(3, 0, 1)
    return ErasureModel("explicit", HermitianOperator(h_r), u)


def bell_local(beta=DEFAULT_BETA, gap=DEFAULT_GAP, angle=0.0) -> Scenario:
    """Bell pair, readout of A, flip both qubits on outcome 1."""
    mem = _register()
    h0 = HermitianOperator.zeros(2)
    return Scenario(
        beta=beta, dims=(2, 2), h_a=h0, h_b=h0,
        initial=InitialState("thermal-entangled"),
        memory=mem, measurement=_readout(angle, mem),
        feedback=_flip_plan(gap, both=True), name="bell-local",
    )


def bell_nonlocal(beta=DEFAULT_BETA, gap=DEFAULT_GAP, angle=0.0) -> Scenario:
    """Bell pair with an entangling joint feedback that maps |kk> to |00>."""
    mem = _register()
    h0 = HermitianOperator.zeros(2)
    hf = _qubit_gap(gap)
    h_ab = HermitianOperator(np.kron(hf.matrix, I2) + np.kron(I2, hf.matrix))
    u1 = np.kron(PAULI_X, I2) @ CNOT
    plan = FeedbackPlan("nonlocal", {0: CNOT, 1: u1}, {0: h_ab, 1: h_ab})
    return Scenario(
        beta=beta, dims=(2, 2), h_a=h0, h_b=h0,
        initial=InitialState("thermal-entangled"),
        memory=mem, measurement=_readout(angle, mem), feedback=plan, name="bell-nonlocal",
    )


def classical_correlated(beta=DEFAULT_BETA, gap=DEFAULT_GAP, angle=0.0) -> Scenario:
    """(|00><00| + |11><11|)/2 with the same measurement and feedback as the Bell demo."""
    mem = _register()
    h0 = HermitianOperator.zeros(2)
    return Scenario(
        beta=beta, dims=(2, 2), h_a=h0, h_b=h0,
        initial=InitialState("classical-correlated", weights=(0.5, 0.5)),
        memory=mem, measurement=_readout(angle, mem),
        feedback=_flip_plan(gap, both=True), name="classical-correlated",
    )


def thermal_entangled(beta=DEFAULT_BETA, gap=1.0, angle=0.0) -> Scenario:
    """Pure state with canonical marginals of diag(0, gap); flip both to the ground state."""
    mem = _register()
    h = _qubit_gap(gap)
    plan = FeedbackPlan("local", {0: (I2, I2), 1: (PAULI_X, PAULI_X)}, {0: (h, h), 1: (h, h)})
    return Scenario(
        beta=beta, dims=(2, 2), h_a=h, h_b=h,
        initial=InitialState("thermal-entangled"),
        memory=mem, measurement=_readout(angle, mem), feedback=plan, name="thermal-entangled",
    )


def locc_two_round(beta=DEFAULT_BETA, gap=DEFAULT_GAP, angle=np.pi / 8) -> Scenario:
    """Weak readout of A on a Bell pair, then a projective readout of B.

    The first round leaves the conditional states partially entangled; the
    second round removes the remaining correlation before the flips.
    """
    mem = _register()
    mem2 = _register()
    h0 = HermitianOperator.zeros(2)
    hf = _qubit_gap(gap)
    plan = FeedbackPlan("local", {0: (I2, I2), 1: (I2, I2)}, {0: (hf, hf), 1: (hf, hf)})
    readout_b = IndirectMeasurement(CNOT, mem2, 2)
    second = SecondRound(
        measurements={0: readout_b, 1: readout_b},
        memory=mem2,
        feedback={(k, 1): (PAULI_X, PAULI_X) for k in (0, 1)},
    )
    return Scenario(
        beta=beta, dims=(2, 2), h_a=h0, h_b=h0,
        initial=InitialState("thermal-entangled"),
        memory=mem, measurement=_readout(angle, mem), feedback=plan,
        second_round=second, name="locc-two-round",
    )


DEMOS = {
    "szilard-qubit": szilard_qubit,
    "bell-local": bell_local,
    "bell-nonlocal": bell_nonlocal,
    "classical-correlated": classical_correlated,
    "thermal-entangled": thermal_entangled,
    "locc-two-round": locc_two_round,
}


def build(name: str, beta: float | None = None, gap: float | None = None, angle: float | None = None) -> Scenario:
    """Build a named demo, overriding only the parameters that are given."""
    try:
        fn = DEMOS[name]
    except KeyError:
        raise ValueError(f"unknown demo {name!r}; choose from {', '.join(DEMOS)}") from None
    kw = {k: v for k, v in (("beta", beta), ("gap", gap), ("angle", angle)) if v is not None}
    return fn(**kw)
