import numpy as np
import pytest
from hypothesis import given, strategies as st

from demonforge.measurement import (
    IndirectMeasurement,
    KrausFamily,
    MemoryModel,
    apply_measurement,
    controlled_readout,
    is_efficient,
    kraus_from_dilation,
    weak_readout,
)
from demonforge.qlinalg import (
    DensityOperator,
    HermitianOperator,
    QuantumStateError,
    random_density,
    random_unitary,
)

seeds = st.integers(0, 2**32 - 1)


def test_weak_readout_kraus_operators():
    t = 0.3
    fam = kraus_from_dilation(IndirectMeasurement(weak_readout(t), MemoryModel.register(2), 2))
    c, s = np.cos(t), np.sin(t)
    np.testing.assert_allclose(fam.operators[0][0], np.diag([c, s]), atol=1e-15)
    np.testing.assert_allclose(fam.operators[1][0], np.diag([s, c]), atol=1e-15)
    assert fam.efficient


def test_weak_readout_at_zero_is_cnot():
    np.testing.assert_allclose(weak_readout(0.0), controlled_readout(2), atol=1e-15)


def test_controlled_readout_is_a_permutation():
    u = controlled_readout(3)
    assert sorted(u.sum(axis=0)) == [1] * 9
    assert sorted(u.sum(axis=1)) == [1] * 9
    # |j>|0> -> |j>|j>
    for j in range(3):
        assert u[j * 3 + j, j * 3] == 1


def test_incomplete_kraus_family_rejected():
    with pytest.raises(QuantumStateError, match="incomplete"):
        KrausFamily({0: [np.diag([1.0, 0.0])], 1: [np.diag([0.0, 0.999])]})


def test_projective_family_is_efficient():
    fam = KrausFamily.projective(dim=3)
    assert is_efficient(fam)
    assert fam.completeness_residual() < 1e-15


def test_memory_initial_state_must_live_in_standard_block():
    h = (HermitianOperator.diag([0.0]), HermitianOperator.diag([1.0]))
    with pytest.raises(QuantumStateError, match="outside the standard block"):
        MemoryModel((1, 1), h, np.eye(2) / 2)


def test_memory_block_hamiltonian_dimension_checked():
    with pytest.raises(QuantumStateError, match="block 0"):
        MemoryModel((2,), (HermitianOperator.diag([0.0]),), np.diag([1.0, 0.0]))


def test_memory_hamiltonian_is_direct_sum():
    mem = MemoryModel((1, 2), (HermitianOperator.diag([0.5]), HermitianOperator.diag([1.0, 2.0])), np.diag([1.0, 0, 0]))
    np.testing.assert_allclose(mem.hamiltonian.matrix, np.diag([0.5, 1.0, 2.0]))
    np.testing.assert_allclose(mem.projector(1), np.diag([0, 1.0, 1.0]))


def test_block_canonical_state():
    mem = MemoryModel((2, 1), (HermitianOperator.diag([0.0, 1.0]), HermitianOperator.diag([0.0])), np.diag([1.0, 0, 0]))
    rho, f = mem.block_canonical(0, 2.0)
    z = 1 + np.exp(-2.0)
    np.testing.assert_allclose(np.diag(rho.matrix).real, [1 / z, np.exp(-2.0) / z, 0.0], atol=1e-15)
    assert f == pytest.approx(-np.log(z) / 2.0)
    assert not mem.initial_is_canonical(2.0)
    assert mem.is_pure_initial()


@given(seeds)
def test_dilation_matches_kraus_route_for_mixed_memory(seed):
    rng = np.random.default_rng(seed)
    # mixed memory in a 2-dim standard block: an inefficient measurement
    w = rng.dirichlet([1, 1])
    init = np.zeros((4, 4))
    init[0, 0], init[1, 1] = w
    mem = MemoryModel((2, 2), (HermitianOperator.diag([0.0, 0.3]), HermitianOperator.diag([0.1, 0.4])), init)
    u = random_unitary(8, rng)
    meas = IndirectMeasurement(u, mem, 2)
    rho = random_density(4, seed=rng, dims=(2, 2))
    rec = apply_measurement(meas, rho, target=0)
    assert not rec.efficient
    # oracle: evolve explicitly with the full joint unitary and project
    full = np.kron(rho.matrix, init)
    u_full = np.einsum("amAM,bB->abmABM", u.reshape(2, 4, 2, 4), np.eye(2)).reshape(16, 16)
    evolved = u_full @ full @ u_full.conj().T
    for k in rec.probabilities:
        proj = np.kron(np.eye(4), mem.projector(k))
        pk = proj @ evolved @ proj
        assert rec.probabilities[k] == pytest.approx(np.trace(pk).real, abs=1e-12)
        np.testing.assert_allclose(rec.joint_states[k].matrix * rec.probabilities[k], pk, atol=1e-12)


@given(seeds)
def test_kraus_family_with_memory_builds_joint_states(seed):
    rng = np.random.default_rng(seed)
    v = random_unitary(8, rng)[:, :2]
    ops = [v[2 * j:2 * j + 2, :] for j in range(4)]
    fam = KrausFamily({0: ops[:2], 1: ops[2:]})
    mem = MemoryModel((2, 2), (HermitianOperator.zeros(2), HermitianOperator.zeros(2)), np.diag([1.0, 0, 0, 0]))
    rho = random_density(2, seed=rng)
    rec = apply_measurement(fam, rho, memory=mem)
    for k, p in rec.probabilities.items():
        joint = rec.joint_states[k]
        assert joint.dims == (2, 4)
        np.testing.assert_allclose(joint.ptrace((0,)).matrix, rec.ensemble.states[rec.ensemble.labels.index(k)].matrix,
                                   atol=1e-12)
        # memory supported on block k only
        mem_state = joint.ptrace((1,)).matrix
        assert np.trace(mem.projector(k) @ mem_state).real == pytest.approx(1.0, abs=1e-12)


def test_joint_unitary_shape_checked():
    with pytest.raises(QuantumStateError, match="shape"):
        IndirectMeasurement(np.eye(6), MemoryModel.register(2), 2)


def test_nonunitary_dilation_rejected():
    with pytest.raises(QuantumStateError):
        IndirectMeasurement(np.eye(4) * 1.01, MemoryModel.register(2), 2)


def test_measurement_of_second_subsystem():
    rho = DensityOperator(np.diag([0.5, 0, 0, 0.5]), (2, 2))
    rec = apply_measurement(KrausFamily.projective(dim=2), rho, target=1)
    assert rec.probabilities == pytest.approx({0: 0.5, 1: 0.5})
    np.testing.assert_allclose(rec.ensemble.states[1].matrix, np.diag([0, 0, 0, 1.0]), atol=1e-15)
