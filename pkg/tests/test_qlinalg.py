import numpy as np
import pytest
from hypothesis import given, strategies as st

from demonforge.qlinalg import (
    PAULI_X,
    DensityOperator,
    HermitianOperator,
    QuantumStateError,
    canonical_state,
    conjugate,
    cross_entropy,
    gell_mann_basis,
    is_canonical,
    lift_operator,
    partial_trace,
    random_density,
    random_hermitian,
    random_unitary,
    relative_entropy,
    tensor,
    trace_distance,
    unitary_from_generator,
    von_neumann_entropy,
)

import oracle

seeds = st.integers(0, 2**32 - 1)
dims_pairs = st.sampled_from([(2, 2), (2, 3), (3, 2), (2, 2, 2), (3, 1, 2)])


def test_density_rejects_bad_trace():
    with pytest.raises(QuantumStateError, match="trace"):
        DensityOperator(np.eye(2))


def test_density_rejects_negative_eigenvalue():
    with pytest.raises(QuantumStateError, match="negative"):
        DensityOperator(np.diag([1.1, -0.1]))


def test_density_rejects_nonhermitian():
    with pytest.raises(QuantumStateError):
        DensityOperator(np.array([[0.5, 0.3], [0.0, 0.5]]))


def test_density_dims_must_factor():
    with pytest.raises(QuantumStateError, match="dims"):
        DensityOperator(np.eye(4) / 4, (3, 2))


def test_density_matrix_is_read_only():
    rho = DensityOperator(np.eye(2) / 2)
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 1.0


def test_small_negative_eigenvalue_clipped_in_entropy():
    m = np.diag([1.0 + 5e-10, -5e-10])
    assert von_neumann_entropy(m) == pytest.approx(0.0, abs=1e-8)
    with pytest.raises(QuantumStateError):
        von_neumann_entropy(np.diag([1.1, -0.1]))


@given(seeds, dims_pairs)
def test_partial_trace_matches_loop_oracle(seed, dims):
    d = int(np.prod(dims))
    rho = random_density(d, seed=seed, dims=dims)
    for keep in ([0], [len(dims) - 1], [0, len(dims) - 1]):
        got = partial_trace(rho, keep).matrix
        np.testing.assert_allclose(got, oracle.ptrace_loops(rho.matrix, dims, keep), atol=1e-13)


@given(seeds, st.integers(2, 6), st.integers(1, 6))
def test_entropy_bounds_and_oracle(seed, d, rank):
    rho = random_density(d, rank=min(rank, d), seed=seed)
    s = von_neumann_entropy(rho)
    assert -1e-12 <= s <= np.log(d) + 1e-12
    assert s == pytest.approx(oracle.entropy_logm(rho.matrix), abs=1e-10)


@given(seeds, st.integers(2, 5))
def test_relative_entropy_nonnegative_and_matches_logm(seed, d):
    rng = np.random.default_rng(seed)
    r, s = random_density(d, seed=rng), random_density(d, seed=rng)
    val = relative_entropy(r, s)
    assert val >= -1e-12
    assert val == pytest.approx(oracle.relative_entropy_logm(r.matrix, s.matrix), abs=1e-7)


def test_relative_entropy_infinite_outside_support():
    assert relative_entropy(np.eye(2) / 2, np.diag([1.0, 0.0])) == np.inf
    assert cross_entropy(np.diag([1.0, 0.0]), np.diag([1.0, 0.0])) == 0.0


@given(seeds, st.integers(2, 5))
def test_trace_distance_is_a_metric_in_range(seed, d):
    rng = np.random.default_rng(seed)
    a, b, c = (random_density(d, seed=rng) for _ in range(3))
    ab, bc, ac = trace_distance(a, b), trace_distance(b, c), trace_distance(a, c)
    assert 0 <= ab <= 1 + 1e-12
    assert ac <= ab + bc + 1e-12
    assert trace_distance(a, a) == pytest.approx(0.0, abs=1e-14)


def test_trace_distance_orthogonal_states():
    assert trace_distance(np.diag([1.0, 0]), np.diag([0, 1.0])) == pytest.approx(1.0)


@given(seeds, st.integers(1, 5), st.floats(0.05, 20.0))
def test_canonical_state_matches_expm(seed, d, beta):
    h = random_hermitian(d, seed, scale=3.0)
    rho, f = canonical_state(h, beta)
    ref, f_ref = oracle.gibbs_expm(h.matrix, beta)
    np.testing.assert_allclose(rho.matrix, ref, atol=1e-10)
    assert f == pytest.approx(f_ref, abs=1e-9)
    assert is_canonical(rho, h, beta)


def test_canonical_state_large_gap_does_not_overflow():
    rho, f = canonical_state(HermitianOperator.diag([0.0, 1e4]), 10.0)
    assert rho.matrix[0, 0].real == 1.0
    assert f == pytest.approx(0.0, abs=1e-12)


def test_canonical_free_energy_closed_form():
    # two-level system with gap E: F = -ln(1 + e^{-beta E}) / beta
    for beta, gap in [(1.0, 1.0), (0.5, 3.0), (2.0, 20.0)]:
        _, f = canonical_state(HermitianOperator.diag([0.0, gap]), beta)
        assert f == pytest.approx(-np.log1p(np.exp(-beta * gap)) / beta, rel=1e-13)


@given(seeds, st.integers(1, 5))
def test_unitary_from_generator_is_unitary(seed, d):
    g = random_hermitian(d, seed, scale=10.0)
    u = unitary_from_generator(g)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(d), atol=1e-12)


def test_gell_mann_basis_is_orthonormal_and_traceless():
    for d in (2, 3, 4):
        basis = np.array([g.matrix for g in gell_mann_basis(d)])
        assert len(basis) == d * d - 1
        gram = np.einsum("aij,bji->ab", basis, basis).real
        np.testing.assert_allclose(gram, 2 * np.eye(d * d - 1), atol=1e-13)
        np.testing.assert_allclose(np.einsum("aii->a", basis), 0, atol=1e-14)


@given(seeds)
def test_conjugate_matches_lifted_product(seed):
    rng = np.random.default_rng(seed)
    dims = (2, 3, 2)
    rho = random_density(12, seed=rng, dims=dims)
    u = random_unitary(4, rng)
    for targets in ([0, 2], [2, 0]):
        full = lift_operator(u, dims, targets)
        np.testing.assert_allclose(conjugate(u, rho.matrix, dims, targets), full @ rho.matrix @ full.conj().T, atol=1e-12)


def test_lift_operator_contiguous_matches_kron():
    full = lift_operator(PAULI_X, (2, 3), [0])
    np.testing.assert_allclose(full, np.kron(PAULI_X, np.eye(3)))


def test_tensor_records_dims():
    t = tensor(DensityOperator(np.eye(2) / 2), DensityOperator(np.eye(3) / 3))
    assert t.dims == (2, 3)
    np.testing.assert_allclose(t.ptrace((1,)).matrix, np.eye(3) / 3)
