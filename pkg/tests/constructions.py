"""Scenario builders whose bound records are tight by construction.

The trick for the feedback records: run once, then choose each final
Hamiltonian as -ln(rho_f)/beta so that every post-feedback state is exactly
canonical for its own Hamiltonian.  The weak readout keeps the conditional
states full rank so the logarithm exists.
"""
import numpy as np
from scipy.linalg import logm

from demonforge.measurement import IndirectMeasurement, MemoryModel, controlled_readout, weak_readout
from demonforge.protocol import FeedbackPlan, InitialState, Scenario, run
from demonforge.qlinalg import HermitianOperator, random_density, random_hermitian, random_unitary


def _log_hamiltonian(rho, beta):
    m = rho.matrix if hasattr(rho, "matrix") else rho
    h = -logm(m) / beta
    return HermitianOperator(0.5 * (h + h.conj().T))


def _base(seed, mode, beta=1.3, angle=np.pi / 7):
    rng = np.random.default_rng(seed)
    mem = MemoryModel.register(2)
    h_a = random_hermitian(2, rng)
    h_b = random_hermitian(2, rng)
    rho = random_density(4, seed=rng)
    meas = IndirectMeasurement(weak_readout(angle), mem, 2)
    if mode == "local":
        us = {k: (random_unitary(2, rng), random_unitary(2, rng)) for k in (0, 1)}
        hs = {k: (h_a, h_b) for k in (0, 1)}
    else:
        us = {k: random_unitary(4, rng) for k in (0, 1)}
        hs = {k: HermitianOperator(np.kron(h_a.matrix, np.eye(2)) + np.kron(np.eye(2), h_b.matrix)) for k in (0, 1)}
    return Scenario(beta, (2, 2), h_a, h_b, InitialState("explicit", matrix=rho.matrix), mem, meas,
                    FeedbackPlan(mode, us, hs), name=f"tight-{mode}-{seed}")


def tight_local(seed=0):
    """Local feedback whose post-feedback marginals are canonical: (c) and (d) tight."""
    s = _base(seed, "local")
    led = run(s)
    hs = {k: (_log_hamiltonian(led.rho_ab_f[k].ptrace((0,)), s.beta),
              _log_hamiltonian(led.rho_ab_f[k].ptrace((1,)), s.beta)) for k in led.labels}
    return s.replace(feedback=FeedbackPlan("local", s.feedback.unitaries, hs))


def tight_nonlocal(seed=0):
    """Joint feedback whose post-feedback states are canonical for H_AB,k: (m) tight."""
    s = _base(seed, "nonlocal")
    led = run(s)
    hs = {k: _log_hamiltonian(led.rho_ab_f[k], s.beta) for k in led.labels}
    return s.replace(feedback=FeedbackPlan("nonlocal", s.feedback.unitaries, hs))


def nondisturbing_readout(seed=0, beta=0.8):
    """Projective readout of A in the eigenbasis of a classical-quantum state: (f) tight."""
    rng = np.random.default_rng(seed)
    p = rng.dirichlet([1.0, 1.0])
    blocks = [random_density(2, seed=rng).matrix for _ in range(2)]
    rho = sum(p[a] * np.kron(np.outer(np.eye(2)[a], np.eye(2)[a]), blocks[a]) for a in range(2))
    mem = MemoryModel.register(2)
    h_a, h_b = random_hermitian(2, rng), random_hermitian(2, rng)
    meas = IndirectMeasurement(controlled_readout(2), mem, 2)
    plan = FeedbackPlan.identity((2, 2), (0, 1), h_a, h_b)
    return Scenario(beta, (2, 2), h_a, h_b, InitialState("explicit", matrix=rho), mem, meas, plan,
                    name=f"nondisturbing-{seed}")


def random_preamble(seed=0, beta=1.1):
    """Correlations created by a random joint unitary, default references: (k) tight."""
    rng = np.random.default_rng(seed)
    mem = MemoryModel.register(2)
    h_a, h_b = random_hermitian(2, rng), random_hermitian(2, rng)
    ini = InitialState("preamble", rho_a=random_density(2, seed=rng).matrix, rho_b=random_density(2, seed=rng).matrix,
                       unitary=random_unitary(4, rng))
    meas = IndirectMeasurement(controlled_readout(2), mem, 2)
    plan = FeedbackPlan.identity((2, 2), (0, 1), h_a, h_b)
    return Scenario(beta, (2, 2), h_a, h_b, ini, mem, meas, plan, name=f"preamble-{seed}")


def nondegenerate_memory_erasure(seed=0, beta=0.7):
    """Idealized reset of a memory with nondegenerate block energies: (h) tight."""
    rng = np.random.default_rng(seed)
    mem = MemoryModel.register(3, rng.uniform(0.0, 2.0, 3))
    h_a = random_hermitian(3, rng)
    h_b = HermitianOperator.zeros(1)
    meas = IndirectMeasurement(controlled_readout(3), mem, 3)
    plan = FeedbackPlan.identity((3, 1), (0, 1, 2), h_a, h_b)
    rho = random_density(3, seed=rng)
    return Scenario(beta, (3, 1), h_a, h_b, InitialState("explicit", matrix=rho.matrix), mem, meas, plan,
                    name=f"erasure-{seed}")
