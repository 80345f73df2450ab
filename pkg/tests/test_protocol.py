import numpy as np
import pytest

from demonforge import demos
from demonforge.measurement import IndirectMeasurement, KrausFamily, MemoryModel, controlled_readout
from demonforge.protocol import (
    ErasureModel,
    FeedbackPlan,
    InitialState,
    Scenario,
    ScenarioError,
    entanglement_preamble,
    prepare_initial,
    run,
    run_locc,
    run_nonlocal,
    thermal_entangled_state,
)
from demonforge.qlinalg import PAULI_X, DensityOperator, HermitianOperator, canonical_state, random_unitary

import oracle

LN2 = np.log(2)


def _binary_entropy(p):
    return -p * np.log(p) - (1 - p) * np.log(1 - p)


def test_szilard_closed_form_ledger():
    L = run(demos.szilard_qubit(beta=1.0, gap=20.0))
    tail = np.log1p(np.exp(-20.0))
    assert L.w_a == pytest.approx(0.0, abs=1e-15)
    assert L.df_a == pytest.approx(LN2 - tail, abs=1e-14)
    assert L.w_ers == pytest.approx(LN2, abs=1e-15)
    assert L.w_net == pytest.approx(-LN2, abs=1e-15)
    assert L.i_a_x == pytest.approx(LN2, abs=1e-14)
    assert L.h_x == pytest.approx(LN2, abs=1e-15)
    assert L.sigma_a == pytest.approx(-LN2 + tail, abs=1e-14)


def test_szilard_scales_with_temperature():
    for beta in (0.5, 2.0):
        L = run(demos.szilard_qubit(beta=beta, gap=20.0 / beta))
        assert beta * L.w_ers == pytest.approx(LN2, abs=1e-14)
        assert beta * L.df_a == pytest.approx(LN2 - np.log1p(np.exp(-20.0)), abs=1e-13)


def test_bell_local_information_terms():
    L = run(demos.bell_local())
    assert L.i_ab == pytest.approx(2 * LN2, abs=1e-12)
    assert L.i_ab_given_x == pytest.approx(0.0, abs=1e-12)
    assert L.i_ab_x == pytest.approx(0.0, abs=1e-12)
    assert L.i_a_x == pytest.approx(LN2, abs=1e-12)
    assert L.w_a == pytest.approx(0.0, abs=1e-14)
    assert L.canonical_initial and L.memory_initial_canonical


def test_classical_correlated_information_terms():
    L = run(demos.classical_correlated())
    assert L.i_ab == pytest.approx(LN2, abs=1e-12)
    assert L.i_ab_x == pytest.approx(LN2, abs=1e-12)
    assert L.w_net_bound_info_part == pytest.approx(LN2, abs=1e-12)


def test_thermal_entangled_state_has_canonical_marginals():
    h = HermitianOperator.diag([0.0, 1.3])
    rho = thermal_entangled_state(h, 0.9)
    can, _ = canonical_state(h, 0.9)
    np.testing.assert_allclose(rho.ptrace((0,)).matrix, can.matrix, atol=1e-14)
    np.testing.assert_allclose(rho.ptrace((1,)).matrix, can.matrix, atol=1e-14)
    assert np.trace(rho.matrix @ rho.matrix).real == pytest.approx(1.0)


def test_thermal_entangled_demo_mutual_information():
    L = run(demos.thermal_entangled(beta=1.0, gap=1.0))
    p = 1 / (1 + np.exp(-1.0))
    assert L.i_ab == pytest.approx(2 * _binary_entropy(p), abs=1e-12)
    assert L.canonical_initial


def test_bell_nonlocal_has_no_subsystem_works():
    L = run_nonlocal(demos.bell_nonlocal())
    assert L.w_a is None and L.sigma_net is None
    assert L.w_ab == pytest.approx(0.0, abs=1e-14)
    for k in L.labels:
        np.testing.assert_allclose(L.rho_ab_f[k].matrix, np.diag([1.0, 0, 0, 0]), atol=1e-14)


def test_locc_two_round_information_parts():
    theta = np.pi / 8
    L = run_locc(demos.locc_two_round(angle=theta))
    lo = L.locc
    # each weak-readout outcome leaves cos t |00> + sin t |11> (or its swap)
    expected_one_round = 2 * LN2 - 2 * _binary_entropy(np.cos(theta) ** 2)
    assert lo.one_round_info_part == pytest.approx(expected_one_round, abs=1e-12)
    assert lo.info_part == pytest.approx(2 * LN2, abs=1e-12)
    assert lo.residual_conditional_mi == pytest.approx(0.0, abs=1e-12)
    assert max(lo.chain_residuals.values()) <= 1e-12


def test_preamble_costs_sum_to_mutual_information():
    rng = np.random.default_rng(5)
    pre = entanglement_preamble(np.diag([0.7, 0.3]), np.diag([0.4, 0.6]), random_unitary(4, rng))
    assert pre.sigma_ent_a + pre.sigma_ent_b == pytest.approx(oracle.mutual_information(pre.rho_i.matrix, (2, 2)), abs=1e-12)


def test_explicit_finite_bath_erasure():
    L = run(demos.szilard_qubit(erasure="finite-bath"))
    assert L.erasure_variant == "explicit"
    assert L.w_ers >= LN2 - 1e-9
    assert L.sigma_ers > 0
    # the memory ends in R2's thermal state: weight e^-20/(1+e^-20) outside block 0
    assert L.erasure_leakage == pytest.approx(np.exp(-20) / (1 + np.exp(-20)), rel=1e-9)
    assert L.erasure_ok


def test_cross_checks_recorded():
    L = run(demos.bell_local())
    assert "balance_identity" in L.checks
    assert max(L.checks.values()) < 1e-12


def test_prepare_classical_correlated_state():
    rho, pre = prepare_initial(demos.classical_correlated())
    np.testing.assert_allclose(rho.matrix, np.diag([0.5, 0, 0, 0.5]), atol=1e-15)
    assert pre is not None


# --------------------------------------------------------------------------- validation


def _kw(**over):
    mem = MemoryModel.register(2)
    h = HermitianOperator.zeros(2)
    kw = dict(beta=1.0, dims=(2, 2), h_a=h, h_b=h, initial=InitialState("canonical-product"), memory=mem,
              measurement=IndirectMeasurement(controlled_readout(2), mem, 2),
              feedback=FeedbackPlan.identity((2, 2), (0, 1), h, h))
    kw.update(over)
    return kw


def test_valid_base_scenario():
    Scenario(**_kw())


@pytest.mark.parametrize("over, path", [
    (dict(beta=-1.0), "beta"),
    (dict(beta=float("inf")), "beta"),
    (dict(dims=(2,)), "dims"),
    (dict(h_a=HermitianOperator.zeros(3)), "hamiltonians.A"),
    (dict(initial=InitialState("explicit", matrix=np.eye(4) / 2)), "initial_state.matrix"),
    (dict(initial=InitialState("classical-correlated", weights=(0.5, 0.6))), "initial_state.weights"),
    (dict(initial=InitialState("preamble", rho_a=np.eye(2) / 2, rho_b=np.eye(2) / 2, unitary=np.eye(4) * 2)),
     "initial_state.unitary"),
])
def test_validation_names_field(over, path):
    with pytest.raises(ScenarioError) as exc:
        Scenario(**_kw(**over))
    assert exc.value.path == path


def test_unknown_recipe():
    with pytest.raises(ScenarioError, match="recipe"):
        InitialState("mystery")


def test_missing_feedback_outcome():
    h = HermitianOperator.zeros(2)
    plan = FeedbackPlan("local", {0: (np.eye(2), np.eye(2))}, {0: (h, h)})
    with pytest.raises(ScenarioError) as exc:
        Scenario(**_kw(feedback=plan))
    assert exc.value.path == "feedback"


def test_nonunitary_feedback_rejected():
    h = HermitianOperator.zeros(2)
    plan = FeedbackPlan("local", {k: (np.eye(2) * 1.1, np.eye(2)) for k in (0, 1)}, {k: (h, h) for k in (0, 1)})
    with pytest.raises(ScenarioError) as exc:
        Scenario(**_kw(feedback=plan))
    assert exc.value.path.endswith("unitary_A")


def test_kraus_measurement_needs_pure_memory():
    mem = MemoryModel((2, 1), (HermitianOperator.zeros(2), HermitianOperator.zeros(1)), np.diag([0.5, 0.5, 0]))
    with pytest.raises(ScenarioError):
        Scenario(**_kw(memory=mem, measurement=KrausFamily.projective(dim=2)))


def test_explicit_erasure_dimension_checked():
    er = ErasureModel("explicit", HermitianOperator.zeros(2), np.eye(3))
    with pytest.raises(ScenarioError) as exc:
        Scenario(**_kw(erasure=er))
    assert exc.value.path == "erasure.unitary"


def test_replace_revalidates():
    s = Scenario(**_kw())
    with pytest.raises(ScenarioError):
        s.replace(beta=0.0)
    assert s.replace(beta=2.0).beta == 2.0


def test_nonlocal_runner_rejects_local_plan():
    with pytest.raises(ScenarioError):
        run_nonlocal(demos.bell_local())


def test_flip_on_outcome_one_resets_to_ground():
    L = run(demos.bell_local())
    for k in L.labels:
        np.testing.assert_allclose(L.rho_ab_f[k].matrix, np.diag([1.0, 0, 0, 0]), atol=1e-14)
    plan = demos.bell_local().feedback
    np.testing.assert_allclose(plan.unitaries[1][0], PAULI_X)


def test_explicit_erasure_energy_closure():
    from demonforge.scenario_io import load_bundled

    s = load_bundled("szilard-finite-bath")
    L = run(s)
    h_m = s.memory.hamiltonian.matrix
    h_r = s.erasure.bath_hamiltonian.matrix
    rho_r, _ = oracle.gibbs_expm(h_r, s.beta)
    before = np.kron(L.rho_m_f.matrix, rho_r)
    u = s.erasure.unitary
    after = u @ before @ u.conj().T
    h = np.kron(h_m, np.eye(len(h_r))) + np.kron(np.eye(len(h_m)), h_r)
    injected = np.trace(h @ (after - before)).real
    assert L.w_ers == pytest.approx(injected, abs=1e-8 * max(1.0, abs(injected)))


def test_null_protocol_saturates_conventional_bound():
    from demonforge.bounds import by_name, evaluate

    mem = MemoryModel.register(1)
    h_a = HermitianOperator.diag([0.0, 0.8])
    h_b = HermitianOperator.diag([0.0, 1.3])
    plan = FeedbackPlan("local", {0: (np.eye(2), np.eye(2))}, {0: (h_a, h_b)})
    s = Scenario(1.4, (2, 2), h_a, h_b, InitialState("canonical-product"), mem,
                 IndirectMeasurement(np.eye(2), mem, 2), plan)
    recs = by_name(evaluate(run(s)))
    assert recs["a"].applicable
    assert recs["a"].slack == pytest.approx(0.0, abs=1e-14)
    for r in recs.values():
        assert not r.applicable or r.slack >= -1e-12
