"""Randomized verification of all inequality records.

Trial ``t`` draws from ``numpy.random.default_rng([seed, t])``, so results are
independent of how trials are split across worker processes.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import AUX_NAMES, DEFAULT_TOLERANCE, RECORD_NAMES, evaluate
from .infotheory import balance_identity_residual
from .measurement import IndirectMeasurement, KrausFamily, MemoryModel
from .protocol import (
    ErasureModel,
    FeedbackPlan,
    InitialState,
    Scenario,
    SecondRound,
    run,
)
from .qlinalg import (
    DensityOperator,
    HermitianOperator,
    canonical_state,
    lift_operator,
    random_density,
    random_hermitian,
    random_unitary,
)

MEASUREMENTS = ("efficient", "inefficient", "kraus", "trivial")
FEEDBACK = ("local", "nonlocal")
ERASURES = ("idealized", "explicit")
RECIPES = ("canonical-product", "thermal-entangled", "classical-correlated", "explicit", "preamble")

# gap of the swap register used by the explicit erasure, in units of 1/beta
RESET_GAP = 40.0


def _combos():
    out = []
    for m, f, e, r in itertools.product(MEASUREMENTS, FEEDBACK, ERASURES, RECIPES):
        out.append((m, f, e, r, False))
        if f == "local":
            out.append((m, f, e, r, True))
    return out


COMBOS = _combos()


def _rand_ham(rng, d, beta) -> HermitianOperator:
    return random_hermitian(d, rng, scale=rng.uniform(0.2, 3.0) / beta)


def _block_memory(rng, block_dims, beta, initial: str) -> MemoryModel:
    hams = [_rand_ham(rng, d, beta) for d in block_dims]
    dim = sum(block_dims)
    init = np.zeros((dim, dim), dtype=np.complex128)
    if initial == "canonical":
        can, _ = canonical_state(hams[0], beta)
        init[: block_dims[0], : block_dims[0]] = can.matrix
    else:
        init[0, 0] = 1.0
    return MemoryModel(tuple(block_dims), tuple(hams), DensityOperator(init))


def _random_measurement(rng, kind, d, beta):
    """Measurement on a subsystem of dimension ``d`` and the memory it writes to."""
    if kind == "efficient":
        n = int(rng.integers(2, 4))
        energies = rng.uniform(0.0, 2.0, n) / beta
        mem = MemoryModel.register(n, energies)
        return IndirectMeasurement(random_unitary(d * n, rng), mem, d), mem
    if kind == "inefficient":
        mem = _block_memory(rng, (2, 2), beta, "canonical")
        return IndirectMeasurement(random_unitary(d * 4, rng), mem, d), mem
    if kind == "kraus":
        v = random_unitary(4 * d, rng)[:, :d]
        ops = [v[j * d:(j + 1) * d, :] for j in range(4)]
        mem = _block_memory(rng, (2, 2), beta, "pure")
        return KrausFamily({0: ops[:2], 1: ops[2:]}), mem
    return KrausFamily.identity(d), MemoryModel.register(1)


def _outcomes(meas) -> list:
    if isinstance(meas, KrausFamily):
        return sorted(meas.operators)
    return list(range(meas.memory.n_blocks))


def _random_initial(rng, recipe, dims, beta, h_a):
    d_a, d_b = dims
    if recipe == "thermal-entangled":
        if d_a != d_b:
            recipe = "preamble"
        else:
            v = random_unitary(d_b, rng)
            return InitialState(recipe), HermitianOperator(v @ h_a.matrix @ v.conj().T)
    h_b = _rand_ham(rng, d_b, beta)
    if recipe == "canonical-product":
        return InitialState(recipe), h_b
    if recipe == "classical-correlated":
        w = rng.dirichlet(np.ones(min(d_a, d_b)))
        return InitialState(recipe, weights=tuple(w)), h_b
    if recipe == "explicit":
        return InitialState(recipe, matrix=random_density(d_a * d_b, None, rng).matrix), h_b
    refs = None
    if rng.random() < 0.5:
        refs = (random_density(d_a, None, rng), random_density(d_b, None, rng))
    return InitialState(
        "preamble",
        rho_a=random_density(d_a, int(rng.integers(1, d_a + 1)), rng),
        rho_b=random_density(d_b, int(rng.integers(1, d_b + 1)), rng),
        unitary=random_unitary(d_a * d_b, rng),
        references=refs,
    ), h_b


def _random_plan(rng, mode, outcomes, dims, beta, with_refs):
    d_a, d_b = dims
    us, hs, rs = {}, {}, {}
    for k in outcomes:
        if mode == "local":
            us[k] = (random_unitary(d_a, rng), random_unitary(d_b, rng))
            hs[k] = (_rand_ham(rng, d_a, beta), _rand_ham(rng, d_b, beta))
            rs[k] = (random_density(d_a, None, rng), random_density(d_b, None, rng))
        else:
            us[k] = random_unitary(d_a * d_b, rng)
            hs[k] = _rand_ham(rng, d_a * d_b, beta)
            rs[k] = random_density(d_a * d_b, None, rng)
    return FeedbackPlan(mode, us, hs, rs if with_refs else None)


def _swap_first_two(d1: int, d2: int, d3: int) -> np.ndarray:
    """SWAP of two equal-dimension factors (1, 2) on a (d1, d2, d3) space."""
    assert d1 == d2
    d = d1 * d2 * d3
    u = np.zeros((d, d))
    for i in range(d1):
        for j in range(d2):
            for r in range(d3):
                u[(j * d2 + i) * d3 + r, (i * d2 + j) * d3 + r] = 1.0
    return u


def _explicit_erasure(rng, memory: MemoryModel, beta) -> ErasureModel:
    """Swap M with a register R1 whose excited levels sit RESET_GAP/beta above |0>.

    A random unitary on M (x) R2 runs first so that the bath qubit R2 exchanges
    energy with the memory; the swap then leaves M in R1's near-ground state.
    """
    dm = memory.dim
    h_r1 = np.diag(RESET_GAP / beta * np.arange(dm))
    h_r2 = np.diag([0.0, rng.uniform(0.1, 3.0) / beta])
    h_r = np.kron(h_r1, np.eye(2)) + np.kron(np.eye(dm), h_r2)
    # factor order (M, R1, R2)
    v = lift_operator(random_unitary(2 * dm, rng), (dm, dm, 2), [0, 2])
    u = _swap_first_two(dm, dm, 2) @ v
    return ErasureModel("explicit", HermitianOperator(h_r), u)


def _random_second_round(rng, outcomes, dims, beta, new_hamiltonians=True):
    d_a, d_b = dims
    kind = "efficient" if rng.random() < 0.5 else "kraus"
    mem2 = None
    meas = {}
    if kind == "efficient":
        mem2 = MemoryModel.register(2, rng.uniform(0.0, 2.0, 2) / beta)
        for k in outcomes:
            meas[k] = IndirectMeasurement(random_unitary(2 * d_b, rng), mem2, d_b)
    else:
        mem2 = _block_memory(rng, (2, 2), beta, "pure")
        for k in outcomes:
            v = random_unitary(4 * d_b, rng)[:, :d_b]
            ops = [v[j * d_b:(j + 1) * d_b, :] for j in range(4)]
            meas[k] = KrausFamily({0: ops[:2], 1: ops[2:]})
    fb, hs = {}, {}
    for k in outcomes:
        for l in range(2):
            fb[(k, l)] = (random_unitary(d_a, rng), random_unitary(d_b, rng))
            if new_hamiltonians and rng.random() < 0.5:
                hs[(k, l)] = (_rand_ham(rng, d_a, beta), _rand_ham(rng, d_b, beta))
    return SecondRound(meas, mem2, fb, hs)


def random_scenario(dims=(2, 2), seed=0, trial: int = 0) -> Scenario:
    """Scenario for one audit trial; the combination of ingredients cycles with ``trial``."""
    rng = np.random.default_rng([int(seed), int(trial)])
    m_kind, f_mode, e_kind, recipe, second = COMBOS[trial % len(COMBOS)]
    dims = tuple(int(d) for d in dims)
    beta = float(rng.uniform(0.3, 3.0))
    h_a = _rand_ham(rng, dims[0], beta)
    initial, h_b = _random_initial(rng, recipe, dims, beta, h_a)
    meas, mem = _random_measurement(rng, m_kind, dims[0], beta)
    outcomes = _outcomes(meas)
    plan = _random_plan(rng, f_mode, outcomes, dims, beta, with_refs=rng.random() < 0.2)
    erasure = _explicit_erasure(rng, mem, beta) if e_kind == "explicit" else ErasureModel()
    sr = _random_second_round(rng, outcomes, dims, beta) if second else None
    name = f"audit[{seed}:{trial}] {m_kind}/{f_mode}/{e_kind}/{recipe}" + ("/two-round" if second else "")
    return Scenario(beta, dims, h_a, h_b, initial, mem, meas, plan, erasure, sr, name=name)


def random_two_round_scenario(dims=(2, 2), seed=0, trial: int = 0) -> Scenario:
    """Two-round LOCC scenario whose second round keeps the first-round final Hamiltonians.

    With the Hamiltonians unchanged the two- and one-round work bounds differ
    only in their information terms, so they can be compared directly.
    """
    rng = np.random.default_rng([int(seed), int(trial), 2])
    dims = tuple(int(d) for d in dims)
    beta = float(rng.uniform(0.3, 3.0))
    recipes = ("canonical-product", "thermal-entangled", "classical-correlated", "explicit")
    recipe = recipes[trial % len(recipes)]
    if recipe == "thermal-entangled" and dims[0] != dims[1]:
        recipe = "preamble"
    h_a = _rand_ham(rng, dims[0], beta)
    initial, h_b = _random_initial(rng, recipe, dims, beta, h_a)
    m_kind = ("efficient", "inefficient", "kraus")[trial % 3]
    meas, mem = _random_measurement(rng, m_kind, dims[0], beta)
    outcomes = _outcomes(meas)
    plan = _random_plan(rng, "local", outcomes, dims, beta, with_refs=False)
    sr = _random_second_round(rng, outcomes, dims, beta, new_hamiltonians=False)
    name = f"locc[{seed}:{trial}] {m_kind}/{recipe}"
    return Scenario(beta, dims, h_a, h_b, initial, mem, meas, plan, ErasureModel(), sr, name=name)


@dataclass
class RecordStats:
    applicable: int = 0
    violations: int = 0
    min_slack: float = np.inf
    max_slack: float = -np.inf
    slack_sum: float = 0.0
    finite: int = 0

    def add(self, slack: float, violated: bool):
        self.applicable += 1
        self.violations += int(violated)
        self.min_slack = min(self.min_slack, slack)
        self.max_slack = max(self.max_slack, slack)
        if np.isfinite(slack):
            self.slack_sum += slack
            self.finite += 1

    @property
    def mean_slack(self) -> float:
        return self.slack_sum / self.finite if self.finite else float("nan")


@dataclass
class AuditSummary:
    dims: tuple
    seed: int
    trials: int
    tolerance: float
    records: dict = field(default_factory=dict)
    max_balance_residual: float = 0.0
    max_chain_residual: float = 0.0
    max_check_residual: float = 0.0
    coverage: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    @property
    def total_violations(self) -> int:
        return sum(s.violations for s in self.records.values())

    @property
    def ok(self) -> bool:
        return self.total_violations == 0 and not self.errors


def _trial(args):
    dims, seed, t, tol = args
    try:
        s = random_scenario(dims, seed, t)
        ledger = run(s)
    except Exception as exc:  # reported per trial, the audit keeps going
        return t, None, f"{type(exc).__name__}: {exc}", None
    recs = evaluate(ledger, tol)
    ens = [(k, ledger.probabilities[k], ledger.rho_ab[k]) for k in ledger.labels]
    from .infotheory import OutcomeEnsemble

    balance = balance_identity_residual(ledger.rho_i, OutcomeEnsemble(tuple(ens)))
    chain = max(ledger.locc.chain_residuals.values()) if ledger.locc is not None else 0.0
    checks = list(ledger.checks.values()) + (list(ledger.locc.checks.values()) if ledger.locc else [])
    info = {
        "name": s.name,
        "balance": balance,
        "chain": chain,
        "check": max(checks, default=0.0),
        "efficient": ledger.efficient,
        "mode": ledger.mode,
        "erasure": ledger.erasure_variant,
        "recipe": ledger.recipe,
        "two_round": ledger.locc is not None,
    }
    return t, [r.as_dict() for r in recs], None, info


def random_audit(dims=(2, 2), seed: int = 0, trials: int = 100, tolerance: float = DEFAULT_TOLERANCE,
                 workers: int = 1, keep_rows: bool = False) -> AuditSummary:
    """Run ``trials`` random scenarios and count record violations.

    Violations and per-trial errors are collected, never raised.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    jobs = [(tuple(dims), int(seed), t, float(tolerance)) for t in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_trial, jobs, chunksize=max(1, trials // (4 * workers))))
    else:
        results = [_trial(j) for j in jobs]
    results.sort(key=lambda r: r[0])

    summary = AuditSummary(tuple(dims), int(seed), trials, tolerance)
    summary.records = {n: RecordStats() for n in RECORD_NAMES + AUX_NAMES}
    cov: dict = {}

    def bump(key):
        cov[key] = cov.get(key, 0) + 1

    for t, recs, err, info in results:
        if err is not None:
            summary.errors.append((t, err))
            continue
        bump("measurement:" + ("efficient" if info["efficient"] else "inefficient"))
        bump("feedback:" + info["mode"])
        bump("erasure:" + info["erasure"])
        bump("recipe:" + info["recipe"])
        if info["two_round"]:
            bump("two-round")
        summary.max_balance_residual = max(summary.max_balance_residual, info["balance"])
        summary.max_chain_residual = max(summary.max_chain_residual, info["chain"])
        summary.max_check_residual = max(summary.max_check_residual, info["check"])
        for r in recs:
            if r["applicable"]:
                summary.records[r["name"]].add(r["slack"], not r["satisfied"])
            if keep_rows:
                summary.rows.append({"trial": t, "scenario": info["name"], **r})
    summary.coverage = dict(sorted(cov.items()))
    return summary
