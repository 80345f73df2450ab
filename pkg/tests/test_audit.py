import numpy as np
import pytest

from demonforge.audit import COMBOS, random_audit, random_scenario, random_two_round_scenario
from demonforge.bounds import RECORD_NAMES
from demonforge.protocol import run
from demonforge.reporting import rows_jsonl


@pytest.fixture(scope="module")
def small_audit():
    return random_audit((2, 2), seed=11, trials=len(COMBOS))


def test_small_audit_is_clean(small_audit):
    s = small_audit
    assert s.ok
    assert s.total_violations == 0
    assert s.max_balance_residual < 1e-9
    assert s.max_check_residual < 1e-8


def test_one_cycle_covers_every_ingredient(small_audit):
    cov = small_audit.coverage
    for key in ("measurement:efficient", "measurement:inefficient", "feedback:local", "feedback:nonlocal",
                "erasure:idealized", "erasure:explicit", "two-round"):
        assert cov.get(key, 0) > 0, key
    assert sum(v for k, v in cov.items() if k.startswith("recipe:")) == len(COMBOS)


def test_every_record_is_exercised():
    s = random_audit((2, 2), seed=4, trials=2 * len(COMBOS))
    for n in RECORD_NAMES:
        assert s.records[n].applicable > 0, n


def test_audit_is_deterministic():
    a = random_audit((2, 3), seed=5, trials=12, keep_rows=True)
    b = random_audit((2, 3), seed=5, trials=12, keep_rows=True)
    assert rows_jsonl(a.rows) == rows_jsonl(b.rows)
    c = random_audit((2, 3), seed=6, trials=12, keep_rows=True)
    assert rows_jsonl(a.rows) != rows_jsonl(c.rows)


def test_workers_do_not_change_the_result():
    a = random_audit((2, 2), seed=2, trials=10, keep_rows=True)
    b = random_audit((2, 2), seed=2, trials=10, workers=2, keep_rows=True)
    assert rows_jsonl(a.rows) == rows_jsonl(b.rows)


def test_trial_errors_are_collected(monkeypatch):
    import demonforge.audit as audit

    real = audit.run

    def flaky(s):
        if s.name.startswith("audit[0:3]"):
            raise RuntimeError("boom")
        return real(s)

    monkeypatch.setattr(audit, "run", flaky)
    s = random_audit((2, 2), 0, 5)
    assert s.errors == [(3, "RuntimeError: boom")]
    assert not s.ok


def test_trials_must_be_positive():
    with pytest.raises(ValueError):
        random_audit(trials=0)


def test_random_scenarios_are_valid_states():
    for t in range(len(COMBOS)):
        s = random_scenario((3, 2), 1, t)
        L = run(s)
        assert sum(L.probabilities.values()) == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.linalg.eigvalsh(L.rho_i.matrix) > -1e-12)


@pytest.mark.parametrize("dims", [(2, 2), (2, 3)])
def test_two_round_never_worse_than_one_round(dims):
    for t in range(12):
        L = run(random_two_round_scenario(dims, 9, t))
        assert L.locc.rhs - L.locc.one_round_rhs >= -1e-9
        assert L.locc.residual_conditional_mi >= -1e-10
