"""Inequality records evaluated against a run ledger.

Every record is oriented so that ``slack >= 0`` means the inequality holds.
Work-valued records are multiplied by beta, so all slacks are in nats.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .protocol import RunLedger
from .qlinalg import partial_trace, trace_distance

DEFAULT_TOLERANCE = 1e-9
# Information below this counts as "no information used" for record (a).
INFO_ZERO = 1e-12

RECORD_NAMES = tuple("abcdefghijklmno")
AUX_NAMES = ("b-holevo",)

TITLES = {
    "a": "conventional second law",
    "b": "information gain range (efficient)",
    "b-holevo": "Holevo range of B",
    "c": "entropy production of A",
    "d": "entropy production of B",
    "e": "extractable work of A and B",
    "f": "measurement entropy",
    "g": "measurement work cost",
    "h": "erasure work cost",
    "i": "net entropy",
    "j": "net work",
    "k": "correlation creation cost",
    "l": "cycle entropy",
    "m": "composite feedback entropy",
    "n": "composite cycle entropy",
    "o": "two-round net work",
}

# records whose two sides are beta times an energy
WORK_RECORDS = frozenset("aeghjo")


@dataclass(frozen=True)
class InequalityRecord:
    """One inequality ``lhs <sense> rhs`` with its slack.

    ``satisfied`` is ``None`` when the record is not applicable.  For the
    two-sided range records ``sense`` is ``"in"`` and ``rhs`` is the upper end
    (the lower end is 0).
    """

    name: str
    title: str
    lhs: float
    rhs: float
    sense: str
    slack: float
    applicable: bool
    satisfied: bool | None
    equality_hint: float | None = None
    hint_parts: dict | None = None

    @property
    def violated(self) -> bool:
        return self.applicable and self.satisfied is False

    @property
    def work_form(self) -> bool:
        return self.name in WORK_RECORDS

    def as_dict(self) -> dict:
        return asdict(self)


def _slack(lhs: float, rhs: float, sense: str) -> float:
    if sense == "<=":
        d = rhs - lhs
    elif sense == ">=":
        d = lhs - rhs
    else:
        d = min(lhs, rhs - lhs)
    # inf - inf only arises when both sides diverge together; no verdict possible
    return float(d) if not np.isnan(d) else np.nan


def _record(name, lhs, rhs, sense, applicable, tol, hint=None, parts=None) -> InequalityRecord:
    if lhs is None or rhs is None:
        if applicable:
            raise ValueError(f"record ({name}) is applicable but the ledger lacks its fields")
        lhs = np.nan if lhs is None else lhs
        rhs = np.nan if rhs is None else rhs
    slack = _slack(float(lhs), float(rhs), sense)
    sat = bool(slack >= -tol) if applicable else None
    return InequalityRecord(name, TITLES[name], float(lhs), float(rhs), sense, slack, bool(applicable), sat, hint, parts)


def evaluate(ledger: RunLedger, tolerance: float = DEFAULT_TOLERANCE) -> list[InequalityRecord]:
    """All records (a)-(o) plus the Holevo range, in order."""
    L = ledger
    b = L.beta
    tol = tolerance
    local = L.local
    recs = []

    works_ok = L.canonical_initial and L.default_references
    if local:
        info_used = L.i_a_x + L.i_b_x
    else:
        info_used = L.i_ab + L.i_ab_x
    recs.append(_record("a", b * L.w_ab, -b * L.df_ab, "<=", works_ok and abs(info_used) <= INFO_ZERO, tol))

    recs.append(_record("b", L.i_a_x, L.h_x, "in", L.efficient, tol))
    recs.append(_record("b-holevo", L.i_b_x, L.h_x, "in", True, tol))

    recs.append(_record("c", L.sigma_a, -L.i_a_x, ">=", local, tol, L.td_a))
    recs.append(_record("d", L.sigma_b, -L.i_b_x, ">=", local, tol, L.td_b))

    lhs_e = b * (L.w_a + L.w_b) if local else None
    rhs_e = -b * L.df_ab + L.i_a_x + L.i_b_x
    recs.append(_record("e", lhs_e, rhs_e, "<=", local and works_ok, tol))

    parts = {"trace_distance": L.td_mes, "abs_delta_s": abs(L.delta_s)}
    recs.append(_record("f", L.sigma_mes, L.i_ab_x, ">=", True, tol, L.td_mes + abs(L.delta_s), parts))

    recs.append(_record("g", b * L.w_mes, L.i_ab_x - L.h_x + b * L.df_m, ">=", L.memory_initial_canonical, tol))

    erasure_valid = L.erasure_variant == "idealized" or (L.erasure_ok and L.memory_post_canonical)
    recs.append(_record("h", b * L.w_ers, L.h_x - b * L.df_m, ">=", erasure_valid, tol))

    info_part = L.i_ab - L.i_ab_given_x
    recs.append(_record("i", L.sigma_net, -info_part, ">=", local, tol))

    net_ok = local and works_ok and L.memory_initial_canonical and erasure_valid
    recs.append(_record("j", b * L.w_net, info_part - b * L.df_ab, "<=", net_ok, tol))

    pre = L.preamble
    if pre is not None:
        hint_k = trace_distance(partial_trace(pre.rho_i, (0,)).matrix, pre.ref_a.matrix) + trace_distance(
            partial_trace(pre.rho_i, (1,)).matrix, pre.ref_b.matrix
        )
        recs.append(_record("k", pre.sigma_ent_a + pre.sigma_ent_b, L.i_ab, ">=", True, tol, hint_k))
    else:
        recs.append(_record("k", None, L.i_ab, ">=", False, tol))
    recs.append(_record("l", L.sigma_cycle, L.i_ab_given_x, ">=", pre is not None and local, tol))

    recs.append(_record("m", L.sigma_ab_prime, -L.i_ab_x, ">=", True, tol, L.td_ab))
    recs.append(_record("n", L.sigma_cycle_prime, 0.0, ">=", True, tol))

    lo = L.locc
    if lo is not None:
        ok = L.canonical_initial and L.memory_initial_canonical and lo.memory2_initial_canonical
        recs.append(_record("o", b * lo.w_net, lo.rhs, "<=", ok, tol))
    else:
        recs.append(_record("o", None, None, "<=", False, tol))
    return recs


def by_name(records) -> dict:
    return {r.name: r for r in records}


def violations(records) -> list[InequalityRecord]:
    return [r for r in records if r.violated]


def random_audit(*args, **kwargs):
    """See :func:`demonforge.audit.random_audit`."""
    from .audit import random_audit as _audit

    return _audit(*args, **kwargs)
