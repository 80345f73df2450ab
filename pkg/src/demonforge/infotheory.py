"""Entropy differences and mutual-information functionals over outcome ensembles.

All A/B quantities are marginalized here from joint states so callers cannot
pass inconsistent marginals.  Ensembles are bipartite (dims ``(d_A, d_B)``)
unless stated otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable

import numpy as np

from .qlinalg import DensityOperator, QuantumStateError, partial_trace, von_neumann_entropy

PROB_DROP = 1e-12
PROB_SUM_TOL = 1e-9

_SUBSYSTEMS = {"A": (0,), "B": (1,), "AB": (0, 1)}


@dataclass(frozen=True)
class Outcome:
    label: Hashable
    probability: float
    state: DensityOperator


@dataclass(frozen=True)
class OutcomeEnsemble:
    """Labelled outcomes {k, p_k, rho(k)} sharing one factorization.

    Outcomes with p_k < 1e-12 are dropped and the rest renormalized.
    """

    outcomes: tuple

    def __post_init__(self):
        items = tuple(o if isinstance(o, Outcome) else Outcome(*o) for o in self.outcomes)
        if not items:
            raise QuantumStateError("empty outcome ensemble")
        probs = np.array([o.probability for o in items], dtype=float)
        if np.any(probs < -PROB_DROP):
            raise QuantumStateError(f"negative outcome probability {probs.min():.3g}")
        if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
            raise QuantumStateError(f"outcome probabilities sum to {probs.sum()!r}")
        dims = items[0].state.dims
        if any(o.state.dims != dims for o in items):
            raise QuantumStateError("ensemble states have different factorizations")
        kept = [o for o in items if o.probability >= PROB_DROP]
        total = sum(o.probability for o in kept)
        kept = tuple(Outcome(o.label, o.probability / total, o.state) for o in kept)
        object.__setattr__(self, "outcomes", kept)

    @property
    def labels(self) -> list:
        return [o.label for o in self.outcomes]

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([o.probability for o in self.outcomes])

    @property
    def states(self) -> list[DensityOperator]:
        return [o.state for o in self.outcomes]

    @property
    def dims(self) -> tuple:
        return self.outcomes[0].state.dims

    def __len__(self):
        return len(self.outcomes)

    def marginal(self, keep: Iterable[int]) -> "OutcomeEnsemble":
        keep = tuple(keep)
        return OutcomeEnsemble(
            tuple(Outcome(o.label, o.probability, partial_trace(o.state, keep)) for o in self.outcomes)
        )

    def average(self) -> DensityOperator:
        m = sum(o.probability * o.state.matrix for o in self.outcomes)
        return DensityOperator(m, self.dims, validate=False)


@dataclass(frozen=True)
class TwoRoundEnsemble:
    """Outcomes (k, l) of a measurement on A followed by a k-dependent one on B.

    ``first_round`` holds the post-feedback round-one states rho_f(k) that the
    second measurement acts on; it is needed for the chain decomposition.
    """

    outcomes: tuple  # (k, l, p_k, p_{l|k}, rho(k, l))
    first_round: OutcomeEnsemble
    conditionals: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.outcomes)
        for k, l, pk, plk, _ in rows:
            if plk < -PROB_DROP:
                raise QuantumStateError(f"negative conditional probability p({l}|{k}) = {plk:.3g}")
        total = sum(pk * plk for _, _, pk, plk, _ in rows)
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise QuantumStateError(f"two-round probabilities sum to {total!r}")
        rows = tuple(r for r in rows if r[2] * r[3] >= PROB_DROP)
        cond: dict = {}
        for k, l, _, plk, _ in rows:
            cond.setdefault(k, {})[l] = plk
        object.__setattr__(self, "outcomes", rows)
        object.__setattr__(self, "conditionals", cond)

    def joint(self) -> OutcomeEnsemble:
        return OutcomeEnsemble(tuple(Outcome((k, l), pk * plk, s) for k, l, pk, plk, s in self.outcomes))

    def conditional(self, k) -> OutcomeEnsemble:
        return OutcomeEnsemble(tuple(Outcome(l, plk, s) for kk, l, _, plk, s in self.outcomes if kk == k))


def shannon_entropy(ensemble) -> float:
    """H(X) = -sum p ln p of an ensemble or a probability vector."""
    p = ensemble.probabilities if isinstance(ensemble, OutcomeEnsemble) else np.asarray(ensemble, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def _require_bipartite(rho: DensityOperator):
    if len(rho.dims) != 2:
        raise QuantumStateError(f"expected a bipartite state, got dims {rho.dims}")


def mutual_information(rho_ab: DensityOperator) -> float:
    """I(A:B) = S(A) + S(B) - S(AB)."""
    _require_bipartite(rho_ab)
    return (
        von_neumann_entropy(partial_trace(rho_ab, (0,)))
        + von_neumann_entropy(partial_trace(rho_ab, (1,)))
        - von_neumann_entropy(rho_ab)
    )


def _entropy_drop(rho_pre: DensityOperator, ens: OutcomeEnsemble) -> float:
    if rho_pre.dims != ens.dims:
        raise QuantumStateError(f"dimension mismatch: state dims {rho_pre.dims}, ensemble dims {ens.dims}")
    avg = sum(o.probability * von_neumann_entropy(o.state) for o in ens.outcomes)
    return von_neumann_entropy(rho_pre) - avg


def information_gain(rho_pre: DensityOperator, ens: OutcomeEnsemble) -> float:
    """S(rho_pre) - sum_k p_k S(rho(k)) for the measured system.

    Lies in [0, H(X)] for efficient measurements; inefficient ones can make it
    negative, which is returned as is.
    """
    return _entropy_drop(rho_pre, ens)


def holevo_chi(rho_pre: DensityOperator, ens: OutcomeEnsemble) -> float:
    """Same functional as :func:`information_gain`, applied to the unmeasured side.

    Nonnegative and at most H(X) for any measurement on the other subsystem.
    """
    return _entropy_drop(rho_pre, ens)


def subsystem_information(rho_ab: DensityOperator, ens: OutcomeEnsemble, which: str) -> float:
    """I(rho^which : X) from a joint initial state and an ensemble of joint post-states."""
    keep = _SUBSYSTEMS[which]
    _require_bipartite(rho_ab)
    return _entropy_drop(partial_trace(rho_ab, keep), ens.marginal(keep))


def conditional_mutual_information(ens: OutcomeEnsemble) -> float:
    """I(A:B|X) = sum_k p_k I(rho^A(k) : rho^B(k))."""
    return float(sum(o.probability * mutual_information(o.state) for o in ens.outcomes))


def balance_terms(rho_ab: DensityOperator, ens: OutcomeEnsemble) -> tuple[float, float]:
    """Both sides of I(A:X) + I(B:X) - I(AB:X) = I(A:B) - I(A:B|X)."""
    left = (
        subsystem_information(rho_ab, ens, "A")
        + subsystem_information(rho_ab, ens, "B")
        - subsystem_information(rho_ab, ens, "AB")
    )
    right = mutual_information(rho_ab) - conditional_mutual_information(ens)
    return left, right


def balance_identity_residual(rho_ab: DensityOperator, ens: OutcomeEnsemble) -> float:
    left, right = balance_terms(rho_ab, ens)
    return abs(left - right)


def two_round_information(rho_ab: DensityOperator, tre: TwoRoundEnsemble, subsystem: str) -> float:
    """I(rho_i^sub : X Y) = S(rho_i^sub) - sum_{k,l} p_k p_{l|k} S(rho^sub(k, l))."""
    return subsystem_information(rho_ab, tre.joint(), subsystem)


def two_round_chain(rho_ab: DensityOperator, round_one: OutcomeEnsemble, tre: TwoRoundEnsemble, subsystem: str):
    """Return ``(I(sub:XY), I(sub:X) + sum_k p_k I(rho_f^sub(k) : Y))``.

    ``round_one`` is the pre-feedback round-one ensemble; the second term uses
    the post-feedback states stored on ``tre``.
    """
    keep = _SUBSYSTEMS[subsystem]
    total = two_round_information(rho_ab, tre, subsystem)
    first = subsystem_information(rho_ab, round_one, subsystem)
    second = 0.0
    for o in tre.first_round.outcomes:
        if o.label not in tre.conditionals:
            continue
        cond = tre.conditional(o.label).marginal(keep)
        second += o.probability * _entropy_drop(partial_trace(o.state, keep), cond)
    return total, first + second


def residual_conditional_information(tre: TwoRoundEnsemble) -> float:
    """sum_{k,l} p_k p_{l|k} I(rho^A(k,l) : rho^B(k,l))."""
    return conditional_mutual_information(tre.joint())
