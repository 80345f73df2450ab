"""Search over feedback (and measurement) unitaries written as exp(-i sum_j x_j G_j).

The default search is scipy's Nelder-Mead simplex with seeded multi-restarts.
A central-difference gradient mode (BFGS) is available for comparison.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .bounds import by_name, evaluate
from .measurement import IndirectMeasurement
from .protocol import FeedbackPlan, Scenario, run
from .qlinalg import gell_mann_basis, unitary_from_generator

DEFAULT_RESTARTS = 8
DEFAULT_BUDGET = 5000
SIMPLEX_STEP = 0.5
CONVERGED_DIAMETER = 1e-8
FD_STEP = 1e-6


class OptimizationError(RuntimeError):
    """Objective evaluation failed; ``params`` is the offending vector."""

    def __init__(self, message: str, params: np.ndarray):
        super().__init__(f"{message} at parameters {np.array2string(params, precision=17, separator=', ')}")
        self.params = params


@dataclass(frozen=True, eq=False)
class ParameterizedPlan:
    """Binds slices of a real parameter vector to unitary slots of a scenario.

    Slots are ``("A", k)``, ``("B", k)`` for local feedback, ``("AB", k)`` for
    nonlocal feedback and ``("dilation",)`` for the first measurement's joint
    unitary.  Each slot uses the generalized Gell-Mann basis of its dimension.
    """

    template: Scenario
    slots: tuple

    def __post_init__(self):
        slots = tuple(tuple(s) for s in self.slots)
        if not slots:
            raise ValueError("a parameterized plan needs at least one slot")
        plan = self.template.feedback
        for s in slots:
            kind = s[0]
            if kind in ("A", "B") and not plan.local:
                raise ValueError(f"slot {s} needs a local feedback plan")
            if kind == "AB" and plan.local:
                raise ValueError(f"slot {s} needs a nonlocal feedback plan")
            if kind in ("A", "B", "AB") and s[1] not in plan.unitaries:
                raise ValueError(f"slot {s} refers to an outcome without a plan entry")
            if kind == "dilation" and not isinstance(self.template.measurement, IndirectMeasurement):
                raise ValueError("the dilation slot needs an indirect measurement")
            if kind not in ("A", "B", "AB", "dilation"):
                raise ValueError(f"unknown slot {s}")
        object.__setattr__(self, "slots", slots)
        bases = {s: np.array([g.matrix for g in gell_mann_basis(self._slot_dim(s))]) for s in slots}
        object.__setattr__(self, "_bases", bases)

    def _slot_dim(self, slot) -> int:
        d_a, d_b = self.template.dims
        if slot[0] == "A":
            return d_a
        if slot[0] == "B":
            return d_b
        if slot[0] == "AB":
            return d_a * d_b
        return self.template.measurement.joint_unitary.shape[0]

    @property
    def sizes(self) -> list[int]:
        return [len(self._bases[s]) for s in self.slots]

    @property
    def n_params(self) -> int:
        return sum(self.sizes)

    def unitaries(self, params) -> dict:
        x = np.asarray(params, dtype=float)
        if x.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {x.shape}")
        out, i = {}, 0
        for s, n in zip(self.slots, self.sizes):
            g = np.tensordot(x[i:i + n], self._bases[s], axes=1)
            out[s] = unitary_from_generator(g)
            i += n
        return out

    def build(self, params) -> Scenario:
        t = self.template
        us = self.unitaries(params)
        plan = t.feedback
        new_u = dict(plan.unitaries)
        for s, u in us.items():
            if s[0] == "A":
                new_u[s[1]] = (u, new_u[s[1]][1])
            elif s[0] == "B":
                new_u[s[1]] = (new_u[s[1]][0], u)
            elif s[0] == "AB":
                new_u[s[1]] = u
        changes = {"feedback": FeedbackPlan(plan.mode, new_u, plan.final_hamiltonians, plan.references)}
        if ("dilation",) in us:
            m = t.measurement
            changes["measurement"] = IndirectMeasurement(us[("dilation",)], m.memory, m.dim_system)
        return t.replace(**changes)

    @classmethod
    def feedback_slots(cls, template: Scenario) -> "ParameterizedPlan":
        """Every feedback unitary of the template is free."""
        plan = template.feedback
        d_a, d_b = template.dims
        if plan.local:
            sides = [w for w, d in (("A", d_a), ("B", d_b)) if d > 1]
            slots = [(w, k) for k in sorted(plan.unitaries) for w in sides]
        else:
            slots = [("AB", k) for k in sorted(plan.unitaries)]
        return cls(template, tuple(slots))


# objective name -> (sign, reader); the search minimizes sign * value
def _net_work(ledger):
    return ledger.beta * ledger.w_net


def _work_a(ledger):
    if ledger.w_a is None:
        raise ValueError("extracted_work_A needs a local feedback plan")
    return ledger.beta * ledger.w_a


def _slack_reader(name):
    def read(ledger):
        rec = by_name(evaluate(ledger))[name]
        return rec.slack

    return read


def objective_function(objective: str):
    """Return ``(sign, reader)``; ``reader(ledger)`` is in nats (beta-scaled works)."""
    if objective == "net_work":
        return -1.0, _net_work
    if objective == "extracted_work_A":
        return -1.0, _work_a
    if objective.startswith("bound_slack"):
        name = objective.split(":", 1)[1] if ":" in objective else "e"
        return 1.0, _slack_reader(name)
    raise ValueError(f"unknown objective {objective!r}")


@dataclass
class OptimizationResult:
    best_params: np.ndarray
    best_value: float
    objective: str
    trace: list
    converged: bool
    restarts_used: int
    evaluations: int
    restart_values: list = field(default_factory=list)
    scenario: Scenario | None = None
    ledger: object = None


class _Objective:
    def __init__(self, plan: ParameterizedPlan, objective: str):
        self.plan = plan
        self.sign, self.reader = objective_function(objective)
        self.count = 0
        self.best = np.inf
        self.trace: list = []

    def __call__(self, x):
        self.count += 1
        try:
            v = self.sign * float(self.reader(run(self.plan.build(x))))
        except Exception as exc:
            raise OptimizationError(f"objective evaluation failed ({type(exc).__name__}: {exc})", np.array(x)) from exc
        if not np.isfinite(v):
            v = np.inf if self.sign > 0 or v > 0 else v
        if v < self.best:
            self.best = v
        self.trace.append(self.best)
        return v


def _simplex_diameter(simplex: np.ndarray) -> float:
    d = simplex[:, None, :] - simplex[None, :, :]
    return float(np.sqrt(np.max(np.sum(d * d, axis=-1))))


def _one_restart(args):
    plan, objective, budget, seed, r, method, x0 = args
    n = plan.n_params
    start = np.array(x0, dtype=float) if x0 is not None else np.random.default_rng([seed, r]).uniform(-np.pi, np.pi, n)
    f = _Objective(plan, objective)
    if method == "nelder-mead":
        simplex = np.vstack([start] + [start + SIMPLEX_STEP * e for e in np.eye(n)])
        res = minimize(f, start, method="Nelder-Mead", options={
            "maxfev": budget, "maxiter": 10 * budget, "xatol": CONVERGED_DIAMETER / 4,
            "fatol": 0.0, "initial_simplex": simplex, "adaptive": n > 4,
        })
        converged = _simplex_diameter(res.final_simplex[0]) < CONVERGED_DIAMETER
        x, fx = res.final_simplex[0][0], res.final_simplex[1][0]
    elif method == "gradient":
        def grad(x):
            g = np.empty(n)
            for i in range(n):
                e = np.zeros(n)
                e[i] = FD_STEP
                g[i] = (f(x + e) - f(x - e)) / (2 * FD_STEP)
            return g

        res = minimize(f, start, jac=grad, method="BFGS", options={"maxiter": max(1, budget // (2 * n + 1)), "gtol": 1e-10})
        x, fx = res.x, res.fun
        converged = bool(res.success)
    else:
        raise ValueError(f"unknown method {method!r}")
    return r, np.asarray(x, dtype=float), float(fx), converged, f.count, f.trace


def optimize(template: Scenario, plan: ParameterizedPlan | None = None, objective: str = "net_work",
             budget: int = DEFAULT_BUDGET, seed: int = 0, restarts: int = DEFAULT_RESTARTS,
             method: str = "nelder-mead", workers: int = 1, x0=None) -> OptimizationResult:
    """Multi-restart search; ``budget`` caps the objective evaluations of each restart.

    Restart ``r`` starts from a point drawn uniformly from [-pi, pi]^n with
    ``default_rng([seed, r])`` (or from ``x0`` for the first restart).  Among
    equal objective values the lexicographically smallest vector wins.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    plan = plan or ParameterizedPlan.feedback_slots(template)
    objective_function(objective)  # fail fast on unknown names
    jobs = [(plan, objective, int(budget), int(seed), r, method, x0 if r == 0 else None) for r in range(restarts)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_one_restart, jobs))
    else:
        results = [_one_restart(j) for j in jobs]
    results.sort(key=lambda t: t[0])

    best = min(results, key=lambda t: (t[2], tuple(t[1])))
    sign, _ = objective_function(objective)
    _, x, fx, conv, _, trace = best
    scenario = plan.build(x)
    return OptimizationResult(
        best_params=x,
        best_value=sign * fx,
        objective=objective,
        trace=[sign * v for v in trace],
        converged=conv,
        restarts_used=len(results),
        evaluations=sum(t[4] for t in results),
        restart_values=[sign * t[2] for t in results],
        scenario=scenario,
        ledger=run(scenario),
    )


# --------------------------------------------------------------------------- sweeps

SWEEP_AXES = ("beta", "gap", "angle")
SWEEP_FIELDS = ("i_a_x", "i_b_x", "i_ab_x", "i_ab", "i_ab_given_x", "h_x", "w_a", "w_b", "w_mes", "w_ers", "w_net",
                "df_ab", "df_m", "sigma_mes", "sigma_net")


def _sweep_point(args):
    template, axis, value = args
    from . import demos
    from .infotheory import OutcomeEnsemble, balance_identity_residual

    try:
        if isinstance(template, str):
            s = demos.build(template, **{axis: value})
        elif callable(template):
            s = template(**{axis: value})
        elif axis == "beta":
            s = template.replace(beta=value)
        else:
            raise ValueError(f"axis {axis!r} needs a demo name or a builder, not a fixed scenario")
        ledger = run(s)
    except Exception as exc:
        return {"axis": axis, "value": value, "error": f"{type(exc).__name__}: {exc}"}
    row = {"axis": axis, "value": value, "error": ""}
    for f in SWEEP_FIELDS:
        v = getattr(ledger, f)
        row[f] = ledger.beta * v if (v is not None and f.startswith(("w_", "df_"))) else v
    ens = OutcomeEnsemble(tuple((k, ledger.probabilities[k], ledger.rho_ab[k]) for k in ledger.labels))
    row["balance_residual"] = balance_identity_residual(ledger.rho_i, ens)
    for r in evaluate(ledger):
        row[f"slack_{r.name}"] = r.slack if r.applicable else None
    return row


def sweep(template, axis: str, grid, workers: int = 1) -> list[dict]:
    """One ledger and bound report per grid point.

    ``template`` is a demo name, a builder ``f(beta=..., gap=..., angle=...)``
    or a fixed scenario (beta axis only).  Work-valued columns are multiplied
    by beta.  Failing points get an ``error`` entry and the sweep continues.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    grid = [float(v) for v in grid]
    if not grid:
        raise ValueError("sweep grid is empty")
    jobs = [(template, axis, v) for v in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_sweep_point, jobs))
    return [_sweep_point(j) for j in jobs]


def sweep_csv(rows: list[dict]) -> str:
    cols: list = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else (repr(r[k]) if isinstance(r.get(k), float) else r[k])) for k in cols})
    return buf.getvalue()
