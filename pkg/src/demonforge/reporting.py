"""Text reports and machine-readable exports for ledgers, audits and sweeps.

Entropies are printed in nats and bits, works in units of kT (beta * W) with
the raw energy alongside.  Non-finite floats are written as the strings
``"inf"``, ``"-inf"`` and ``"nan"`` in JSON so the output stays valid JSON.
"""
from __future__ import annotations

import csv
import io
import json
import os
import sys
from dataclasses import fields

import numpy as np

from .bounds import InequalityRecord
from .protocol import LoccLedger, PreambleResult, RunLedger
from .scenario_io import matrix_literal

LN2 = float(np.log(2.0))

ENERGY_FIELDS = {"w_a", "w_b", "w_ab", "w_mes", "w_ers", "w_net", "q_ers", "df_a", "df_b", "df_ab", "df_m",
                 "apparatus_energy_delta"}
ENTROPY_FIELDS = {"sigma_a", "sigma_b", "sigma_mes", "sigma_ers", "sigma_net", "sigma_ab_prime", "sigma_cycle",
                  "sigma_cycle_prime", "sigma_ent_a", "sigma_ent_b", "delta_s", "mes_relative_entropy",
                  "i_a_x", "i_b_x", "i_ab_x", "i_ab", "i_ab_given_x", "h_x"}

GREEN, RED, DIM, RESET = "\x1b[32m", "\x1b[31m", "\x1b[2m", "\x1b[0m"


def color_enabled(stream=None) -> bool:
    """ANSI colors only for terminals, and never when DEMONFORGE_NO_COLOR is set."""
    if os.environ.get("DEMONFORGE_NO_COLOR") is not None:
        return False
    stream = stream if stream is not None else sys.stdout
    return bool(getattr(stream, "isatty", lambda: False)())


def _paint(text: str, code: str, color: bool) -> str:
    return f"{code}{text}{RESET}" if color else text


def fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, (bool, np.bool_)):
        return "yes" if x else "no"
    if isinstance(x, (int, np.integer)):
        return str(x)
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12g}"


# --------------------------------------------------------------------------- JSON export


def _jsonable(v):
    if v is None or isinstance(v, (bool, str)):
        return v
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if np.isfinite(v):
            return v
        return "nan" if np.isnan(v) else ("inf" if v > 0 else "-inf")
    if hasattr(v, "matrix") and hasattr(v, "dim"):
        return matrix_literal(v)
    if isinstance(v, np.ndarray):
        return matrix_literal(v) if v.ndim == 2 else [_jsonable(x) for x in v.tolist()]
    if isinstance(v, dict):
        return [{"key": _jsonable(list(k) if isinstance(k, tuple) else k), "value": _jsonable(x)} for k, x in v.items()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (LoccLedger, PreambleResult)):
        return {f.name: _jsonable(getattr(v, f.name)) for f in fields(v)}
    raise TypeError(f"cannot export {type(v).__name__}")


def ledger_to_dict(ledger: RunLedger, records=None) -> dict:
    """Every ledger field (states as matrix literals), the derived info part and the bound records."""
    d = {f.name: _jsonable(getattr(ledger, f.name)) for f in fields(ledger)}
    d["w_net_bound_info_part"] = _jsonable(ledger.w_net_bound_info_part)
    if records is not None:
        d["records"] = [record_dict(r) for r in records]
    return d


def record_dict(r: InequalityRecord) -> dict:
    return {k: _jsonable(v) for k, v in r.as_dict().items()}


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


# --------------------------------------------------------------------------- text report


def _entropy_line(name, v) -> str:
    if v is None:
        return f"  {name:<24} -"
    return f"  {name:<24} {fmt(v):>20} nats  {fmt(v / LN2 if np.isfinite(v) else v):>20} bits"


def _energy_line(name, v, beta) -> str:
    if v is None:
        return f"  {name:<24} -"
    return f"  {name:<24} {fmt(beta * v):>20} kT    {fmt(v):>20} energy"


def records_table(records, color: bool = False) -> list[str]:
    lines = [f"  {'rec':<10}{'lhs':>18} {'':>2} {'rhs':>18} {'slack':>18}  {'status':<9} hint"]
    for r in records:
        if not r.applicable:
            status = _paint(f"{'skipped':<9}", DIM, color)
        elif r.satisfied:
            status = _paint(f"{'ok':<9}", GREEN, color)
        else:
            status = _paint(f"{'VIOLATED':<9}", RED, color)
        sense = {"<=": "<=", ">=": ">=", "in": "in"}[r.sense]
        rhs = f"[0, {fmt(r.rhs)}]" if r.sense == "in" else fmt(r.rhs)
        hint = fmt(r.equality_hint) if r.equality_hint is not None else ""
        lines.append(f"  {'(' + r.name + ')':<10}{fmt(r.lhs):>18} {sense:>2} {rhs:>18} {fmt(r.slack):>18}  "
                     f"{status} {hint}")
    return lines


def ledger_report(ledger: RunLedger, records, color: bool = False, extra: list[str] | None = None) -> str:
    L = ledger
    b = L.beta
    out = [f"scenario {L.name or '(unnamed)'}", ""]
    out.append(f"  beta {fmt(b)}  dims {L.dims[0]}x{L.dims[1]}  feedback {L.mode}  recipe {L.recipe}  "
               f"erasure {L.erasure_variant}  measurement {'efficient' if L.efficient else 'inefficient'}")
    out.append("  outcomes " + ", ".join(f"{k}: p={fmt(L.probabilities[k])}" for k in L.labels))
    out += ["", "information"]
    for n in ("i_ab", "i_ab_given_x", "i_a_x", "i_b_x", "i_ab_x", "h_x"):
        out.append(_entropy_line(n, getattr(L, n)))
    out.append(_entropy_line("net_bound_info_part", L.w_net_bound_info_part))
    out += ["", "work and free energy"]
    for n in ("w_a", "w_b", "w_ab", "w_mes", "w_ers", "w_net", "q_ers", "df_a", "df_b", "df_ab", "df_m",
              "apparatus_energy_delta"):
        out.append(_energy_line(n, getattr(L, n), b))
    out += ["", "entropy production"]
    for n in ("sigma_a", "sigma_b", "sigma_mes", "sigma_ers", "sigma_net", "sigma_ab_prime", "sigma_cycle",
              "sigma_cycle_prime", "sigma_ent_a", "sigma_ent_b", "delta_s", "mes_relative_entropy"):
        out.append(_entropy_line(n, getattr(L, n)))
    out += ["", "flags and diagnostics"]
    for n in ("canonical_initial", "default_references", "memory_initial_canonical", "memory_post_canonical",
              "erasure_ok", "erasure_leakage", "td_a", "td_b", "td_ab", "td_mes"):
        out.append(f"  {n:<24} {fmt(getattr(L, n)):>20}")
    if L.checks:
        out.append(f"  {'max_cross_check':<24} {fmt(max(L.checks.values())):>20}")
    if L.locc is not None:
        lo = L.locc
        out += ["", "two-round LOCC"]
        for n in ("info_part", "one_round_info_part", "residual_conditional_mi", "i_a_xy", "i_b_xy", "h_xy"):
            out.append(_entropy_line(n, getattr(lo, n)))
        for n in ("w_net", "w_ers", "df_ab", "df_m"):
            out.append(_energy_line(n, getattr(lo, n), b))
        out.append(f"  {'rhs (nats)':<24} {fmt(lo.rhs):>20}")
        out.append(f"  {'one_round_rhs (nats)':<24} {fmt(lo.one_round_rhs):>20}")
    out += ["", "bounds (slack >= 0 holds; work records in units of kT)"]
    out += records_table(records, color)
    work = [r for r in records if r.work_form and r.applicable]
    if work:
        out += ["", "work records in energy units"]
        for r in work:
            out.append(f"  ({r.name}) lhs {fmt(r.lhs / b)}  rhs {fmt(r.rhs / b)}  slack {fmt(r.slack / b)}")
    n_bad = sum(r.violated for r in records)
    out += ["", f"violations: {n_bad}"]
    if extra:
        out += [""] + extra
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------- tables


RECORD_COLUMNS = ("name", "title", "lhs", "rhs", "sense", "slack", "applicable", "satisfied", "equality_hint")


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_csv(rows: list[dict], columns=None) -> str:
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns and k != "hint_parts":
                    columns.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_csv_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def rows_jsonl(rows: list[dict]) -> str:
    return "".join(json.dumps({k: _jsonable(v) for k, v in r.items()}, allow_nan=False) + "\n" for r in rows)


def record_rows(records, **prefix) -> list[dict]:
    return [{**prefix, **{c: r.as_dict()[c] for c in RECORD_COLUMNS}} for r in records]


def audit_report(summary, color: bool = False) -> str:
    s = summary
    out = [f"random audit: dims {s.dims[0]}x{s.dims[1]}, seed {s.seed}, {s.trials} trials, tolerance {fmt(s.tolerance)}", ""]
    out.append(f"  {'rec':<11}{'applicable':>10} {'violations':>10} {'min slack':>18} {'max slack':>18}")
    for name, st in s.records.items():
        v = _paint(f"{st.violations:>10}", RED if st.violations else GREEN, color)
        lo = fmt(st.min_slack) if st.applicable else "-"
        hi = fmt(st.max_slack) if st.applicable else "-"
        out.append(f"  {'(' + name + ')':<11}{st.applicable:>10} {v} {lo:>18} {hi:>18}")
    out += ["", "coverage"]
    out += [f"  {k:<32} {v}" for k, v in s.coverage.items()]
    out += ["", f"  max balance-identity residual {fmt(s.max_balance_residual)}",
            f"  max chain-rule residual       {fmt(s.max_chain_residual)}",
            f"  max cross-check residual      {fmt(s.max_check_residual)}"]
    if s.errors:
        out += ["", f"errors ({len(s.errors)})"] + [f"  trial {t}: {e}" for t, e in s.errors]
    out += ["", f"violations: {s.total_violations}"]
    return "\n".join(out) + "\n"
