"""JSON scenario files.

Matrix literals are lists of rows.  A real entry is a number and a complex
entry is a pair ``[re, im]``.  Wherever a unitary is expected the object
``{"generator": G}`` may be given instead and stands for ``exp(-i G)``.  The
memory ``initial_state`` may be the string ``"canonical"`` for the canonical
state of the standard block at the scenario's beta.

Example (trimmed)::

    {
      "name": "bell-local",
      "beta": 1.0,
      "dims": [2, 2],
      "hamiltonians": {"A": [[0, 0], [0, 0]], "B": [[0, 0], [0, 0]]},
      "initial_state": {"recipe": "thermal-entangled"},
      "memory": {"block_dims": [1, 1], "block_hamiltonians": [[[0]], [[0]]],
                 "standard_block": 0, "initial_state": [[1, 0], [0, 0]]},
      "measurement": {"type": "dilation", "unitary": [[1, 0, 0, 0], ...]},
      "feedback": {"mode": "local", "outcomes": [
        {"outcome": 0, "unitary_A": ..., "unitary_B": ..., "hamiltonian_A": ..., "hamiltonian_B": ...}, ...]},
      "erasure": {"variant": "idealized"}
    }
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .measurement import IndirectMeasurement, KrausFamily, MemoryModel
from .protocol import ErasureModel, FeedbackPlan, InitialState, Scenario, ScenarioError, SecondRound
from .qlinalg import DensityOperator, HermitianOperator, QuantumStateError, canonical_state, unitary_from_generator

FORMAT_VERSION = 1


class ScenarioParseError(ScenarioError):
    """Malformed scenario text; carries the line and column of the problem."""

    def __init__(self, source: str, line: int, column: int, message: str):
        super().__init__(f"{source}:{line}:{column}", message)
        self.line = line
        self.column = column


# --------------------------------------------------------------------------- literals


def _matrix(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ScenarioError(path, "matrix literal must be a non-empty list of rows")
    n = len(value[0])
    if any(len(r) != n for r in value):
        raise ScenarioError(path, "matrix rows have different lengths")
    out = np.empty((len(value), n), dtype=np.complex128)
    for i, row in enumerate(value):
        for j, x in enumerate(row):
            if isinstance(x, bool):
                raise ScenarioError(f"{path}[{i}][{j}]", "expected a number or a [re, im] pair")
            if isinstance(x, (int, float)):
                out[i, j] = float(x)
            elif isinstance(x, list) and len(x) == 2 and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in x):
                out[i, j] = complex(float(x[0]), float(x[1]))
            else:
                raise ScenarioError(f"{path}[{i}][{j}]", "expected a number or a [re, im] pair")
    if not np.all(np.isfinite(out)):
        raise ScenarioError(path, "matrix entries must be finite")
    return out


def _unitary_literal(value, path: str) -> np.ndarray:
    if isinstance(value, dict):
        if set(value) != {"generator"}:
            raise ScenarioError(path, "a unitary object must have exactly the key 'generator'")
        g = _matrix(value["generator"], path + ".generator")
        try:
            return unitary_from_generator(HermitianOperator(g))
        except ScenarioError:
            raise
        except QuantumStateError as exc:
            raise ScenarioError(path + ".generator", str(exc)) from None
    return _matrix(value, path)


def _hamiltonian(value, path: str) -> HermitianOperator:
    try:
        return HermitianOperator(_matrix(value, path))
    except ScenarioError:
        raise
    except QuantumStateError as exc:
        raise ScenarioError(path, str(exc)) from None


def _density_literal(value, path: str) -> DensityOperator:
    try:
        return DensityOperator(_matrix(value, path))
    except ScenarioError:
        raise
    except QuantumStateError as exc:
        raise ScenarioError(path, str(exc)) from None


def matrix_literal(m) -> list:
    """Inverse of the matrix parser; real entries are written as plain numbers."""
    m = np.asarray(m.matrix if hasattr(m, "matrix") else m)
    rows = []
    for row in m:
        out = []
        for x in row:
            x = complex(x)
            out.append(x.real if x.imag == 0 else [x.real, x.imag])
        rows.append(out)
    return rows


# --------------------------------------------------------------------------- parsing helpers


def _get(d: dict, key: str, path: str, default=...):
    if not isinstance(d, dict):
        raise ScenarioError(path, "expected an object")
    if key in d:
        return d[key]
    if default is ...:
        raise ScenarioError(f"{path}.{key}" if path else key, "missing required field")
    return default


def _check_keys(d: dict, allowed: set, path: str) -> None:
    if not isinstance(d, dict):
        raise ScenarioError(path, "expected an object")
    extra = sorted(set(d) - allowed)
    if extra:
        raise ScenarioError(path, f"unknown field(s) {', '.join(extra)}")


def _label(value, path: str):
    if isinstance(value, bool) or not isinstance(value, (int, list)):
        raise ScenarioError(path, "outcome labels are integers (or [k, l] pairs in the second round)")
    return tuple(value) if isinstance(value, list) else value


def _wrap(path: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ScenarioError:
        raise
    except (QuantumStateError, ValueError, TypeError) as exc:
        raise ScenarioError(path, str(exc)) from None


# --------------------------------------------------------------------------- sections


def _memory(d, beta: float, path: str) -> MemoryModel:
    _check_keys(d, {"block_dims", "block_hamiltonians", "standard_block", "initial_state"}, path)
    dims = _get(d, "block_dims", path)
    if not isinstance(dims, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in dims):
        raise ScenarioError(path + ".block_dims", "expected a list of integers")
    hams = _get(d, "block_hamiltonians", path)
    if not isinstance(hams, list):
        raise ScenarioError(path + ".block_hamiltonians", "expected a list of matrix literals")
    hams = [_hamiltonian(h, f"{path}.block_hamiltonians[{i}]") for i, h in enumerate(hams)]
    std = _get(d, "standard_block", path, 0)
    init = _get(d, "initial_state", path)
    if init == "canonical":
        if not isinstance(std, int) or not 0 <= std < len(hams) or len(hams) != len(dims):
            raise ScenarioError(path + ".standard_block", "out of range")
        block, _ = canonical_state(hams[std], beta)
        rho = np.zeros((sum(dims), sum(dims)), dtype=np.complex128)
        o = sum(dims[:std])
        rho[o:o + dims[std], o:o + dims[std]] = block.matrix
    else:
        rho = _density_literal(init, path + ".initial_state")
    return _wrap(path, MemoryModel, tuple(dims), tuple(hams), rho, std)


def _measurement(d, memory: MemoryModel, dim_system: int, path: str):
    kind = _get(d, "type", path)
    if kind == "dilation":
        _check_keys(d, {"type", "unitary"}, path)
        u = _unitary_literal(_get(d, "unitary", path), path + ".unitary")
        return _wrap(path, IndirectMeasurement, u, memory, dim_system)
    if kind == "kraus":
        _check_keys(d, {"type", "outcomes"}, path)
        ops, labels = {}, {}
        entries = _get(d, "outcomes", path)
        if not isinstance(entries, list):
            raise ScenarioError(path + ".outcomes", "expected a list")
        for i, e in enumerate(entries):
            p = f"{path}.outcomes[{i}]"
            _check_keys(e, {"outcome", "operators", "labels"}, p)
            k = _label(_get(e, "outcome", p), p + ".outcome")
            mats = _get(e, "operators", p)
            if not isinstance(mats, list):
                raise ScenarioError(p + ".operators", "expected a list of matrix literals")
            ops[k] = [_matrix(m, f"{p}.operators[{j}]") for j, m in enumerate(mats)]
            if "labels" in e:
                labels[k] = [tuple(x) for x in e["labels"]]
        if labels and set(labels) != set(ops):
            raise ScenarioError(path, "labels must be given for every outcome or none")
        return _wrap(path, KrausFamily, ops, labels or None)
    raise ScenarioError(path + ".type", f"expected 'dilation' or 'kraus', got {kind!r}")


def _feedback(d, path: str) -> FeedbackPlan:
    _check_keys(d, {"mode", "outcomes"}, path)
    mode = _get(d, "mode", path)
    entries = _get(d, "outcomes", path)
    if not isinstance(entries, list):
        raise ScenarioError(path + ".outcomes", "expected a list")
    us, hs, rs = {}, {}, {}
    for i, e in enumerate(entries):
        p = f"{path}.outcomes[{i}]"
        k = _label(_get(e, "outcome", p), p + ".outcome")
        if k in us:
            raise ScenarioError(p + ".outcome", f"duplicate outcome {k}")
        if mode == "local":
            _check_keys(e, {"outcome", "unitary_A", "unitary_B", "hamiltonian_A", "hamiltonian_B",
                            "reference_A", "reference_B"}, p)
            us[k] = (_unitary_literal(_get(e, "unitary_A", p), p + ".unitary_A"),
                     _unitary_literal(_get(e, "unitary_B", p), p + ".unitary_B"))
            hs[k] = (_hamiltonian(_get(e, "hamiltonian_A", p), p + ".hamiltonian_A"),
                     _hamiltonian(_get(e, "hamiltonian_B", p), p + ".hamiltonian_B"))
            if ("reference_A" in e) != ("reference_B" in e):
                raise ScenarioError(p, "give both reference_A and reference_B or neither")
            if "reference_A" in e:
                rs[k] = (_density_literal(e["reference_A"], p + ".reference_A"),
                         _density_literal(e["reference_B"], p + ".reference_B"))
        elif mode == "nonlocal":
            _check_keys(e, {"outcome", "unitary_AB", "hamiltonian_AB", "reference_AB"}, p)
            us[k] = _unitary_literal(_get(e, "unitary_AB", p), p + ".unitary_AB")
            hs[k] = _hamiltonian(_get(e, "hamiltonian_AB", p), p + ".hamiltonian_AB")
            if "reference_AB" in e:
                rs[k] = _density_literal(e["reference_AB"], p + ".reference_AB")
        else:
            raise ScenarioError(path + ".mode", f"expected 'local' or 'nonlocal', got {mode!r}")
    if rs and set(rs) != set(us):
        raise ScenarioError(path, "references must be given for every outcome or none")
    return FeedbackPlan(mode, us, hs, rs or None)


def _initial(d, path: str) -> InitialState:
    _check_keys(d, {"recipe", "weights", "matrix", "rho_A", "rho_B", "unitary", "references"}, path)
    recipe = _get(d, "recipe", path)
    kw = {}
    if "weights" in d:
        w = d["weights"]
        if not isinstance(w, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in w):
            raise ScenarioError(path + ".weights", "expected a list of numbers")
        kw["weights"] = tuple(float(x) for x in w)
    if "matrix" in d:
        kw["matrix"] = _matrix(d["matrix"], path + ".matrix")
    if "rho_A" in d:
        kw["rho_a"] = _matrix(d["rho_A"], path + ".rho_A")
    if "rho_B" in d:
        kw["rho_b"] = _matrix(d["rho_B"], path + ".rho_B")
    if "unitary" in d:
        kw["unitary"] = _unitary_literal(d["unitary"], path + ".unitary")
    if "references" in d:
        refs = d["references"]
        if not isinstance(refs, list) or len(refs) != 2:
            raise ScenarioError(path + ".references", "expected two matrix literals")
        kw["references"] = tuple(_matrix(r, f"{path}.references[{i}]") for i, r in enumerate(refs))
    return InitialState(recipe, **kw)


def _erasure(d, path: str) -> ErasureModel:
    _check_keys(d, {"variant", "bath_hamiltonian", "unitary"}, path)
    variant = _get(d, "variant", path, "idealized")
    if variant == "explicit":
        return ErasureModel(
            "explicit",
            _hamiltonian(_get(d, "bath_hamiltonian", path), path + ".bath_hamiltonian"),
            _unitary_literal(_get(d, "unitary", path), path + ".unitary"),
        )
    return ErasureModel(variant)


def _second_round(d, beta: float, dim_b: int, path: str) -> SecondRound:
    _check_keys(d, {"memory", "measurements", "feedback"}, path)
    mem = _memory(_get(d, "memory", path), beta, path + ".memory")
    meas = {}
    entries = _get(d, "measurements", path)
    if not isinstance(entries, list):
        raise ScenarioError(path + ".measurements", "expected a list")
    for i, e in enumerate(entries):
        p = f"{path}.measurements[{i}]"
        k = _label(_get(e, "outcome", p), p + ".outcome")
        body = {key: v for key, v in e.items() if key != "outcome"}
        meas[k] = _measurement(body, mem, dim_b, p)
    fb, hs = {}, {}
    for i, e in enumerate(_get(d, "feedback", path, [])):
        p = f"{path}.feedback[{i}]"
        _check_keys(e, {"outcome", "unitary_A", "unitary_B", "hamiltonian_A", "hamiltonian_B"}, p)
        key = _label(_get(e, "outcome", p), p + ".outcome")
        if not isinstance(key, tuple) or len(key) != 2:
            raise ScenarioError(p + ".outcome", "second-round outcomes are [k, l] pairs")
        fb[key] = (_unitary_literal(_get(e, "unitary_A", p), p + ".unitary_A"),
                   _unitary_literal(_get(e, "unitary_B", p), p + ".unitary_B"))
        if ("hamiltonian_A" in e) != ("hamiltonian_B" in e):
            raise ScenarioError(p, "give both hamiltonian_A and hamiltonian_B or neither")
        if "hamiltonian_A" in e:
            hs[key] = (_hamiltonian(e["hamiltonian_A"], p + ".hamiltonian_A"),
                       _hamiltonian(e["hamiltonian_B"], p + ".hamiltonian_B"))
    return SecondRound(meas, mem, fb, hs)


OPTIMIZE_KEYS = {"objective", "budget", "restarts", "seed", "free_slots", "method"}


def _optimize_block(d, path: str) -> dict:
    _check_keys(d, OPTIMIZE_KEYS, path)
    out = dict(d)
    if "free_slots" in out:
        slots = out["free_slots"]
        if not isinstance(slots, list) or not all(isinstance(s, list) and s for s in slots):
            raise ScenarioError(path + ".free_slots", 'expected a list like [["A", 0], ["B", 1]]')
        out["free_slots"] = [list(s) for s in slots]
    for key in ("budget", "restarts", "seed"):
        if key in out and (not isinstance(out[key], int) or isinstance(out[key], bool)):
            raise ScenarioError(f"{path}.{key}", "expected an integer")
    return out


SCENARIO_KEYS = {"format", "name", "beta", "dims", "hamiltonians", "initial_state", "memory", "measurement",
                 "feedback", "erasure", "second_round", "optimize"}


def scenario_from_dict(d: dict) -> Scenario:
    """Build and fully validate a scenario from parsed JSON."""
    _check_keys(d, SCENARIO_KEYS, "scenario")
    beta = _get(d, "beta", "")
    if isinstance(beta, bool) or not isinstance(beta, (int, float)) or not beta > 0:
        raise ScenarioError("beta", f"must be a positive number, got {beta!r}")
    beta = float(beta)
    dims = _get(d, "dims", "")
    if not isinstance(dims, list) or len(dims) != 2 or not all(isinstance(x, int) and not isinstance(x, bool) and x > 0 for x in dims):
        raise ScenarioError("dims", f"expected two positive integers, got {dims!r}")
    hams = _get(d, "hamiltonians", "")
    _check_keys(hams, {"A", "B"}, "hamiltonians")
    h_a = _hamiltonian(_get(hams, "A", "hamiltonians"), "hamiltonians.A")
    h_b = _hamiltonian(_get(hams, "B", "hamiltonians"), "hamiltonians.B")
    initial = _initial(_get(d, "initial_state", ""), "initial_state")
    memory = _memory(_get(d, "memory", ""), beta, "memory")
    meas = _measurement(_get(d, "measurement", ""), memory, dims[0], "measurement")
    plan = _feedback(_get(d, "feedback", ""), "feedback")
    erasure = _erasure(_get(d, "erasure", "", {"variant": "idealized"}), "erasure")
    sr = None
    if d.get("second_round") is not None:
        sr = _second_round(d["second_round"], beta, dims[1], "second_round")
    opt = _optimize_block(d["optimize"], "optimize") if d.get("optimize") is not None else None
    name = _get(d, "name", "", "")
    return Scenario(beta, tuple(dims), h_a, h_b, initial, memory, meas, plan, erasure, sr, name=str(name), optimize=opt)


def loads_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(source, exc.lineno, exc.colno, exc.msg) from None
    if not isinstance(d, dict):
        raise ScenarioParseError(source, 1, 1, "top level must be an object")
    return scenario_from_dict(d)


def load_scenario(path) -> Scenario:
    path = Path(path)
    return loads_scenario(path.read_text(encoding="utf-8"), str(path))


# --------------------------------------------------------------------------- writing


def _memory_dict(m: MemoryModel) -> dict:
    return {
        "block_dims": list(m.block_dims),
        "block_hamiltonians": [matrix_literal(h) for h in m.block_hamiltonians],
        "standard_block": m.standard_block,
        "initial_state": matrix_literal(m.initial_state),
    }


def _measurement_dict(meas) -> dict:
    if isinstance(meas, IndirectMeasurement):
        return {"type": "dilation", "unitary": matrix_literal(meas.joint_unitary)}
    return {
        "type": "kraus",
        "outcomes": [
            {"outcome": k, "operators": [matrix_literal(o) for o in meas.operators[k]],
             "labels": [list(x) for x in meas.labels[k]]}
            for k in sorted(meas.operators)
        ],
    }


def _label_out(k):
    return list(k) if isinstance(k, tuple) else k


def scenario_to_dict(s: Scenario) -> dict:
    plan = s.feedback
    outs = []
    for k in sorted(plan.unitaries):
        if plan.local:
            e = {"outcome": k,
                 "unitary_A": matrix_literal(plan.unitaries[k][0]), "unitary_B": matrix_literal(plan.unitaries[k][1]),
                 "hamiltonian_A": matrix_literal(plan.final_hamiltonians[k][0]),
                 "hamiltonian_B": matrix_literal(plan.final_hamiltonians[k][1])}
            if plan.references is not None:
                e["reference_A"] = matrix_literal(plan.references[k][0])
                e["reference_B"] = matrix_literal(plan.references[k][1])
        else:
            e = {"outcome": k, "unitary_AB": matrix_literal(plan.unitaries[k]),
                 "hamiltonian_AB": matrix_literal(plan.final_hamiltonians[k])}
            if plan.references is not None:
                e["reference_AB"] = matrix_literal(plan.references[k])
        outs.append(e)

    ini = s.initial
    init = {"recipe": ini.recipe}
    if ini.weights is not None:
        init["weights"] = [float(w) for w in ini.weights]
    for key, attr in (("matrix", "matrix"), ("rho_A", "rho_a"), ("rho_B", "rho_b"), ("unitary", "unitary")):
        v = getattr(ini, attr)
        if v is not None:
            init[key] = matrix_literal(v)
    if ini.references is not None:
        init["references"] = [matrix_literal(r) for r in ini.references]

    d = {
        "format": FORMAT_VERSION,
        "name": s.name,
        "beta": s.beta,
        "dims": list(s.dims),
        "hamiltonians": {"A": matrix_literal(s.h_a), "B": matrix_literal(s.h_b)},
        "initial_state": init,
        "memory": _memory_dict(s.memory),
        "measurement": _measurement_dict(s.measurement),
        "feedback": {"mode": plan.mode, "outcomes": outs},
    }
    er = s.erasure
    d["erasure"] = {"variant": er.variant}
    if er.variant == "explicit":
        d["erasure"]["bath_hamiltonian"] = matrix_literal(er.bath_hamiltonian)
        d["erasure"]["unitary"] = matrix_literal(er.unitary)
    if s.second_round is not None:
        sr = s.second_round
        d["second_round"] = {
            "memory": _memory_dict(sr.memory),
            "measurements": [{"outcome": k, **_measurement_dict(sr.measurements[k])} for k in sorted(sr.measurements)],
            "feedback": [],
        }
        for key in sorted(set(sr.feedback) | set(sr.final_hamiltonians)):
            e = {"outcome": _label_out(key)}
            ua, ub = sr.feedback.get(key, (np.eye(s.dims[0]), np.eye(s.dims[1])))
            e["unitary_A"], e["unitary_B"] = matrix_literal(ua), matrix_literal(ub)
            if key in sr.final_hamiltonians:
                e["hamiltonian_A"] = matrix_literal(sr.final_hamiltonians[key][0])
                e["hamiltonian_B"] = matrix_literal(sr.final_hamiltonians[key][1])
            d["second_round"]["feedback"].append(e)
    if s.optimize is not None:
        d["optimize"] = s.optimize
    return d


def _is_flat(v) -> bool:
    # numbers, [re, im] pairs, strings: things that fit on one line
    return isinstance(v, list) and all(
        isinstance(x, (int, float, str)) or (isinstance(x, list) and all(isinstance(c, (int, float)) for c in x))
        for x in v
    )


def _pretty(v, level: int = 0) -> str:
    pad, inner = "  " * level, "  " * (level + 1)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {_pretty(x, level + 1)}" for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(v, list):
        if _is_flat(v):
            return json.dumps(v, allow_nan=False)
        return "[\n" + ",\n".join(inner + _pretty(x, level + 1) for x in v) + "\n" + pad + "]"
    return json.dumps(v, allow_nan=False)


def dumps_scenario(s: Scenario) -> str:
    """Scenario as JSON text with one matrix row per line."""
    return _pretty(scenario_to_dict(s)) + "\n"


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_scenario(s: Scenario, path) -> None:
    atomic_write(path, dumps_scenario(s))


def bundled_names() -> list[str]:
    from importlib import resources

    root = resources.files("demonforge") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_bundled(name: str) -> Scenario:
    """Load one of the scenario files shipped with the package."""
    from importlib import resources

    f = resources.files("demonforge") / "scenarios" / f"{name}.json"
    if not f.is_file():
        raise ValueError(f"no bundled scenario {name!r}; available: {', '.join(bundled_names())}")
    return loads_scenario(f.read_text(encoding="utf-8"), f"<bundled {name}>")
