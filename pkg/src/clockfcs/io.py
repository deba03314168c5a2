"""JSON descriptions of models, policies and currents.

Matrices are given either as nested lists of reals or as
``{"real": [[...]], "imag": [[...]]}``. Jump labels are objects
``{"a": 1, "j": 0}`` (``j`` may be a pair ``[l, k]`` for classical
transitions, and ``m`` may be added for a per-memory label).
"""
import json
from pathlib import Path

import numpy as np

from .errors import ModelError
from .fcs import IntegratedCurrent, hyperaccurate_current
from .feedback import FeedbackPolicy, build_joint, classical_feedback_rate_matrix, two_qubit_switching_policy
from .models import (
    ClassicalClockworkSpec,
    JumpLabel,
    LindbladSpec,
    compose_independent,
    control_family,
    cyclic_clockwork,
    cyclic_family,
    qubit_clockwork,
    qubit_family,
    unitary_from_generator,
)


class ConfigError(ModelError):
    """A configuration file is missing, malformed or inconsistent."""


def load_json(path):
    path = Path(path)
    try:
        with path.open() as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def resolve(obj, base_dir):
    """Inline object, or the content of the JSON file it names (relative to ``base_dir``)."""
    if isinstance(obj, str):
        return load_json(Path(base_dir) / obj)
    return obj


def _require(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(f"{where}: missing field {key!r}")
    return d[key]


def parse_matrix(obj, where="matrix"):
    if isinstance(obj, dict):
        real = np.asarray(_require(obj, "real", where), dtype=float)
        imag = np.asarray(obj.get("imag", np.zeros_like(real)), dtype=float)
        if real.shape != imag.shape:
            raise ConfigError(f"{where}: real and imaginary parts differ in shape")
        return real + 1j * imag
    try:
        return np.asarray(obj, dtype=float).astype(complex)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot read a matrix from {obj!r}") from None


def matrix_to_json(a):
    a = np.asarray(a, dtype=complex)
    return {"real": a.real.tolist(), "imag": a.imag.tolist()}


def parse_label(obj):
    if isinstance(obj, JumpLabel):
        return obj
    if not isinstance(obj, dict) or "a" not in obj or "j" not in obj:
        raise ConfigError(f"jump label must be an object with 'a' and 'j', got {obj!r}")
    j = obj["j"]
    j = tuple(j) if isinstance(j, list) else j
    return JumpLabel(int(obj["a"]), j, obj.get("m"))


def label_to_json(label):
    d = {"a": label.a, "j": list(label.j) if isinstance(label.j, tuple) else label.j}
    if label.m is not None:
        d["m"] = label.m
    return d


def _angle(d, where):
    if "phi_over_pi" in d:
        return float(d["phi_over_pi"]) * np.pi
    return float(_require(d, "phi", where))


def parse_family(d, base_dir="."):
    where = "family"
    kind = _require(d, "kind", where)
    if kind == "qubit":
        return qubit_family(float(d.get("Gamma", 1.0)), d.get("E_range", (0.0, np.inf)))
    if kind == "cyclic":
        return cyclic_family(int(_require(d, "num_states", where)), _require(d, "range", where))
    if kind == "coupling":
        base = {k: parse_matrix(_require(d, k, where), k) for k in ("h1", "h2", "h_int")}
        base["jumps"] = {
            parse_label(_require(row, "label", f"jumps[{k}]")): parse_matrix(_require(row, "matrix", f"jumps[{k}]"))
            for k, row in enumerate(d.get("jumps", []))
        }
        return control_family(kind, base, d.get("range", (0.0, np.inf)))
    if kind in ("energy", "jump_strength", "time_unitary"):
        base = parse_model(resolve(_require(d, "base", where), base_dir), base_dir)
        unitary = None
        if kind == "time_unitary":
            unitary = unitary_from_generator(parse_matrix(_require(d, "generator", where), "generator"))
        return control_family(kind, base, d.get("range", (0.0, np.inf)), unitary)
    raise ConfigError(f"unknown family kind {kind!r}")


def parse_policy(d, families=None):
    """Read a policy. Memory states are referred to by name in the file."""
    where = "policy"
    names = list(_require(d, "memory_states", where))
    if not names:
        raise ConfigError("policy: memory_states must not be empty")

    def index(name, ctx):
        if name not in names:
            raise ConfigError(f"policy: {ctx} refers to unknown memory state {name!r}")
        return names.index(name)

    update = {}
    for k, row in enumerate(_require(d, "update_table", where)):
        ctx = f"update_table[{k}]"
        m = index(_require(row, "m", ctx), ctx)
        label = parse_label(_require(row, "label", ctx))
        update[(m, label)] = index(_require(row, "next_m", ctx), ctx)
    params = {}
    for k, row in enumerate(_require(d, "params", where)):
        ctx = f"params[{k}]"
        params[(index(_require(row, "m", ctx), ctx), int(_require(row, "a", ctx)))] = _require(row, "c", ctx)
    policy = FeedbackPolicy(tuple(names), update, params)
    if families is not None:
        policy.validate(families)
    return policy


def parse_model(d, base_dir="."):
    """Build a LindbladSpec, ClassicalClockworkSpec or JointSystem from a description."""
    where = "model"
    if isinstance(d, str):
        return parse_model(load_json(Path(base_dir) / d), Path(base_dir) / Path(d).parent)
    kind = d.get("kind", "lindblad" if "hamiltonian" in d else "classical" if "rates" in d else None)
    if kind == "qubit":
        Gamma = float(d.get("Gamma", 1.0))
        E = float(d["E"]) if "E" in d else float(_require(d, "Delta", where)) * Gamma
        return qubit_clockwork(E, _angle(d, where), Gamma)
    if kind == "classical":
        rates = np.asarray(_require(d, "rates", where), dtype=float)
        if "num_states" in d and rates.shape != (d["num_states"], d["num_states"]):
            raise ConfigError(f"model: rates shape {rates.shape} does not match num_states {d['num_states']}")
        return ClassicalClockworkSpec(rates)
    if kind == "cyclic":
        return cyclic_clockwork(_require(d, "rates", where))
    if kind == "lindblad":
        h = parse_matrix(_require(d, "hamiltonian", where), "hamiltonian")
        jumps = {}
        for k, row in enumerate(d.get("jumps", [])):
            label = parse_label(_require(row, "label", f"jumps[{k}]"))
            if label in jumps:
                raise ConfigError(f"model: duplicate jump label {label}")
            jumps[label] = parse_matrix(_require(row, "matrix", f"jumps[{k}]"), f"jumps[{k}].matrix")
        if "dim" in d and h.shape[0] != d["dim"]:
            raise ConfigError(f"model: hamiltonian has dimension {h.shape[0]}, expected {d['dim']}")
        return LindbladSpec(h, jumps)
    if kind == "composite":
        return compose_independent([parse_model(resolve(c, base_dir), base_dir) for c in _require(d, "components", where)])
    if kind == "feedback":
        families = [parse_family(resolve(f, base_dir), base_dir) for f in _require(d, "families", where)]
        policy = parse_policy(resolve(_require(d, "policy", where), base_dir), families)
        if d.get("classical", False):
            if not all(f.classical for f in families):
                raise ConfigError("model: classical feedback needs cyclic families")
            dims = [f(policy.gamma(a, 0)).dim for a, f in enumerate(families, start=1)]
            return classical_feedback_rate_matrix(dims, policy)
        return build_joint(families, policy)
    if kind == "two-qubit-feedback":
        Gamma = float(d.get("Gamma", 1.0))
        families, policy = two_qubit_switching_policy(
            float(_require(d, "alpha1", where)),
            float(_require(d, "alpha2", where)),
            float(d["E_star"]) if "E_star" in d else float(_require(d, "Delta_star", where)) * Gamma,
            _angle({"phi": d["phi_star"]} if "phi_star" in d else {"phi_over_pi": _require(d, "phi_star_over_pi", where)}, where),
            Gamma,
        )
        return build_joint(families, policy)
    raise ConfigError(f"unknown model kind {kind!r}")


def system_labels(system):
    from .fcs import CountingStatistics

    if isinstance(system, ClassicalClockworkSpec):
        return CountingStatistics(system, check=False).labels
    spec = getattr(system, "spec", system)
    return spec.labels


def parse_current(d, system):
    """Read a current for ``system``; ``None`` means the total count."""
    labels = system_labels(system)
    if d is None or d == "total_count" or (isinstance(d, dict) and d.get("total_count")):
        return IntegratedCurrent.total_count(dict.fromkeys(lab.base for lab in labels))
    if d == "hyperaccurate" or (isinstance(d, dict) and d.get("hyperaccurate")):
        return hyperaccurate_current(system)
    weights = {}
    for k, row in enumerate(_require(d, "weights", "current")):
        weights[parse_label(_require(row, "label", f"weights[{k}]"))] = float(_require(row, "w", f"weights[{k}]"))
    current = IntegratedCurrent(weights)
    try:
        current.validate(labels)
    except ModelError as exc:
        raise ConfigError(f"current: {exc}") from None
    return current


def current_to_json(current):
    return {"weights": [{"label": label_to_json(k), "w": w} for k, w in current.weights.items()]}


def model_to_json(spec):
    if isinstance(spec, ClassicalClockworkSpec):
        return {"kind": "classical", "num_states": spec.num_states, "rates": spec.rates.tolist()}
    return {
        "kind": "lindblad",
        "dim": spec.dim,
        "hamiltonian": matrix_to_json(spec.hamiltonian),
        "jumps": [{"label": label_to_json(k), "matrix": matrix_to_json(v)} for k, v in spec.jumps.items()],
    }
