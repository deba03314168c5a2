"""Command-line entry point.

Every command prints one JSON summary line to stdout; tables go to the file
named by ``--output``. Options can come from a JSON run config
(``--config``); flags given on the command line override it.

Exit status: 0 success, 2 configuration error, 3 numerical error,
4 bound violation found by ``verify-theorem1``.
"""
import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import ModelError, NumericalError
from .fcs import CountingStatistics, cur_bound, kur_bound, theorem1_bound
from .io import ConfigError, load_json, parse_current, parse_family, parse_model, parse_policy, resolve
from .models import ClassicalClockworkSpec, is_classical
from .sweep import FLOAT_FORMAT, Axis, compare_constant_vs_feedback, make_objective, refine, sweep, sweep_and_refine

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VIOLATION = 0, 2, 3, 4
COMMANDS = ("snr", "bounds", "sweep", "optimize", "simulate", "verify-theorem1", "compare")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def emit(record, stream=None):
    stream = stream or sys.stdout
    stream.write(json.dumps(_jsonable(record), sort_keys=False) + "\n")


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([FLOAT_FORMAT % v if isinstance(v, (float, np.floating)) else v for v in row])
    Path(path).write_text(buf.getvalue())


def build_parser():
    parser = _Parser(prog="clockfcs", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON run config; command-line flags override its fields")
    parser.add_argument("--model", help="model file (JSON)")
    parser.add_argument("--current", help="current file (JSON); default: total count")
    parser.add_argument("--output", help="CSV file for tables")
    parser.add_argument("--threads", type=int, help="worker threads (default: CLOCKFCS_THREADS or all cores)")
    parser.add_argument("--objective", help="sweep/optimize objective: qubit, qubit-analytic, two-qubit-feedback")
    parser.add_argument(
        "--axis", action="append", help="sweep axis name:min:max:n[:periodic]; repeat once per parameter"
    )
    parser.add_argument("--start", help="comma separated start point for optimize")
    parser.add_argument("--bounds", help="optimize bounds lo:hi,lo:hi,...")
    parser.add_argument("--horizon", type=float, help="simulation horizon T")
    parser.add_argument("--trajectories", type=int, help="number of trajectories")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--trials", type=int, help="verify-theorem1: number of random instances")
    parser.add_argument("--currents", type=int, help="verify-theorem1: random currents per instance")
    return parser


def _parse_axis(text):
    parts = text.split(":")
    if len(parts) not in (4, 5) or (len(parts) == 5 and parts[4] != "periodic"):
        raise ConfigError(f"axis {text!r} is not name:min:max:n[:periodic]")
    try:
        return Axis(parts[0], float(parts[1]), float(parts[2]), int(parts[3]), len(parts) == 5)
    except ValueError:
        raise ConfigError(f"axis {text!r} has a non-numeric field") from None


def _axis_from_config(obj):
    if isinstance(obj, str):
        return _parse_axis(obj)
    try:
        return Axis(obj["name"], float(obj["min"]), float(obj["max"]), int(obj["n_points"]), bool(obj.get("periodic", False)))
    except (KeyError, TypeError):
        raise ConfigError(f"axis {obj!r} needs name, min, max and n_points") from None


def _floats(text, what):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"{what} {text!r} is not a comma separated list of numbers") from None


def merge_config(args):
    """Combine the run config with command-line flags (flags win)."""
    opts, base = {}, Path(".")
    if args.config:
        opts = load_json(args.config)
        if not isinstance(opts, dict):
            raise ConfigError("run config must be a JSON object")
        base = Path(args.config).parent
        if opts.get("command", args.command) != args.command:
            raise ConfigError(f"config is for command {opts['command']!r}, not {args.command!r}")
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "config"):
            opts[key] = value
    if isinstance(args.axis, list):
        opts["axis"] = args.axis
    return opts, base


def _system(opts, base):
    if "model" not in opts:
        raise ConfigError("a model is required (--model or 'model' in the config)")
    model = opts["model"]
    if isinstance(model, str):
        path = base / model if not Path(model).is_absolute() else Path(model)
        return parse_model(load_json(path), path.parent)
    return parse_model(model, base)


def _current(opts, base, system):
    cur = opts.get("current")
    if isinstance(cur, str) and cur not in ("total_count", "hyperaccurate"):
        path = base / cur if not Path(cur).is_absolute() else Path(cur)
        cur = load_json(path)
    return parse_current(cur, system)


def cmd_snr(opts, base):
    system = _system(opts, base)
    result = CountingStatistics(system).evaluate(_current(opts, base, system))
    record = result.record()
    if opts.get("output"):
        write_csv(opts["output"], list(record), [[record[k] if record[k] is not None else "" for k in record]])
    return record, EXIT_OK


def cmd_bounds(opts, base):
    system = _system(opts, base)
    record = CountingStatistics(system).evaluate(_current(opts, base, system)).record()
    classical = isinstance(system, ClassicalClockworkSpec) or is_classical(getattr(system, "spec", system))
    if classical:
        A, tau = kur_bound(system), cur_bound(system)
        record.update({"kur_bound": A, "cur_bound": 1.0 / tau, "residual_time": tau})
    model = opts["model"] if not isinstance(opts["model"], str) else load_json(base / opts["model"])
    if isinstance(model, dict) and model.get("kind") == "feedback" and model.get("classical"):
        mbase = base if not isinstance(opts["model"], str) else (base / opts["model"]).parent
        families = [parse_family(resolve(f, mbase), mbase) for f in model["families"]]
        policy = parse_policy(resolve(model["policy"], mbase), families)
        record["theorem1_bound"] = theorem1_bound(policy, families)
    if opts.get("output"):
        write_csv(opts["output"], list(record), [[v if v is not None else "" for v in record.values()]])
    return record, EXIT_OK


def _objective(opts):
    name = opts.get("objective")
    if not name:
        raise ConfigError("an objective is required (--objective)")
    return make_objective(name, **opts.get("objective_params", {}))


def cmd_sweep(opts, base):
    objective = _objective(opts)
    axes = [_axis_from_config(a) for a in opts.get("axis", [])]
    if not axes:
        raise ConfigError("sweep needs at least one --axis")
    table = sweep(axes, objective, opts.get("threads"))
    if opts.get("output"):
        Path(opts["output"]).write_text(table.to_csv())
    x, best = table.best()
    flagged = sum(1 for _, ev in table.rows if ev.flags)
    record = {"rows": len(table.rows), "flagged": flagged, "best": dict(zip(table.axes, x.tolist())), "S": best.S}
    return record, EXIT_OK


def cmd_optimize(opts, base):
    objective = _objective(opts)
    axes = [_axis_from_config(a) for a in opts.get("axis", [])]
    bounds = None
    if opts.get("bounds"):
        pairs = opts["bounds"].split(",") if isinstance(opts["bounds"], str) else opts["bounds"]
        try:
            bounds = [tuple(float(v) for v in (p.split(":") if isinstance(p, str) else p)) for p in pairs]
        except ValueError:
            raise ConfigError(f"bounds {opts['bounds']!r} are not lo:hi pairs") from None
    if axes:
        _, report = sweep_and_refine(axes, objective, bounds, opts.get("threads"))
    else:
        if "start" not in opts or bounds is None:
            raise ConfigError("optimize needs --axis for a grid, or --start and --bounds")
        start = _floats(opts["start"], "start") if isinstance(opts["start"], str) else list(opts["start"])
        report = refine(start, objective, bounds)
    if opts.get("output"):
        names = list(objective.axes)
        write_csv(opts["output"], ["iteration"] + names + ["S"], [[i] + list(x) + [v] for i, (x, v) in enumerate(report.refinement_trace)])
    record = report.record()
    record["axes"] = list(objective.axes)
    return record, EXIT_OK


def cmd_simulate(opts, base):
    from .trajectories import DEFAULT_TRAJECTORIES, simulate

    system = _system(opts, base)
    current = _current(opts, base, system)
    stats = simulate(
        system,
        current,
        T=opts.get("horizon"),
        n_traj=int(opts.get("trajectories", DEFAULT_TRAJECTORIES)),
        seed=int(opts.get("seed", 0)),
        threads=opts.get("threads"),
    )
    record = stats.record()
    try:
        exact = CountingStatistics(system).evaluate(current)
    except NumericalError:
        exact = None
    if exact is not None:
        record.update({"F": exact.F, "D": exact.D, "agrees_3se": stats.agrees(exact.F, exact.D)})
    if opts.get("output"):
        write_csv(opts["output"], list(record), [list(record.values())])
    return record, EXIT_OK


def cmd_verify_theorem1(opts, base):
    from .randomized import verify_theorem1

    report = verify_theorem1(
        trials=int(opts.get("trials", 100)),
        seed=int(opts.get("seed", 0)),
        currents=int(opts.get("currents", 20)),
    )
    record = report.record()
    if opts.get("output"):
        write_csv(opts["output"], ["trial", "S", "bound"], report.violations)
    return record, EXIT_OK if report.ok else EXIT_VIOLATION


def cmd_compare(opts, base):
    kwargs = {}
    if "alpha_bounds" in opts:
        kwargs["alpha_bounds"] = opts["alpha_bounds"]
    if "Gamma" in opts:
        kwargs["Gamma"] = float(opts["Gamma"])
    record = compare_constant_vs_feedback(**kwargs).record()
    if opts.get("output"):
        write_csv(opts["output"], list(record), [[json.dumps(v) if isinstance(v, list) else v for v in record.values()]])
    return record, EXIT_OK


HANDLERS = {
    "snr": cmd_snr,
    "bounds": cmd_bounds,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "verify-theorem1": cmd_verify_theorem1,
    "compare": cmd_compare,
}


def run(argv=None):
    """Run one command; returns the exit status."""
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        opts, base = merge_config(args)
        record, status = HANDLERS[command](opts, base)
        emit(dict({"command": command, "status": status}, **record))
        return status
    except (ModelError, OSError) as exc:
        status, kind, message = EXIT_CONFIG, "config", str(exc)
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        status, kind, message = EXIT_NUMERICAL, "numerical", str(exc)
    emit({"command": command, "status": status, "error": kind, "message": message})
    return status


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
