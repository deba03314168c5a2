"""Grid sweeps, simplex refinement and the constant-versus-feedback comparison."""
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ClockFcsError, ModelError
from .fcs import CountingStatistics, IntegratedCurrent, analytic_qubit_snr
from .feedback import build_joint, two_qubit_switching_policy
from .models import JumpLabel, compose_independent, qubit_clockwork

FLOAT_FORMAT = "%.12g"
DIAMETER_TOL = 1e-4
MAX_EVALS = 500
ADVANTAGE_MARGIN = 1e-3


@dataclass(frozen=True)
class Axis:
    """Linearly spaced axis. Periodic axes leave out the endpoint ``max``."""

    name: str
    min: float
    max: float
    n_points: int
    periodic: bool = False

    def __post_init__(self):
        if self.n_points < 1:
            raise ModelError(f"axis {self.name}: n_points must be positive")
        if self.n_points > 1 and not self.min < self.max:
            raise ModelError(f"axis {self.name}: need min < max")
        if not (math.isfinite(self.min) and math.isfinite(self.max)):
            raise ModelError(f"axis {self.name}: bounds must be finite")

    def points(self):
        if self.n_points == 1:
            return np.array([float(self.min)])
        return np.linspace(self.min, self.max, self.n_points, endpoint=not self.periodic)


@dataclass
class Evaluation:
    F: float = float("nan")
    D: float = float("nan")
    S: float = float("nan")
    flags: str = ""

    @property
    def value(self):
        """Objective used for maximization: finite S or -inf."""
        return self.S if self.flags in ("", "degenerate") and math.isfinite(self.S) else -math.inf


class Objective:
    """Named evaluator mapping a parameter vector to (F, D, S)."""

    def __init__(self, name, axes, func, periodic=None):
        self.name = name
        self.axes = tuple(axes)
        self.func = func
        self.periodic = tuple(periodic) if periodic is not None else tuple(False for _ in self.axes)

    def __call__(self, x):
        try:
            res = self.func(np.asarray(x, dtype=float))
        except ClockFcsError as exc:
            return Evaluation(flags=f"error: {exc}")
        if res.divergent:
            # keep the table finite; the flag column carries the information
            return Evaluation(res.F, res.D, 0.0, "divergent")
        return Evaluation(res.F, res.D, res.S, res.flags)


def qubit_objective(Gamma=1.0):
    """Total-count SNR of the qubit clockwork over (Delta, phi), in units of Gamma."""

    def func(x):
        spec = qubit_clockwork(x[0] * Gamma, x[1], Gamma)
        return CountingStatistics(spec, check=False).evaluate(IntegratedCurrent.total_count(spec.labels))

    return Objective("qubit", ("Delta", "phi"), func, (False, True))


def qubit_optimum(start=(1.0, math.pi), bounds=((0.05, 3.0), (0.0, 2 * math.pi))):
    return refine(start, qubit_objective(), bounds)


def two_qubit_feedback_objective(E_star, phi_star, Gamma=1.0):
    """Total-count SNR of two qubits under energy switching, over (alpha1, alpha2)."""
    current = IntegratedCurrent.total_count([JumpLabel(1, 0), JumpLabel(2, 0)])

    def func(x):
        families, policy = two_qubit_switching_policy(x[0], x[1], E_star, phi_star, Gamma)
        joint = build_joint(families, policy)
        return CountingStatistics(joint, check=False).evaluate(current)

    return Objective("two-qubit-feedback", ("alpha1", "alpha2"), func)


def analytic_qubit_objective():
    class _R:
        divergent = False
        flags = ""

    def func(x):
        r = _R()
        r.F, r.D, r.S = (float(v) for v in analytic_qubit_snr(x[0], x[1]))
        return r

    return Objective("qubit-analytic", ("Delta", "phi"), func, (False, True))


OBJECTIVES = {
    "qubit": lambda **kw: qubit_objective(kw.get("Gamma", 1.0)),
    "qubit-analytic": lambda **kw: analytic_qubit_objective(),
    "two-qubit-feedback": lambda **kw: two_qubit_feedback_objective(
        kw["E_star"], kw["phi_star"], kw.get("Gamma", 1.0)
    ),
}


def make_objective(name, **params):
    try:
        factory = OBJECTIVES[name]
    except KeyError:
        raise ModelError(f"unknown objective {name!r}; choose from {sorted(OBJECTIVES)}") from None
    if name == "two-qubit-feedback" and ("E_star" not in params or "phi_star" not in params):
        report = qubit_optimum()
        params = {"E_star": report.argmax[0] * params.get("Gamma", 1.0), "phi_star": report.argmax[1], **params}
    return factory(**params)


@dataclass
class SweepTable:
    axes: tuple
    rows: list

    def best(self):
        values = [ev.value for _, ev in self.rows]
        i = int(np.argmax(values))
        return self.rows[i]

    def to_csv(self):
        out = io.StringIO()
        out.write(",".join(list(self.axes) + ["F", "D", "S", "flags"]) + "\n")
        for x, ev in self.rows:
            nums = [FLOAT_FORMAT % v for v in list(x) + [ev.F, ev.D, ev.S]]
            flag = ev.flags.replace(",", ";").replace("\n", " ")
            out.write(",".join(nums + [flag]) + "\n")
        return out.getvalue()


def sweep(axes, objective, threads=None):
    """Evaluate ``objective`` on the Cartesian grid of ``axes`` (lexicographic order)."""
    axes = tuple(axes)
    if len(axes) != len(objective.axes):
        raise ModelError(f"objective {objective.name} takes {len(objective.axes)} axes, got {len(axes)}")
    points = [np.array(p) for p in itertools.product(*(ax.points() for ax in axes))]
    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(objective, points))
    else:
        results = [objective(p) for p in points]
    return SweepTable(tuple(ax.name for ax in axes), list(zip(points, results)))


@dataclass
class OptimumReport:
    argmax: np.ndarray
    value: float
    grid_argmax: np.ndarray
    refinement_trace: list = field(default_factory=list)
    evaluations: int = 0

    def record(self):
        return {
            "argmax": [float(v) for v in self.argmax],
            "value": float(self.value),
            "grid_argmax": [float(v) for v in self.grid_argmax],
            "iterations": len(self.refinement_trace),
            "evaluations": self.evaluations,
        }


def refine(start, objective, bounds, initial_step=0.1, tol=DIAMETER_TOL, max_evals=MAX_EVALS):
    """Nelder-Mead ascent on S from ``start``.

    Vertices live in unwrapped coordinates; periodic coordinates are wrapped
    into their interval only when evaluated, others are clamped to ``bounds``.
    Stops when the simplex diameter drops below ``tol`` or after ``max_evals``
    evaluations. The trace holds (best point, best value) per iteration.
    """
    start = np.asarray(start, dtype=float)
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    dim = start.size
    periodic = np.array(objective.periodic, dtype=bool)
    if bounds.shape[0] != dim or periodic.size != dim:
        raise ModelError("start, bounds and objective dimensions differ")
    lo, hi = bounds[:, 0], bounds[:, 1]
    inside = periodic | ((start >= lo) & (start <= hi))
    if not np.all(inside):
        raise ModelError(f"start {start.tolist()} lies outside the bounds")
    width = hi - lo

    def place(x):
        y = np.where(periodic, lo + np.mod(x - lo, np.where(width > 0, width, 1.0)), np.clip(x, lo, hi))
        return y

    evals = 0

    def value(x):
        nonlocal evals
        evals += 1
        return objective(place(x)).value

    f0 = value(start)
    if not math.isfinite(f0):
        raise ModelError(f"objective fails at the start point {start.tolist()}")
    if np.all(width[~periodic] == 0) and not np.any(periodic):
        return OptimumReport(start, f0, start, [], evals)

    simplex = [start.copy()]
    for k in range(dim):
        v = start.copy()
        step = initial_step * (width[k] if width[k] > 0 else 1.0)
        v[k] = v[k] + step if periodic[k] or v[k] + step <= hi[k] else v[k] - step
        simplex.append(place(v) if not periodic[k] else v)
    simplex = np.array(simplex)
    values = np.array([f0] + [value(v) for v in simplex[1:]])
    if np.all(values == f0):
        return OptimumReport(start, f0, start, [], evals)

    trace = []
    while evals < max_evals:
        order = np.argsort(-values, kind="stable")
        simplex, values = simplex[order], values[order]
        trace.append((place(simplex[0]), float(values[0])))
        diameter = max(np.linalg.norm(a - b) for a in simplex for b in simplex)
        if diameter < tol:
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + (centroid - worst)
        fr = value(xr)
        if fr > values[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = value(xe)
            simplex[-1], values[-1] = (xe, fe) if fe > fr else (xr, fr)
        elif fr > values[-2]:
            simplex[-1], values[-1] = xr, fr
        else:
            if fr > values[-1]:
                xc = centroid + 0.5 * (xr - centroid)
            else:
                xc = centroid + 0.5 * (worst - centroid)
            fc = value(xc)
            if fc > max(fr, values[-1]):
                simplex[-1], values[-1] = xc, fc
            else:
                for i in range(1, dim + 1):
                    simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
                    values[i] = value(simplex[i])
        # clamp non-periodic coordinates so vertices stay evaluable
        simplex = np.where(periodic, simplex, np.clip(simplex, lo, hi))

    best = int(np.argmax(values))
    x_best, f_best = place(simplex[best]), float(values[best])
    if f_best < f0:
        x_best, f_best = start, f0
    return OptimumReport(x_best, f_best, start, trace, evals)


def sweep_and_refine(axes, objective, bounds=None, threads=None):
    """Grid sweep followed by refinement from the best grid point."""
    table = sweep(axes, objective, threads)
    x0, ev0 = table.best()
    if bounds is None:
        bounds = [(ax.min, ax.max) for ax in axes]
    report = refine(x0, objective, bounds)
    report.grid_argmax = x0
    if report.value < ev0.value:
        report.argmax, report.value = x0, ev0.value
    return table, report


@dataclass
class Comparison:
    single_optimum: OptimumReport
    ceiling: float
    additivity_error: float
    feedback: OptimumReport
    ratio: float
    advantage: bool

    def record(self):
        return {
            "Delta_star": float(self.single_optimum.argmax[0]),
            "phi_star": float(self.single_optimum.argmax[1]),
            "S_single": float(self.single_optimum.value),
            "ceiling": self.ceiling,
            "additivity_error": self.additivity_error,
            "alpha": [float(v) for v in self.feedback.argmax],
            "S_feedback": float(self.feedback.value),
            "ratio": self.ratio,
            "advantage": self.advantage,
        }


def compare_constant_vs_feedback(Gamma=1.0, alpha_bounds=((0.5, 1.5), (0.5, 1.5)), start=(1.0, 1.0)):
    """Two qubit clockworks: best constant policy against energy-switching feedback.

    The constant ceiling is twice the single-clockwork optimum; it is checked
    against direct evaluation of the composed system, whose F and D must be
    the sums of the components.
    """
    single = qubit_optimum()
    E_star, phi_star = single.argmax[0] * Gamma, single.argmax[1]
    spec = qubit_clockwork(E_star, phi_star, Gamma)
    one = CountingStatistics(spec).evaluate(IntegratedCurrent.total_count(spec.labels))
    pair = compose_independent([spec, spec])
    both = CountingStatistics(pair).evaluate(IntegratedCurrent.total_count(pair.labels))
    additivity = max(abs(both.F - 2 * one.F) / abs(2 * one.F), abs(both.D - 2 * one.D) / abs(2 * one.D))
    if additivity > 1e-9:
        raise ClockFcsError(f"independent clockworks are not additive (relative error {additivity:.2e})")
    ceiling = 2.0 * single.value * Gamma

    bounds = np.asarray(alpha_bounds, dtype=float)
    objective = two_qubit_feedback_objective(E_star, phi_star, Gamma)
    if np.all(bounds[:, 0] == bounds[:, 1]):
        point = bounds[:, 0]
        feedback = OptimumReport(point, objective(point).value, point, [], 1)
    else:
        feedback = refine(start, objective, bounds)
    ratio = feedback.value / ceiling
    return Comparison(single, ceiling, additivity, feedback, ratio, ratio > 1 + ADVANTAGE_MARGIN)
