"""Asymptotic full counting statistics of integrated jump currents.

For a generator with a unique steady state rho and group inverse L+, a
current with weights w has

    F = <<1| W |rho>>,        W  = sum_j w_j   (J_j* kron J_j)
    D = D1 - 2 D2,            D1 = <<1| W2 |rho>>,  W2 = sum_j w_j^2 (J_j* kron J_j)
                              D2 = <<1| W L+ W |rho>>

and SNR S = F^2 / D. Classical chains use the same formulas restricted to
the population sector.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateCurrentError, KernelDimensionError, ModelError, NonPositiveError, NotClassicalError, NumericalError
from .feedback import FeedbackPolicy, JointSystem, constant_policy
from .linalg import DEFAULT_CUTOFF, identity_vector, kron, moore_penrose, null_space, unvectorize, vectorize
from .models import ClassicalClockworkSpec, JumpLabel, LindbladSpec, is_classical, to_classical

IMAG_TOL = 1e-10
ZERO_NOISE = 1e-14
GROUP_INVERSE_TOL = 1e-8


@dataclass(frozen=True)
class Transition:
    """The single transition ``source -> target`` of a classical chain."""

    target: int
    source: int

    def __str__(self):
        return f"{self.source}->{self.target}"


@dataclass(frozen=True)
class IntegratedCurrent:
    """Weighted jump count. Unlisted labels have weight 0.

    A weight given for ``JumpLabel(a, j)`` applies to every extended label
    ``JumpLabel(a, j, m)``; an explicit per-memory weight takes precedence.
    On classical chains a :class:`Transition` key weights one transition and
    overrides the weight of its label.
    """

    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        weights = {}
        for label, w in dict(self.weights).items():
            if not isinstance(label, (JumpLabel, Transition)):
                raise ModelError(f"current keys must be JumpLabel or Transition instances, got {label!r}")
            w = float(w)
            if not np.isfinite(w):
                raise ModelError(f"weight for {label} is not finite")
            weights[label] = w
        object.__setattr__(self, "weights", weights)

    @classmethod
    def total_count(cls, labels):
        return cls({label: 1.0 for label in labels})

    def weight(self, label):
        if label in self.weights:
            return self.weights[label]
        return self.weights.get(label.base, 0.0)

    def transition_weight(self, transition, label):
        if transition in self.weights:
            return self.weights[transition]
        return self.weight(label)

    def validate(self, labels, transitions=()):
        labels = list(labels)
        known = set(labels) | {lab.base for lab in labels} | set(transitions)
        for label in self.weights:
            if label not in known:
                kind = "transition" if isinstance(label, Transition) else "jump label"
                raise ModelError(f"current weights unknown {kind} {label}")

    def __bool__(self):
        return any(w != 0 for w in self.weights.values())


@dataclass
class FcsResult:
    F: float
    D: float
    S: float
    steady_state: np.ndarray
    accuracy: float
    dynamical_activity: float
    residual_time: Optional[float] = None
    degenerate: bool = False
    divergent: bool = False

    @property
    def flags(self):
        if self.divergent:
            return "divergent"
        return "degenerate" if self.degenerate else ""

    def record(self):
        """Flat record with a stable field order."""
        return {
            "F": self.F,
            "D": self.D,
            "S": self.S,
            "accuracy": self.accuracy,
            "dynamical_activity": self.dynamical_activity,
            "residual_time": self.residual_time,
            "flags": self.flags,
        }


def _spec_of(system):
    if isinstance(system, JointSystem):
        return system.spec
    return system


def superop(op):
    """Vectorization of ``rho -> op rho op^dag``."""
    return kron(op.conj(), op)


def vectorized_generator(spec):
    """Column-stacking matrix of the Lindblad generator (n^2 x n^2)."""
    spec = _spec_of(spec)
    n = spec.dim
    eye = np.eye(n)
    h = spec.hamiltonian
    gen = -1j * (kron(eye, h) - kron(h.T, eye))
    for op in spec.jumps.values():
        back = op.conj().T @ op
        gen += superop(op) - 0.5 * kron(eye, back) - 0.5 * kron(back.T, eye)
    return gen


def _unique_kernel_vector(gen, cutoff):
    kernel = null_space(gen, cutoff)
    if len(kernel) != 1:
        raise KernelDimensionError(len(kernel))
    return kernel[0]


def steady_state(spec, cutoff=DEFAULT_CUTOFF, generator=None):
    """Unique steady state as a Hermitian, unit-trace density matrix."""
    spec = _spec_of(spec)
    gen = vectorized_generator(spec) if generator is None else generator
    rho = unvectorize(_unique_kernel_vector(gen, cutoff))
    tr = np.trace(rho)
    if abs(tr) < 1e-300:
        raise NumericalError("kernel vector has zero trace")
    rho = rho / tr
    rho = 0.5 * (rho + rho.conj().T)
    lowest = np.linalg.eigvalsh(rho)[0]
    if lowest < -1e-8:
        raise NonPositiveError(f"steady state has eigenvalue {lowest:.3e}")
    return rho


def _projected_inverse(gen, ss_vec, one_vec, cutoff):
    q = np.eye(gen.shape[0], dtype=gen.dtype) - np.outer(ss_vec, one_vec.conj())
    return q @ moore_penrose(gen, cutoff) @ q


def check_group_inverse(gen, ginv, tol=GROUP_INVERSE_TOL):
    """Largest relative violation of the three group-inverse identities."""
    gn = max(np.linalg.norm(gen), 1e-300)
    inv_n = max(np.linalg.norm(ginv), 1e-300)
    errs = (
        np.linalg.norm(gen @ ginv @ gen - gen) / gn,
        np.linalg.norm(ginv @ gen @ ginv - ginv) / inv_n,
        np.linalg.norm(ginv @ gen - gen @ ginv) / max(np.linalg.norm(ginv @ gen), 1e-300),
    )
    worst = max(errs)
    if worst > tol:
        raise NumericalError(f"group inverse identities violated (relative error {worst:.3e})")
    return worst


def group_inverse(spec, rho_ss=None, cutoff=DEFAULT_CUTOFF, check=True):
    """Group inverse of the vectorized generator via the projected Moore-Penrose inverse."""
    spec = _spec_of(spec)
    gen = vectorized_generator(spec)
    if rho_ss is None:
        rho_ss = steady_state(spec, cutoff, gen)
    ginv = _projected_inverse(gen, vectorize(rho_ss), identity_vector(spec.dim), cutoff)
    if check:
        check_group_inverse(gen, ginv)
    return ginv


class CountingStatistics:
    """Steady state and group inverse of one system, reused across currents.

    Accepts a :class:`LindbladSpec`, a :class:`JointSystem` or a
    :class:`ClassicalClockworkSpec` (population route).
    """

    def __init__(self, system, cutoff=DEFAULT_CUTOFF, check=True):
        self.system = system
        if isinstance(system, ClassicalClockworkSpec):
            self._init_classical(system, cutoff)
        else:
            self._init_quantum(_spec_of(system), cutoff)
        if check:
            check_group_inverse(self.generator, self.ginv)

    def _init_quantum(self, spec, cutoff):
        self.spec = spec
        self.generator = vectorized_generator(spec)
        self.steady_state = steady_state(spec, cutoff, self.generator)
        self._ss = vectorize(self.steady_state)
        self._one = identity_vector(spec.dim)
        self.ginv = _projected_inverse(self.generator, self._ss, self._one, cutoff)
        self.labels = spec.labels
        self.transitions = None
        self._ops = [superop(spec.jumps[label]) for label in self.labels]
        self.classical = is_classical(spec)
        self._escape = to_classical(spec).escape_rates() if self.classical else None
        self._pops = np.real(np.diag(self.steady_state))

    def _init_classical(self, chain, cutoff):
        self.spec = None
        self.generator = chain.rate_matrix().astype(float)
        p = np.real(_unique_kernel_vector(self.generator.astype(complex), cutoff))
        p = p / p.sum()
        if p.min() < -1e-8:
            raise NonPositiveError(f"stationary distribution has entry {p.min():.3e}")
        self._ss = p
        self.steady_state = np.diag(p).astype(complex)
        self._one = np.ones_like(p)
        q = np.eye(p.size) - np.outer(p, self._one)
        self.ginv = q @ moore_penrose(self.generator, cutoff).real @ q
        self.labels, self._ops, self.transitions = [], [], []
        for k, l, rate in chain.transitions():
            op = np.zeros_like(self.generator)
            op[k, l] = rate
            self.labels.append(chain.labels.get((k, l), JumpLabel(1, (l, k))))
            self.transitions.append(Transition(k, l))
            self._ops.append(op)
        self.classical = True
        self._escape = chain.escape_rates()
        self._pops = p

    # -- per-current quantities ---------------------------------------------

    def weight_vector(self, current):
        """Weight of every jump channel (classical: every transition) in order."""
        if self.transitions is None:
            current.validate(self.labels)
            return np.array([current.weight(label) for label in self.labels])
        current.validate(self.labels, self.transitions)
        return np.array([current.transition_weight(t, lab) for t, lab in zip(self.transitions, self.labels)])

    def _expect(self, vec):
        val = self._one.conj() @ vec
        return val

    def _real(self, value, name):
        if abs(np.imag(value)) > IMAG_TOL * max(1.0, abs(value)):
            raise NumericalError(f"{name} has imaginary part {np.imag(value):.3e}; vectorization convention bug?")
        return float(np.real(value))

    def elementary(self):
        """Mean vector f_j and symmetric noise matrix K with F = f.w and D = w.K.w."""
        jumps_ss = [op @ self._ss for op in self._ops]
        f = np.array([self._real(self._expect(v), "F") for v in jumps_ss])
        cross = np.array([[self._expect(a @ (self.ginv @ v)) for v in jumps_ss] for a in self._ops])
        k = np.diag(f) - (cross + cross.T)
        k = np.array([[self._real(x, "D") for x in row] for row in k])
        return f, k

    def evaluate(self, current, strict=False):
        w = self.weight_vector(current)
        big_w = sum((wi * op for wi, op in zip(w, self._ops) if wi != 0), np.zeros_like(self.generator))
        big_w2 = sum((wi**2 * op for wi, op in zip(w, self._ops) if wi != 0), np.zeros_like(self.generator))
        wss = big_w @ self._ss
        F = self._real(self._expect(wss), "F")
        D1 = self._real(self._expect(big_w2 @ self._ss), "D1")
        D2 = self._real(self._expect(big_w @ (self.ginv @ wss)), "D2")
        D = D1 - 2.0 * D2
        return self._result(F, D, strict)

    def _result(self, F, D, strict):
        activity = self.dynamical_activity()
        tau = self.residual_time() if self.classical else None
        degenerate = divergent = False
        if D <= ZERO_NOISE:
            if abs(F) > ZERO_NOISE:
                if strict:
                    raise DegenerateCurrentError(f"noise {D:.3e} vanishes for a current with F = {F:.6g}")
                S, divergent = np.inf, True
            else:
                S, degenerate = 0.0, True
        else:
            S = F * F / D
        accuracy = S / F if F != 0 and np.isfinite(S) else 0.0
        return FcsResult(F, D, S, self.steady_state, accuracy, activity, tau, degenerate, divergent)

    def dynamical_activity(self):
        """Total steady-state jump rate sum_j tr(J_j rho J_j^dag)."""
        return float(sum(np.real(self._expect(op @ self._ss)) for op in self._ops))

    def residual_time(self):
        if not self.classical:
            raise NotClassicalError("the mean residual time is defined for classical chains only")
        esc = self._escape
        occupied = self._pops > 1e-14
        if np.any(esc[occupied] <= 0):
            raise ModelError("a reachable state has zero escape rate")
        return float(np.sum(self._pops[occupied] / esc[occupied]))


def current_and_noise(system, current, strict=False):
    """F, D and S of ``current`` on ``system`` initialized in its steady state."""
    return CountingStatistics(system).evaluate(current, strict=strict)


def optimal_current(system):
    """Weights maximizing the SNR over all currents on ``system``.

    Maximizes (f.w)^2 / (w.K.w); the optimum is f.K^+.f at w = K^+ f.
    """
    stats = system if isinstance(system, CountingStatistics) else CountingStatistics(system)
    f, k = stats.elementary()
    w = moore_penrose(k).real @ f
    current = IntegratedCurrent(dict(zip(stats.labels, w)))
    return current, stats.evaluate(current)


# -- closed forms and bounds --------------------------------------------------


def analytic_qubit_snr(Delta, phi):
    """Closed-form (F, D, S) of the qubit clockwork in units of Gamma, with Delta = E/Gamma."""
    Delta = np.asarray(Delta, dtype=float)
    if np.any(Delta <= 0):
        raise ValueError("Delta must be positive")
    d2 = Delta * Delta
    root = np.sqrt(1 + 4 * d2)
    quart = np.sqrt(1 - 4 * d2 + 16 * d2 * d2)
    alpha = np.arccos(1 / root)
    beta = np.arccos((-1 + 4 * d2) / quart)
    den = (1 + 4 * d2) - root * np.cos(phi - alpha)
    F = 2 * d2 / den
    D = d2 * ((5 - 4 * d2 + 32 * d2 * d2) - (1 + 4 * d2) * np.cos(2 * (phi - alpha)) + 4 * quart * np.cos(phi + beta)) / den**3
    return F, D, F * F / D


def _chain(spec):
    if isinstance(spec, ClassicalClockworkSpec):
        return spec
    return to_classical(_spec_of(spec))


def hyperaccurate_current(spec):
    """Current with weight 1/Gamma_l on every jump leaving state l (saturates the CUR)."""
    chain = _chain(spec)
    esc = chain.escape_rates()
    if isinstance(spec, ClassicalClockworkSpec):
        return IntegratedCurrent({Transition(k, l): 1.0 / esc[l] for k, l, _ in chain.transitions()})
    spec = _spec_of(spec)
    weights = {}
    for label, op in spec.jumps.items():
        sources = np.nonzero(np.any(np.abs(op) > 1e-12, axis=0))[0]
        if sources.size == 0:
            continue
        rates = esc[sources]
        if np.any(rates <= 0):
            raise ModelError(f"zero escape rate from a source state of {label}")
        if np.ptp(rates) > 1e-12 * rates.max():
            raise ModelError(f"jump {label} leaves states with different escape rates; split it into transitions")
        weights[label] = 1.0 / rates[0]
    return IntegratedCurrent(weights)


def kur_bound(spec):
    """Dynamical activity A = sum_l Gamma_l p_l; every current has S <= A."""
    chain = _chain(spec)
    p = np.real(np.diag(CountingStatistics(chain, check=False).steady_state))
    return float(np.sum(chain.escape_rates() * p))


def cur_bound(spec):
    """Mean residual time tau = sum_l p_l / Gamma_l; every current has S <= 1/tau."""
    chain = _chain(spec)
    return CountingStatistics(chain, check=False).residual_time()


def _check_symmetric_classical(families):
    for a, family in enumerate(families, start=1):
        if not family.classical:
            raise NotClassicalError(f"clockwork {a} is not a classical rates-only family")
        if not family.space.is_symmetric():
            raise ModelError(f"clockwork {a} does not have a symmetric parameter space")


def _best_rates(policy):
    sums = []
    for m in range(policy.size):
        sums.append(sum(policy.gamma(a, m).max() for a in range(1, policy.clockworks + 1)))
    return int(np.argmax(sums)), float(max(sums))


def theorem1_bound(policy, families):
    """max over memory states and jump-type strings of the summed rates."""
    _check_symmetric_classical(list(families))
    return _best_rates(policy)[1]


def corollary1_construction(policy, families):
    """Constant policy and total-count current attaining :func:`theorem1_bound`."""
    families = list(families)
    _check_symmetric_classical(families)
    m_star, _ = _best_rates(policy)
    params = []
    for a in range(1, policy.clockworks + 1):
        c = policy.gamma(a, m_star)
        params.append(np.full(c.size, c.max()))
    constant = constant_policy(families, params)
    labels = [JumpLabel(a, lab.j) for a, f in enumerate(families, start=1) for lab in f.labels]
    return constant, IntegratedCurrent.total_count(labels)


# -- rescaling and combination ------------------------------------------------


def rescale_dynamics(spec, alpha):
    """Speed the dynamics up by ``alpha``: H -> alpha H, J -> sqrt(alpha) J."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return LindbladSpec(alpha * spec.hamiltonian, {k: np.sqrt(alpha) * v for k, v in spec.jumps.items()})


def rescale_weights(current, alpha):
    if alpha == 0:
        raise ValueError("alpha must be non-zero")
    return IntegratedCurrent({k: w / alpha for k, w in current.weights.items()})


@dataclass
class Combination:
    coefficients: list
    S: float
    F: float
    D: float
    r_max: list
    r_min: list


def optimal_combination(results):
    """Combine independent currents N_1 + r_2 N_2 + ... to maximize the SNR.

    ``results`` is a sequence of (F, D) pairs or objects with ``F`` and ``D``.
    Pairs are merged one at a time with r_max = F_a D~ / (F~ D_a); the
    combined SNR equals the sum of the individual ones.
    """
    pairs = [(r.F, r.D) if hasattr(r, "F") else tuple(r) for r in results]
    if not pairs:
        raise ValueError("need at least one (F, D) pair")
    for F, D in pairs:
        if not D > 0:
            raise DegenerateCurrentError(f"noise must be positive, got {D}")
        if F == 0:
            raise DegenerateCurrentError("currents with zero mean cannot be combined")
    F_acc, D_acc = pairs[0]
    coeffs, r_max, r_min = [1.0], [], []
    for F, D in pairs[1:]:
        r = F * D_acc / (F_acc * D)
        r_max.append(r)
        r_min.append(-F_acc / F)
        coeffs.append(r)
        F_acc, D_acc = F_acc + r * F, D_acc + r * r * D
    return Combination(coeffs, F_acc * F_acc / D_acc, F_acc, D_acc, r_max, r_min)


def combined_snr(F1, D1, F2, D2, r):
    """SNR of N_1 + r N_2 for independent currents."""
    return (F1 + r * F2) ** 2 / (D1 + r * r * D2)
