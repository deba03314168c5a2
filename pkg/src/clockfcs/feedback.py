"""Incoherent feedback: policies, joint clockwork+memory dynamics and prebuilt policies."""
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError
from .models import (
    ClassicalClockworkSpec,
    ControlledFamily,
    JumpLabel,
    LindbladSpec,
    ParameterSpace,
    control_family,
    embed,
    qubit_clockwork,
)


@dataclass(frozen=True)
class FeedbackPolicy:
    """Memory states, jump-triggered memory update and memory-conditioned parameters.

    ``memory_states`` are names; everywhere else memory states are referred to
    by their index in declaration order. ``update`` maps
    ``(m, JumpLabel(a, j))`` to the next memory index and ``params`` maps
    ``(m, a)`` to the parameter vector applied to clockwork ``a``.
    """

    memory_states: tuple
    update: dict
    params: dict
    clockworks: int = field(init=False)

    def __post_init__(self):
        states = tuple(self.memory_states)
        if not states:
            raise ModelError("a feedback policy needs at least one memory state")
        if len(set(states)) != len(states):
            raise ModelError("memory state names must be unique")
        object.__setattr__(self, "memory_states", states)
        size = len(states)
        update = {}
        for (m, label), nxt in dict(self.update).items():
            if not 0 <= m < size or not 0 <= nxt < size:
                raise ModelError(f"update entry ({m}, {label}) -> {nxt} refers to an unknown memory state")
            update[(m, label.base)] = int(nxt)
        params = {}
        for (m, a), c in dict(self.params).items():
            if not 0 <= m < size:
                raise ModelError(f"parameter entry for unknown memory state {m}")
            c = np.atleast_1d(np.asarray(c, dtype=float))
            c.setflags(write=False)
            params[(m, int(a))] = c
        object.__setattr__(self, "update", update)
        object.__setattr__(self, "params", params)
        clockworks = sorted({a for _, a in params})
        if clockworks != list(range(1, len(clockworks) + 1)):
            raise ModelError(f"parameters must be given for clockworks 1..G, got {clockworks}")
        for m in range(size):
            for a in clockworks:
                if (m, a) not in params:
                    raise ModelError(f"no parameters for clockwork {a} in memory state {states[m]!r}")
        object.__setattr__(self, "clockworks", len(clockworks))

    @property
    def size(self):
        return len(self.memory_states)

    def index(self, name):
        return self.memory_states.index(name)

    def next_state(self, m, label):
        try:
            return self.update[(m, label.base)]
        except KeyError:
            raise ModelError(f"memory update undefined for m={self.memory_states[m]!r}, label {label}") from None

    def gamma(self, a, m):
        return self.params[(m, a)]

    def validate(self, families):
        """Check totality of the update table and range membership of every parameter."""
        families = list(families)
        if len(families) != self.clockworks:
            raise ModelError(f"policy controls {self.clockworks} clockworks but {len(families)} families given")
        for a, family in enumerate(families, start=1):
            labels = [JumpLabel(a, lab.j) for lab in family.labels]
            for m in range(self.size):
                c = self.gamma(a, m)
                if not family.space.contains(c):
                    raise ModelError(
                        f"gamma^({a})(m={self.memory_states[m]!r}) = {c.tolist()} outside the parameter space"
                    )
                for label in labels:
                    if (m, label) not in self.update:
                        raise ModelError(f"memory update undefined at m={self.memory_states[m]!r}, label {label}")


@dataclass(frozen=True)
class Channel:
    """One extended jump channel of a joint system, acting on the clockwork factor."""

    label: JumpLabel
    m_pre: int
    m_post: int
    op: np.ndarray


@dataclass(frozen=True)
class JointSystem:
    """Clockworks plus classical memory, with the memory factor last."""

    spec: LindbladSpec
    component_dims: tuple
    memory_dim: int
    hamiltonians: tuple
    channels: tuple
    policy: FeedbackPolicy = None

    @property
    def clockwork_dim(self):
        return int(np.prod(self.component_dims))


def memory_resolved(spec):
    """View a plain spec as a joint system with a one-state memory."""
    channels = tuple(Channel(label, 0, 0, op) for label, op in spec.jumps.items())
    return JointSystem(spec, (spec.dim,), 1, (spec.hamiltonian,), channels)


def build_joint(families, policy):
    families = list(families)
    policy.validate(families)
    size = policy.size
    frozen = [[family(policy.gamma(a, m)) for a, family in enumerate(families, start=1)] for m in range(size)]
    dims = tuple(s.dim for s in frozen[0])
    for specs in frozen:
        if tuple(s.dim for s in specs) != dims:
            raise ModelError("family builders must keep the Hilbert dimension fixed")
    n = int(np.prod(dims))
    h_total = np.zeros((n * size, n * size), dtype=complex)
    jumps, channels, blocks = {}, [], []
    for m, specs in enumerate(frozen):
        proj = np.zeros((size, size))
        proj[m, m] = 1.0
        h_m = sum(embed(s.hamiltonian, a, dims) for a, s in enumerate(specs))
        blocks.append(h_m)
        h_total += np.kron(h_m, proj)
    for a, family in enumerate(families, start=1):
        for m in range(size):
            for base_label, op in frozen[m][a - 1].jumps.items():
                label = JumpLabel(a, base_label.j, m)
                nxt = policy.next_state(m, label)
                shift = np.zeros((size, size))
                shift[nxt, m] = 1.0
                op_c = embed(op, a - 1, dims)
                jumps[label] = np.kron(op_c, shift)
                channels.append(Channel(label, m, nxt, op_c))
    spec = LindbladSpec(h_total, jumps)
    return JointSystem(spec, dims, size, tuple(blocks), tuple(channels), policy)


def constant_policy(families, params):
    """Policy with the single memory state 0 and fixed per-clockwork parameters."""
    families = list(families)
    params = list(params)
    if len(params) != len(families):
        raise ModelError("one parameter vector per clockwork is required")
    update = {(0, JumpLabel(a, lab.j)): 0 for a, f in enumerate(families, start=1) for lab in f.labels}
    policy = FeedbackPolicy((0,), update, {(0, a): c for a, c in enumerate(params, start=1)})
    policy.validate(families)
    return policy


def two_qubit_switching_policy(alpha1, alpha2, E_star, phi_star, Gamma=1.0):
    """Energy switching between two qubit clockworks depending on which ticked last.

    Memory states are named 1 and 2 (the clockwork that jumped last).
    Clockwork ``a`` runs at energy ``alpha1 * E_star`` when ``m == a`` and at
    ``alpha2 * E_star`` otherwise; the phase stays at ``phi_star``.
    """
    base = qubit_clockwork(E_star, phi_star, Gamma)
    family = control_family("energy", base, (0.0, np.inf))
    families = [family, family]
    update = {(m, JumpLabel(a, 0)): a - 1 for m in range(2) for a in (1, 2)}
    params = {(m, a): [alpha1 if a == m + 1 else alpha2] for m in range(2) for a in (1, 2)}
    return families, FeedbackPolicy((1, 2), update, params)


def fixed_family(spec):
    """A family without control parameters that always returns ``spec``."""
    return ControlledFamily("fixed", ParameterSpace(()), lambda c: spec)


def protocol1_policy(ic, ec_family):
    """Gate an enhancing clock on ticks of an input clock.

    The memory is set to 1 by an input-clock tick and to 0 by an
    enhancing-clock tick; the enhancing clock is dissipative only in memory
    state 1. Clockwork 1 is the input clock, clockwork 2 the enhancing clock.
    """
    if len(ic.jumps) != 1:
        raise ModelError(f"the input clock must have exactly one jump type, got {len(ic.jumps)}")
    if ec_family.kind != "jump_strength":
        raise ModelError("the enhancing clock needs a jump_strength family")
    if not (ec_family.space.contains([0.0]) and ec_family.space.contains([1.0])):
        raise ModelError("the enhancing clock parameter space must contain 0 and 1")
    families = [fixed_family(ic), ec_family]
    update = {}
    for m in range(2):
        for lab in ic.labels:
            update[(m, JumpLabel(1, lab.j))] = 1
        for lab in ec_family.labels:
            update[(m, JumpLabel(2, lab.j))] = 0
    params = {(m, 1): np.zeros(0) for m in range(2)}
    params.update({(m, 2): [float(m)] for m in range(2)})
    return families, FeedbackPolicy((0, 1), update, params)


def protocol1_output_current(families):
    """Weight 0 on input-clock jumps and 1 on enhancing-clock jumps."""
    from .fcs import IntegratedCurrent

    weights = {JumpLabel(1, lab.j): 0.0 for lab in families[0].labels}
    weights.update({JumpLabel(2, lab.j): 1.0 for lab in families[1].labels})
    return IntegratedCurrent(weights)


def classical_feedback_rate_matrix(clockwork_dims, policy):
    """Rate matrix on (clockwork states) x (memory) for cyclic classical clockworks.

    Clockwork ``a`` jumps x -> x+1 mod d_a with rate ``gamma^(a)(m)[x]``; the
    jump has type ``j = x`` and moves the memory to ``U(m, (a, x))``. States
    are ordered like the tensor basis of :func:`build_joint` (memory last).
    """
    dims = tuple(int(d) for d in clockwork_dims)
    if len(dims) != policy.clockworks:
        raise ModelError(f"policy controls {policy.clockworks} clockworks, got {len(dims)} dimensions")
    for a, d in enumerate(dims, start=1):
        for m in range(policy.size):
            if policy.gamma(a, m).size != d:
                raise ModelError(f"clockwork {a} is not a rates-only family of dimension {d}")
    states = [x + (m,) for x in itertools.product(*(range(d) for d in dims)) for m in range(policy.size)]
    index = {s: i for i, s in enumerate(states)}
    rates = np.zeros((len(states), len(states)))
    labels = {}
    for s in states:
        x, m = s[:-1], s[-1]
        for a, d in enumerate(dims, start=1):
            j = x[a - 1]
            y = list(x)
            y[a - 1] = (j + 1) % d
            label = JumpLabel(a, j, m)
            target = index[tuple(y) + (policy.next_state(m, label),)]
            rate = policy.gamma(a, m)[j]
            if rate > 0:
                src = index[s]
                rates[target, src] += rate
                labels[(target, src)] = label
    return ClassicalClockworkSpec(rates, labels, tuple(states))
