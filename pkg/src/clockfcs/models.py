"""Clockwork descriptions: Hamiltonians, labeled jump operators and control families.

Tensor factors are ordered by clockwork index (1, 2, ...), with the memory
factor of a feedback controller (see :mod:`clockfcs.feedback`) last.
"""
from dataclasses import dataclass, field
from typing import Callable, Hashable, Optional

import numpy as np
from scipy.linalg import expm

from .errors import ModelError, NotClassicalError
from .linalg import as_matrix, kron

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class JumpLabel:
    """Jump type ``j`` of clockwork ``a``.

    ``m`` is the memory state before the jump; it is only set on the
    extended labels of a feedback-controlled joint system.
    """

    a: int
    j: Hashable
    m: Optional[int] = None

    @property
    def base(self):
        return JumpLabel(self.a, self.j) if self.m is not None else self

    def __str__(self):
        j = "->".join(map(str, self.j)) if isinstance(self.j, tuple) else str(self.j)
        s = f"a{self.a}:j{j}"
        return s if self.m is None else f"{s}:m{self.m}"


def _readonly(a):
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LindbladSpec:
    """Hamiltonian plus labeled jump operators on a finite Hilbert space."""

    hamiltonian: np.ndarray
    jumps: dict = field(default_factory=dict)

    def __post_init__(self):
        h = as_matrix(self.hamiltonian, "hamiltonian")
        if h.shape[0] != h.shape[1]:
            raise ModelError(f"hamiltonian must be square, got {h.shape}")
        defect = np.linalg.norm(h - h.conj().T)
        if defect > HERMITIAN_TOL * max(1.0, np.linalg.norm(h)):
            raise ModelError(f"hamiltonian is not Hermitian: ||H - H^dag|| = {defect:.3e}")
        jumps = {}
        for label, op in dict(self.jumps).items():
            if not isinstance(label, JumpLabel):
                raise ModelError(f"jump labels must be JumpLabel instances, got {label!r}")
            op = as_matrix(op, f"jump operator {label}")
            if op.shape != h.shape:
                raise ModelError(f"jump operator {label} has shape {op.shape}, expected {h.shape}")
            jumps[label] = _readonly(op)
        object.__setattr__(self, "hamiltonian", _readonly(h))
        object.__setattr__(self, "jumps", jumps)

    @property
    def dim(self):
        return self.hamiltonian.shape[0]

    @property
    def labels(self):
        return list(self.jumps)

    def __eq__(self, other):
        if not isinstance(other, LindbladSpec):
            return NotImplemented
        return (
            self.labels == other.labels
            and np.array_equal(self.hamiltonian, other.hamiltonian)
            and all(np.array_equal(self.jumps[k], other.jumps[k]) for k in self.jumps)
        )

    __hash__ = None


@dataclass(frozen=True)
class ClassicalClockworkSpec:
    """Continuous-time Markov chain with ``rates[k, l]`` the rate of the jump l -> k.

    ``labels`` optionally maps a transition ``(k, l)`` to the jump label that
    produces it, and ``states`` names the states (used for joint
    clockwork x memory chains).
    """

    rates: np.ndarray
    labels: dict = field(default_factory=dict)
    states: Optional[tuple] = None

    def __post_init__(self):
        r = np.array(self.rates, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1] or r.shape[0] < 1:
            raise ModelError(f"rates must be a square matrix, got shape {r.shape}")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise ModelError("rates must be finite and non-negative")
        if np.any(np.diag(r) != 0):
            raise ModelError("rates must have a zero diagonal")
        r.setflags(write=False)
        object.__setattr__(self, "rates", r)
        if self.states is not None and len(self.states) != r.shape[0]:
            raise ModelError("states must name every state of the chain")

    @property
    def num_states(self):
        return self.rates.shape[0]

    def escape_rates(self):
        return self.rates.sum(axis=0)

    def rate_matrix(self):
        return self.rates - np.diag(self.escape_rates())

    def transitions(self):
        """Non-zero transitions as ``(k, l, rate)`` sorted by source then target."""
        d = self.num_states
        return [(k, l, self.rates[k, l]) for l in range(d) for k in range(d) if self.rates[k, l] > 0]


# -- parameter spaces ---------------------------------------------------------


@dataclass(frozen=True)
class Coordinate:
    """One coordinate of a parameter space: a closed interval or a finite set."""

    lo: float = -np.inf
    hi: float = np.inf
    values: Optional[tuple] = None
    periodic: bool = False

    def __post_init__(self):
        if self.values is not None:
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            if not self.values:
                raise ModelError("finite parameter set must not be empty")
        elif not self.lo <= self.hi:
            raise ModelError(f"empty interval [{self.lo}, {self.hi}]")

    def contains(self, x, tol=1e-12):
        if self.values is not None:
            return any(abs(x - v) <= tol * max(1.0, abs(v)) for v in self.values)
        if self.periodic:
            return True
        return self.lo - tol * max(1.0, abs(self.lo)) <= x <= self.hi + tol * max(1.0, abs(self.hi))


@dataclass(frozen=True)
class ParameterSpace:
    coordinates: tuple

    @classmethod
    def interval(cls, lo, hi, size=1):
        return cls((Coordinate(lo, hi),) * size)

    @classmethod
    def finite(cls, values, size=1):
        return cls((Coordinate(values=tuple(values)),) * size)

    @property
    def size(self):
        return len(self.coordinates)

    def contains(self, c):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return c.size == self.size and all(co.contains(x) for co, x in zip(self.coordinates, c))

    def is_symmetric(self):
        """True when every coordinate ranges over the same set (P = P~ x ... x P~)."""
        first = self.coordinates[0]
        return all(
            (co.lo, co.hi, co.values) == (first.lo, first.hi, first.values) for co in self.coordinates
        )


@dataclass(frozen=True)
class ControlledFamily:
    """Lindblad dynamics parameterized by a control vector ``c``."""

    kind: str
    space: ParameterSpace
    builder: Callable
    classical: bool = False

    def __call__(self, c):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        if not self.space.contains(c):
            raise ModelError(f"parameters {c.tolist()} outside the {self.kind} parameter space")
        return self.builder(c)

    @property
    def labels(self):
        probe = np.array([co.values[0] if co.values else _interior(co) for co in self.space.coordinates])
        return self.builder(probe).labels


def _interior(co):
    if np.isfinite(co.lo) and np.isfinite(co.hi):
        return 0.5 * (co.lo + co.hi)
    if np.isfinite(co.lo):
        return co.lo + 1.0
    if np.isfinite(co.hi):
        return co.hi - 1.0
    return 0.0


def _coordinate(spec):
    if isinstance(spec, Coordinate):
        return spec
    if isinstance(spec, dict):
        return Coordinate(**spec)
    spec = tuple(spec)
    if len(spec) == 2 and not isinstance(spec[0], (list, tuple)):
        return Coordinate(float(spec[0]), float(spec[1]))
    raise ModelError(f"cannot interpret parameter range {spec!r}")


def _space(ranges, size=1):
    if isinstance(ranges, ParameterSpace):
        return ranges
    if isinstance(ranges, dict) and "values" in ranges:
        return ParameterSpace.finite(ranges["values"], size)
    return ParameterSpace((_coordinate(ranges),) * size)


# -- concrete clockworks ------------------------------------------------------

KET_PLUS = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2)
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)


def qubit_clockwork(E, phi, Gamma=1.0):
    """Qubit clockwork: H = -(E/2) sigma_z, single jump sqrt(Gamma) |phi><+|."""
    if not Gamma > 0:
        raise ModelError(f"Gamma must be positive, got {Gamma}")
    ket_phi = np.array([1.0, np.exp(1j * phi)]) / np.sqrt(2)
    jump = np.sqrt(Gamma) * np.outer(ket_phi, KET_PLUS.conj())
    return LindbladSpec(-0.5 * E * SIGMA_Z, {JumpLabel(1, 0): jump})


def qubit_family(Gamma=1.0, E_range=(0.0, np.inf)):
    """Qubit clockwork controlled by ``c = (E, phi)`` with phi periodic."""
    space = ParameterSpace((_coordinate(E_range), Coordinate(0.0, 2 * np.pi, periodic=True)))
    return ControlledFamily("qubit", space, lambda c: qubit_clockwork(c[0], c[1], Gamma))


def classical_to_lindblad(spec):
    """Diagonal-preserving Lindblad form of a Markov chain; one jump per transition.

    The jump l -> k is labeled ``JumpLabel(1, (l, k))``.
    """
    d = spec.num_states
    jumps = {}
    for k, l, rate in spec.transitions():
        op = np.zeros((d, d), dtype=complex)
        op[k, l] = np.sqrt(rate)
        jumps[JumpLabel(1, (l, k))] = op
    return LindbladSpec(np.zeros((d, d)), jumps)


def cyclic_clockwork(rates):
    """Unidirectional d-state ring with jump j: |j> -> |j+1 mod d> at rate ``rates[j]``."""
    rates = np.asarray(rates, dtype=float)
    if np.any(rates < 0):
        raise ModelError("rates must be non-negative")
    d = rates.size
    jumps = {}
    for j, rate in enumerate(rates):
        op = np.zeros((d, d), dtype=complex)
        op[(j + 1) % d, j] = np.sqrt(rate)
        jumps[JumpLabel(1, j)] = op
    return LindbladSpec(np.zeros((d, d)), jumps)


def cyclic_family(num_states, rate_range):
    """Classical ring whose d rates are all tunable in the same range."""
    return ControlledFamily("classical", _space(rate_range, num_states), cyclic_clockwork, classical=True)


def compose_independent(specs):
    """Joint dynamics of independent clockworks (ordered tensor product).

    Jump labels are re-indexed so that ``a`` is the 1-based position in ``specs``.
    """
    specs = list(specs)
    if not specs:
        raise ModelError("compose_independent needs at least one spec")
    dims = [s.dim for s in specs]
    total = int(np.prod(dims))
    h = np.zeros((total, total), dtype=complex)
    jumps = {}
    for a, spec in enumerate(specs, start=1):
        h += embed(spec.hamiltonian, a - 1, dims)
        for label, op in spec.jumps.items():
            jumps[JumpLabel(a, label.j, label.m)] = embed(op, a - 1, dims)
    return LindbladSpec(h, jumps)


def embed(op, position, dims):
    """``1 x ... x op x ... x 1`` with ``op`` on factor ``position``."""
    out = np.ones((1, 1), dtype=complex)
    for k, d in enumerate(dims):
        out = kron(out, op if k == position else np.eye(d))
    return out


# -- control families ---------------------------------------------------------


def control_family(kind, base, ranges, unitary=None):
    """Build a :class:`ControlledFamily` of one of the standard control kinds.

    kind:
        ``"energy"``        H(c) = c H, jumps fixed.
        ``"jump_strength"`` J(c) = sqrt(c) J for every jump, c >= 0.
        ``"time_unitary"``  J(c) = U(c) J with ``unitary(c)`` unitary.
        ``"coupling"``      H(c) = H1 x 1 + 1 x H2 + c H_int; ``base`` is a
                            dict with keys ``h1``, ``h2``, ``h_int`` and
                            ``jumps`` (operators on the composite space).
    """
    space = _space(ranges)
    if kind == "energy":
        return ControlledFamily(kind, space, lambda c: LindbladSpec(c[0] * base.hamiltonian, base.jumps))

    if kind == "jump_strength":
        for co in space.coordinates:
            if (co.values is not None and min(co.values) < 0) or (co.values is None and co.lo < 0):
                raise ModelError("jump_strength parameters must be non-negative")

        def build(c):
            if c[0] < 0:
                raise ModelError(f"negative jump strength {c[0]}")
            return LindbladSpec(base.hamiltonian, {k: np.sqrt(c[0]) * v for k, v in base.jumps.items()})

        return ControlledFamily(kind, space, build, classical=is_classical(base))

    if kind == "time_unitary":
        if unitary is None:
            raise ModelError("time_unitary family needs a unitary(c) callable")

        def build(c):
            u = np.asarray(unitary(c), dtype=complex)
            if u.shape != (base.dim, base.dim) or not np.allclose(u.conj().T @ u, np.eye(base.dim), atol=1e-10):
                raise ModelError(f"U({c.tolist()}) is not a {base.dim}x{base.dim} unitary")
            return LindbladSpec(base.hamiltonian, {k: u @ v for k, v in base.jumps.items()})

        return ControlledFamily(kind, space, build)

    if kind == "coupling":
        h1, h2, h_int = (as_matrix(base[k], k) for k in ("h1", "h2", "h_int"))
        free = kron(h1, np.eye(h2.shape[0])) + kron(np.eye(h1.shape[0]), h2)
        if h_int.shape != free.shape:
            raise ModelError(f"h_int has shape {h_int.shape}, expected {free.shape}")
        jumps = dict(base.get("jumps", {}))
        return ControlledFamily(kind, space, lambda c: LindbladSpec(free + c[0] * h_int, jumps))

    raise ModelError(f"unknown control kind {kind!r}")


def unitary_from_generator(generator):
    """``c -> exp(-i c G)`` for a Hermitian generator G."""
    g = as_matrix(generator, "generator")
    return lambda c: expm(-1j * float(np.atleast_1d(c)[0]) * g)


# -- classical structure ------------------------------------------------------


def is_classical(spec, tol=1e-12):
    """True if diagonal states stay diagonal: diagonal H, jumps mapping basis states to basis states."""
    h = spec.hamiltonian
    if np.max(np.abs(h - np.diag(np.diag(h))), initial=0.0) > tol:
        return False
    for op in spec.jumps.values():
        nz = np.abs(op) > tol
        if np.any(nz.sum(axis=0) > 1) or np.any(np.diag(nz)):
            return False
        gram = op.conj().T @ op
        if np.max(np.abs(gram - np.diag(np.diag(gram))), initial=0.0) > tol:
            return False
    return True


def to_classical(spec, tol=1e-12):
    """Rate matrix of a classical :class:`LindbladSpec`.

    ``labels`` of the result maps each transition to its jump label when a
    single label produces it.
    """
    if not is_classical(spec, tol):
        raise NotClassicalError("spec is not classical (off-diagonal coherences would be generated)")
    d = spec.dim
    rates = np.zeros((d, d))
    owners = {}
    for label, op in spec.jumps.items():
        p = np.abs(op) ** 2
        for k, l in zip(*np.nonzero(p > tol**2)):
            rates[k, l] += p[k, l]
            owners.setdefault((int(k), int(l)), []).append(label)
    labels = {kl: v[0] for kl, v in owners.items() if len(v) == 1}
    return ClassicalClockworkSpec(rates, labels)
