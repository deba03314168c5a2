import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from clockfcs import (
    ClassicalClockworkSpec,
    IntegratedCurrent,
    JumpLabel,
    LindbladSpec,
    classical_to_lindblad,
    compose_independent,
    control_family,
    current_and_noise,
    cyclic_clockwork,
    qubit_clockwork,
    qubit_family,
    steady_state,
    vectorized_generator,
)
from clockfcs.errors import ModelError, NotClassicalError
from clockfcs.linalg import unvectorize, vectorize
from clockfcs.models import Coordinate, ParameterSpace, is_classical, to_classical, unitary_from_generator

PLUS = np.array([1, 1]) / np.sqrt(2)
angles = st.floats(0, 2 * np.pi, exclude_max=True)
energies = st.floats(0.01, 5)


def only_jump(spec):
    (op,) = spec.jumps.values()
    return op


def test_qubit_zero_energy():
    spec = qubit_clockwork(0.0, 0.0, 1.0)
    assert np.allclose(spec.hamiltonian, 0)
    assert np.allclose(only_jump(spec), np.outer(PLUS, PLUS))
    assert spec.labels == [JumpLabel(1, 0)]


@given(energies, angles, st.floats(0.1, 10))
def test_qubit_backaction_is_plus_projector(E, phi, Gamma):
    spec = qubit_clockwork(E, phi, Gamma)
    op = only_jump(spec)
    assert np.allclose(op.conj().T @ op, Gamma * np.outer(PLUS, PLUS), atol=1e-12)
    h = spec.hamiltonian
    assert np.linalg.norm(h - h.conj().T) <= 1e-12 * max(1.0, np.linalg.norm(h))


def test_qubit_hamiltonian_sign():
    assert np.allclose(qubit_clockwork(2.0, 0.3).hamiltonian, np.diag([-1.0, 1.0]))


@pytest.mark.parametrize("Gamma", [0.0, -1.0])
def test_qubit_needs_positive_rate(Gamma):
    with pytest.raises(ModelError):
        qubit_clockwork(1.0, 0.0, Gamma)


@given(energies, angles, angles)
@settings(max_examples=25, deadline=None)
def test_results_are_phase_invariant(E, phi, theta):
    spec = qubit_clockwork(E, phi)
    shifted = LindbladSpec(spec.hamiltonian, {k: np.exp(1j * theta) * v for k, v in spec.jumps.items()})
    a = current_and_noise(spec, IntegratedCurrent.total_count(spec.labels))
    b = current_and_noise(shifted, IntegratedCurrent.total_count(spec.labels))
    assert np.allclose([a.F, a.D, a.S], [b.F, b.D, b.S], rtol=1e-9)


def test_non_hermitian_hamiltonian_names_the_norm():
    with pytest.raises(ModelError, match=r"\|\|H - H\^dag\|\|"):
        LindbladSpec([[0, 1], [0, 0]], {})


def test_jump_dimension_mismatch():
    with pytest.raises(ModelError):
        LindbladSpec(np.eye(2), {JumpLabel(1, 0): np.eye(3)})


def test_classical_spec_validation():
    with pytest.raises(ModelError):
        ClassicalClockworkSpec([[1.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ModelError):
        ClassicalClockworkSpec([[0.0, -1.0], [1.0, 0.0]])
    with pytest.raises(ModelError):
        ClassicalClockworkSpec([[0.0, np.inf], [1.0, 0.0]])


def test_symmetric_two_state_lindblad():
    spec = classical_to_lindblad(ClassicalClockworkSpec([[0, 1], [1, 0]]))
    assert spec.jumps[JumpLabel(1, (0, 1))].tolist() == [[0, 0], [1, 0]]
    assert spec.jumps[JumpLabel(1, (1, 0))].tolist() == [[0, 1], [0, 0]]
    assert np.allclose(spec.hamiltonian, 0)


def test_two_state_steady_state():
    spec = classical_to_lindblad(ClassicalClockworkSpec([[0, 2], [1, 0]]))
    assert np.allclose(steady_state(spec), np.diag([2 / 3, 1 / 3]))


def test_ring_has_one_jump_per_edge():
    ring = ClassicalClockworkSpec(np.roll(np.eye(3), 1, axis=0))
    assert len(classical_to_lindblad(ring).jumps) == 3
    assert len(cyclic_clockwork([1, 1, 1]).jumps) == 3


def random_rates(rng, d):
    r = rng.uniform(0.1, 3, (d, d))
    np.fill_diagonal(r, 0)
    return r


@pytest.mark.parametrize("seed", range(3))
def test_classical_evolution_stays_diagonal(seed):
    rng = np.random.default_rng(seed)
    spec = classical_to_lindblad(ClassicalClockworkSpec(random_rates(rng, 4)))
    gen = vectorized_generator(spec)
    p = rng.random(4)
    rho = np.diag(p / p.sum()).astype(complex)
    for t in (0.1, 1.0, 5.0):
        out = unvectorize(expm(gen * t) @ vectorize(rho))
        assert np.max(np.abs(out - np.diag(np.diag(out)))) <= 1e-10


def test_to_classical_round_trip():
    rates = random_rates(np.random.default_rng(5), 3)
    spec = classical_to_lindblad(ClassicalClockworkSpec(rates))
    assert is_classical(spec)
    assert np.allclose(to_classical(spec).rates, rates)
    with pytest.raises(NotClassicalError):
        to_classical(qubit_clockwork(1.0, 1.0))


def test_compose_two_classical_clockworks():
    a = classical_to_lindblad(ClassicalClockworkSpec([[0, 1], [1, 0]]))
    b = classical_to_lindblad(ClassicalClockworkSpec([[0, 2], [3, 0]]))
    joint = compose_independent([a, b])
    assert joint.dim == 4 and len(joint.jumps) == 4
    assert {lab.a for lab in joint.labels} == {1, 2}
    assert np.allclose(steady_state(joint), np.kron(steady_state(a), steady_state(b)))


def test_compose_generator_is_kron_sum():
    a, b = qubit_clockwork(0.7, 2.0), qubit_clockwork(1.3, 4.0)
    la, lb = vectorized_generator(a), vectorized_generator(b)
    joint = vectorized_generator(compose_independent([a, b]))
    # vec of A x B in the composed ordering is a permutation of vec(A) x vec(B)
    perm = np.empty(16, dtype=int)
    for i1, i2, j1, j2 in np.ndindex(2, 2, 2, 2):
        composed = (2 * i1 + i2) + 4 * (2 * j1 + j2)
        perm[composed] = 4 * (i1 + 2 * j1) + (i2 + 2 * j2)
    expected = np.kron(la, np.eye(4)) + np.kron(np.eye(4), lb)
    assert np.allclose(joint, expected[np.ix_(perm, perm)])


def test_compose_single_is_identity_and_empty_fails():
    spec = qubit_clockwork(0.3, 1.0)
    assert compose_independent([spec]) == spec
    with pytest.raises(ModelError):
        compose_independent([])


def test_compose_total_count_is_additive():
    a, b = qubit_clockwork(0.84, 1.15 * np.pi), qubit_clockwork(0.5, 2.0)
    joint = compose_independent([a, b])
    fa = current_and_noise(a, IntegratedCurrent.total_count(a.labels)).F
    fb = current_and_noise(b, IntegratedCurrent.total_count(b.labels)).F
    fj = current_and_noise(joint, IntegratedCurrent.total_count(joint.labels)).F
    assert np.isclose(fj, fa + fb, rtol=1e-10)


def test_energy_family_identity_parameter():
    base = qubit_clockwork(0.8, 3.0)
    family = control_family("energy", base, (0.0, 2.0))
    assert family([1.0]) == base
    assert np.allclose(family([0.5]).hamiltonian, 0.5 * base.hamiltonian)
    with pytest.raises(ModelError):
        family([3.0])


def test_jump_strength_family():
    base = qubit_clockwork(0.8, 3.0)
    family = control_family("jump_strength", base, {"values": [0.0, 1.0]})
    assert np.allclose(only_jump(family([0.0])), 0)
    assert family([1.0]) == base
    with pytest.raises(ModelError):
        control_family("jump_strength", base, (-1.0, 1.0))


def test_time_unitary_family():
    base = qubit_clockwork(0.8, 3.0)
    trivial = control_family("time_unitary", base, (0.0, 1.0), lambda c: np.eye(2))
    assert trivial([0.3]) == base
    rotating = control_family("time_unitary", base, (0.0, 1.0), unitary_from_generator(np.diag([1.0, -1.0])))
    op = only_jump(rotating([0.5]))
    assert np.allclose(op.conj().T @ op, only_jump(base).conj().T @ only_jump(base))
    broken = control_family("time_unitary", base, (0.0, 1.0), lambda c: 2 * np.eye(2))
    with pytest.raises(ModelError):
        broken([0.5])


def test_coupling_family():
    sz = np.diag([1.0, -1.0])
    family = control_family("coupling", {"h1": sz, "h2": sz, "h_int": np.kron(sz, sz)}, (0.0, 1.0))
    h = family([0.25]).hamiltonian
    assert np.allclose(h, np.kron(sz, np.eye(2)) + np.kron(np.eye(2), sz) + 0.25 * np.kron(sz, sz))


def test_unknown_family_kind():
    with pytest.raises(ModelError):
        control_family("magic", qubit_clockwork(1, 1), (0, 1))


def test_parameter_spaces():
    space = ParameterSpace((Coordinate(0.0, 1.0), Coordinate(0.0, 2 * np.pi, periodic=True)))
    assert space.contains([0.5, 10.0])
    assert not space.contains([1.5, 0.0])
    assert not space.contains([0.5])
    assert ParameterSpace.interval(0.1, 5.0, 2).is_symmetric()
    assert not space.is_symmetric()
    assert ParameterSpace.finite([0, 1]).contains([1.0])
    fam = qubit_family()
    assert fam([0.8, 7.0]).dim == 2
