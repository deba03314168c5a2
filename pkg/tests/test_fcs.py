import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from clockfcs import (
    ClassicalClockworkSpec,
    IntegratedCurrent,
    JumpLabel,
    LindbladSpec,
    Transition,
    analytic_qubit_snr,
    build_joint,
    classical_to_lindblad,
    compose_independent,
    constant_policy,
    corollary1_construction,
    cur_bound,
    current_and_noise,
    cyclic_clockwork,
    cyclic_family,
    group_inverse,
    hyperaccurate_current,
    kur_bound,
    optimal_combination,
    optimal_current,
    qubit_clockwork,
    rescale_dynamics,
    rescale_weights,
    steady_state,
    theorem1_bound,
    vectorized_generator,
)
from clockfcs.errors import DegenerateCurrentError, KernelDimensionError, ModelError, NotClassicalError, NumericalError
from clockfcs.fcs import CountingStatistics, check_group_inverse, combined_snr
from clockfcs.feedback import FeedbackPolicy, classical_feedback_rate_matrix
from clockfcs.linalg import identity_vector, vectorize
from clockfcs.models import ParameterSpace, ControlledFamily
from clockfcs.randomized import random_chain, random_current

E_STAR, PHI_STAR = 0.83593, 1.151259 * np.pi
SYM = ClassicalClockworkSpec([[0, 1], [1, 0]])
ASYM = ClassicalClockworkSpec([[0, 2], [1, 0]])
seeds = st.integers(0, 2**32 - 1)


def total(system):
    return IntegratedCurrent.total_count(CountingStatistics(system, check=False).labels)


# -- generator, steady state, group inverse -------------------------------------


def test_decay_generator_population_block():
    spec = LindbladSpec(np.zeros((2, 2)), {JumpLabel(1, 0): [[0, 1], [0, 0]]})
    gen = vectorized_generator(spec)
    pops = [0, 3]
    assert np.allclose(gen[np.ix_(pops, pops)], [[0, 1], [0, -1]])


@pytest.mark.parametrize("spec", [qubit_clockwork(0.84, 1.15 * np.pi), classical_to_lindblad(ASYM)])
def test_trace_preservation(spec):
    gen = vectorized_generator(spec)
    assert np.linalg.norm(identity_vector(spec.dim) @ gen) <= 1e-12 * np.linalg.norm(gen)


def test_classical_steady_states():
    assert np.allclose(steady_state(classical_to_lindblad(ASYM)), np.diag([2 / 3, 1 / 3]))
    assert np.allclose(steady_state(classical_to_lindblad(SYM)), np.eye(2) / 2)
    assert np.allclose(CountingStatistics(ASYM).steady_state, np.diag([2 / 3, 1 / 3]))


def test_qubit_steady_state_residual():
    spec = qubit_clockwork(E_STAR, PHI_STAR)
    rho = steady_state(spec)
    gen = vectorized_generator(spec)
    assert np.isclose(np.trace(rho), 1)
    assert np.linalg.norm(gen @ vectorize(rho)) <= 1e-10 * np.linalg.norm(gen)


def test_degenerate_steady_state_is_an_error():
    with pytest.raises(KernelDimensionError) as info:
        steady_state(LindbladSpec(np.zeros((2, 2)), {}))
    assert info.value.dimension == 4
    split = ClassicalClockworkSpec(np.zeros((2, 2)))
    with pytest.raises(KernelDimensionError):
        CountingStatistics(split)


@pytest.mark.parametrize("spec", [qubit_clockwork(E_STAR, PHI_STAR), qubit_clockwork(2.0, 0.3, 0.5)])
def test_group_inverse_projector_identities(spec):
    ginv = group_inverse(spec)
    gen = vectorized_generator(spec)
    rho = vectorize(steady_state(spec))
    projector = np.eye(4) - np.outer(rho, identity_vector(2))
    assert np.allclose(ginv @ gen, projector, atol=1e-8)
    assert np.linalg.norm(ginv @ rho) <= 1e-10


def test_two_state_group_inverse_by_hand():
    Gamma = 1.7
    chain = ClassicalClockworkSpec([[0, Gamma], [Gamma, 0]])
    expected = -np.array([[1, -1], [-1, 1]]) / (4 * Gamma)
    assert np.allclose(CountingStatistics(chain).ginv, expected)
    ginv = group_inverse(classical_to_lindblad(chain))
    pops = [0, 3]
    assert np.allclose(ginv[np.ix_(pops, pops)], expected)


def test_group_inverse_check_detects_garbage():
    gen = vectorized_generator(qubit_clockwork(1.0, 1.0))
    with pytest.raises(NumericalError):
        check_group_inverse(gen, np.eye(4))


# -- current and noise ------------------------------------------------------------


@pytest.mark.parametrize("Gamma", [1.0, 2.5])
def test_poisson_two_state(Gamma):
    chain = ClassicalClockworkSpec([[0, Gamma], [Gamma, 0]])
    for system in (chain, classical_to_lindblad(chain)):
        r = current_and_noise(system, total(system))
        assert np.allclose([r.F, r.D, r.S], Gamma, rtol=1e-12)


def test_qubit_optimum_snr():
    spec = qubit_clockwork(0.84, 1.15 * np.pi)
    r = current_and_noise(spec, total(spec))
    assert abs(r.S - 1.19) <= 0.01
    assert r.residual_time is None
    assert np.isclose(r.accuracy, r.S / r.F)


def test_null_current_is_degenerate():
    spec = qubit_clockwork(E_STAR, PHI_STAR)
    r = current_and_noise(spec, IntegratedCurrent({}))
    assert (r.F, r.D, r.S, r.flags) == (0.0, 0.0, 0.0, "degenerate")


def test_vanishing_noise_flags_or_raises():
    stats = CountingStatistics(SYM)
    r = stats._result(1.0, 0.0, strict=False)
    assert r.S == np.inf and r.divergent and r.flags == "divergent"
    with pytest.raises(DegenerateCurrentError):
        stats._result(1.0, 0.0, strict=True)


def test_imaginary_residue_raises():
    stats = CountingStatistics(SYM)
    with pytest.raises(NumericalError, match="imaginary"):
        stats._real(1.0 + 1e-6j, "F")
    assert stats._real(1.0 + 1e-13j, "F") == 1.0


def test_unknown_label_in_current():
    spec = qubit_clockwork(1.0, 1.0)
    with pytest.raises(ModelError):
        current_and_noise(spec, IntegratedCurrent({JumpLabel(2, 0): 1.0}))
    with pytest.raises(ModelError):
        IntegratedCurrent({"x": 1.0})
    with pytest.raises(ModelError):
        IntegratedCurrent({JumpLabel(1, 0): np.nan})


def test_per_memory_weights_override_base_weights():
    current = IntegratedCurrent({JumpLabel(1, 0): 1.0, JumpLabel(1, 0, 1): 5.0})
    assert current.weight(JumpLabel(1, 0, 0)) == 1.0
    assert current.weight(JumpLabel(1, 0, 1)) == 5.0
    assert current.transition_weight(Transition(0, 1), JumpLabel(1, 0, 1)) == 5.0
    assert IntegratedCurrent({Transition(0, 1): 2.0}).transition_weight(Transition(0, 1), JumpLabel(1, 0)) == 2.0


def test_classical_and_lindblad_routes_agree():
    rng = np.random.default_rng(11)
    chain = random_chain(rng, 5)
    spec = classical_to_lindblad(chain)
    a, b = CountingStatistics(chain), CountingStatistics(spec)
    assert a.labels == b.labels
    current = random_current(rng, a.labels)
    ra, rb = a.evaluate(current), b.evaluate(current)
    assert np.allclose([ra.F, ra.D, ra.dynamical_activity], [rb.F, rb.D, rb.dynamical_activity], rtol=1e-10)
    assert np.isclose(ra.residual_time, rb.residual_time)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_snr_is_f_squared_over_d(seed):
    rng = np.random.default_rng(seed)
    chain = random_chain(rng, 4)
    r = current_and_noise(chain, random_current(rng, CountingStatistics(chain).labels))
    assert r.D >= -1e-10
    if r.D > 1e-14:
        assert np.isclose(r.S, r.F**2 / r.D, rtol=1e-12)


# -- closed form ------------------------------------------------------------------


def test_analytic_examples():
    F, D, S = analytic_qubit_snr(0.84, 1.15 * np.pi)
    assert abs(S - 1.19) <= 0.01
    alpha = np.arccos(1 / np.sqrt(2))
    F, _, _ = analytic_qubit_snr(0.5, alpha)
    assert np.isclose(F, 0.5 / (2 - np.sqrt(2)))
    with pytest.raises(ValueError):
        analytic_qubit_snr(0.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 4.0), st.floats(0, 2 * np.pi), st.floats(0.2, 5.0))
def test_analytic_matches_numeric(Delta, phi, Gamma):
    spec = qubit_clockwork(Delta * Gamma, phi, Gamma)
    r = current_and_noise(spec, total(spec))
    F, D, S = analytic_qubit_snr(Delta, phi)
    assert np.allclose([r.F / Gamma, r.D / Gamma, r.S / Gamma], [F, D, S], rtol=1e-8)


# -- uncertainty relations --------------------------------------------------------


def test_hyperaccurate_examples():
    Gamma = 1.3
    chain = ClassicalClockworkSpec([[0, Gamma], [Gamma, 0]])
    h = hyperaccurate_current(chain)
    assert np.allclose(list(h.weights.values()), 1 / Gamma)
    assert np.isclose(current_and_noise(chain, h).S, Gamma)
    h = hyperaccurate_current(ASYM)
    assert h.weights == pytest.approx({Transition(1, 0): 1.0, Transition(0, 1): 0.5})
    assert np.isclose(current_and_noise(ASYM, h).S, 1.2)
    spec_current = hyperaccurate_current(classical_to_lindblad(ASYM))
    assert spec_current.weights == pytest.approx({JumpLabel(1, (0, 1)): 1.0, JumpLabel(1, (1, 0)): 0.5})


@pytest.mark.parametrize("d", [3, 5])
def test_uniform_ring(d):
    ring = cyclic_clockwork([2.0] * d)
    h = hyperaccurate_current(ring)
    assert np.allclose(list(h.weights.values()), 0.5)
    assert np.isclose(current_and_noise(ring, h).S, 2.0)


def test_kur_cur_values():
    assert np.isclose(kur_bound(SYM), 1.0) and np.isclose(cur_bound(SYM), 1.0)
    assert np.isclose(kur_bound(ASYM), 4 / 3)
    assert np.isclose(cur_bound(ASYM), 5 / 6)
    assert np.isclose(kur_bound(classical_to_lindblad(ASYM)), 4 / 3)
    with pytest.raises(NotClassicalError):
        kur_bound(qubit_clockwork(1.0, 1.0))


def test_zero_escape_rate_is_rejected():
    absorbing = ClassicalClockworkSpec([[0, 1], [0, 0]])
    with pytest.raises(ModelError):
        cur_bound(absorbing)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_uncertainty_relations_random(seed):
    rng = np.random.default_rng(seed)
    chain = random_chain(rng, 6)
    stats = CountingStatistics(chain)
    A, tau = kur_bound(chain), cur_bound(chain)
    assert 1 / tau <= A + 1e-9
    for _ in range(5):
        S = stats.evaluate(random_current(rng, stats.transitions)).S
        assert S <= 1 / tau + 1e-9 and S <= A + 1e-9
    assert abs(stats.evaluate(hyperaccurate_current(chain)).S * tau - 1) <= 1e-8


# -- feedback bound ------------------------------------------------------------------


def two_state_policy(rates_by_memory):
    """rates_by_memory[m][a-1] is the rate pair of clockwork a in memory m."""
    size, g = len(rates_by_memory), len(rates_by_memory[0])
    update = {(m, JumpLabel(a, j)): m for m in range(size) for a in range(1, g + 1) for j in range(2)}
    params = {(m, a): rates_by_memory[m][a - 1] for m in range(size) for a in range(1, g + 1)}
    return FeedbackPolicy(tuple(range(size)), update, params), [cyclic_family(2, (0.1, 10.0))] * g


def test_theorem1_examples():
    policy, families = two_state_policy([[(1, 2), (3, 4)]])
    assert theorem1_bound(policy, families) == 6
    policy, families = two_state_policy([[(1, 1)], [(5, 5)]])
    assert theorem1_bound(policy, families) == 5
    policy, families = two_state_policy([[(1, 1), (1, 1)]])
    assert theorem1_bound(policy, families) == 2


def test_corollary_example():
    policy, families = two_state_policy([[(1, 2), (3, 4)]])
    constant, current = corollary1_construction(policy, families)
    assert constant.memory_states == (0,)
    assert constant.gamma(1, 0).tolist() == [2, 2] and constant.gamma(2, 0).tolist() == [4, 4]
    chain = classical_feedback_rate_matrix([2, 2], constant)
    assert np.isclose(current_and_noise(chain, current).S, 6.0, rtol=1e-10)


def test_corollary_fixed_point():
    policy, families = two_state_policy([[(3, 3), (2, 2)]])
    constant, _ = corollary1_construction(policy, families)
    assert constant.params.keys() == policy.params.keys()
    for key, value in policy.params.items():
        assert np.array_equal(constant.params[key], value)


def test_theorem1_preconditions():
    quantum = ControlledFamily("qubit", ParameterSpace.interval(0, 1, 2), lambda c: qubit_clockwork(*c))
    policy, _ = two_state_policy([[(1, 2)]])
    with pytest.raises(NotClassicalError):
        theorem1_bound(policy, [quantum])
    lopsided = ControlledFamily(
        "classical",
        ParameterSpace.interval(0.1, 1.0).__class__(
            (ParameterSpace.interval(0.1, 5).coordinates[0], ParameterSpace.interval(0.1, 1).coordinates[0])
        ),
        cyclic_clockwork,
        classical=True,
    )
    with pytest.raises(ModelError):
        theorem1_bound(policy, [lopsided])


# -- rescaling ------------------------------------------------------------------------


def fds(system, current):
    r = current_and_noise(system, current)
    return np.array([r.F, r.D, r.S])


def test_rescale_identity():
    spec = qubit_clockwork(E_STAR, PHI_STAR)
    cur = total(spec)
    assert np.allclose(fds(rescale_dynamics(spec, 1.0), rescale_weights(cur, 1.0)), fds(spec, cur), rtol=1e-12)


def test_rescale_dynamics_doubles_snr():
    spec = qubit_clockwork(E_STAR, PHI_STAR)
    cur = total(spec)
    assert np.isclose(fds(rescale_dynamics(spec, 2.0), cur)[2], 2 * fds(spec, cur)[2], rtol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 20), seeds)
def test_rescaling_contracts(alpha, seed):
    rng = np.random.default_rng(seed)
    spec = classical_to_lindblad(random_chain(rng, 4))
    current = random_current(rng, spec.labels)
    F, D, S = fds(spec, current)
    assume(D > 1e-8 and abs(F) > 1e-6)
    assert np.allclose(fds(rescale_dynamics(spec, alpha), current), [alpha * F, alpha * D, alpha * S], rtol=1e-10)
    assert np.allclose(fds(spec, rescale_weights(current, alpha)), [F / alpha, D / alpha**2, S], rtol=1e-10)


def test_rescale_errors():
    with pytest.raises(ValueError):
        rescale_dynamics(qubit_clockwork(1, 1), 0.0)
    with pytest.raises(ValueError):
        rescale_weights(IntegratedCurrent({}), 0.0)


# -- combination and additivity -------------------------------------------------------


def test_combination_examples():
    c = optimal_combination([(1, 1), (1, 1)])
    assert c.r_max == [1.0] and np.isclose(c.S, 2)
    c = optimal_combination([(1, 1), (2, 1)])
    assert c.r_max == [2.0] and np.isclose(c.S, 5)
    scan = np.linspace(-10, 10, 200001)
    assert np.isclose(combined_snr(1, 1, 2, 1, scan).max(), 5, rtol=1e-8)
    assert combined_snr(1, 1, 2, 1, c.r_min[0]) == 0


def test_combination_errors():
    with pytest.raises(DegenerateCurrentError):
        optimal_combination([(1, 0), (1, 1)])
    with pytest.raises(DegenerateCurrentError):
        optimal_combination([(0, 1), (1, 1)])
    with pytest.raises(ValueError):
        optimal_combination([])


def test_lemma_saturation_against_scan():
    a, b = qubit_clockwork(E_STAR, PHI_STAR), qubit_clockwork(0.4, 1.0, 2.0)
    ra, rb = current_and_noise(a, total(a)), current_and_noise(b, total(b))
    comb = optimal_combination([ra, rb])
    r = comb.r_max[0]
    coarse = combined_snr(ra.F, ra.D, rb.F, rb.D, np.linspace(-20, 20, 400001)).max()
    fine = combined_snr(ra.F, ra.D, rb.F, rb.D, np.linspace(r - 1e-3, r + 1e-3, 200001)).max()
    assert np.isclose(comb.S, ra.S + rb.S, rtol=1e-12)
    assert coarse <= comb.S * (1 + 1e-12)
    assert np.isclose(fine, comb.S, rtol=1e-10)
    joint = compose_independent([a, b])
    weights = {JumpLabel(1, 0): 1.0, JumpLabel(2, 0): comb.r_max[0]}
    assert np.isclose(current_and_noise(joint, IntegratedCurrent(weights)).S, ra.S + rb.S, rtol=1e-8)


def test_three_way_combination_is_additive():
    rs = [(0.3, 0.1), (1.0, 2.0), (-0.5, 0.4)]
    assert np.isclose(optimal_combination(rs).S, sum(F * F / D for F, D in rs))


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_additivity_of_independent_systems(seed):
    rng = np.random.default_rng(seed)
    s1 = classical_to_lindblad(random_chain(rng, 3))
    s2 = qubit_clockwork(rng.uniform(0.1, 3), rng.uniform(0, 2 * np.pi), rng.uniform(0.5, 2))
    c1, c2 = random_current(rng, s1.labels), random_current(rng, s2.labels)
    joint = compose_independent([s1, s2])
    weights = {JumpLabel(1, k.j): w for k, w in c1.weights.items()}
    weights.update({JumpLabel(2, k.j): w for k, w in c2.weights.items()})
    r, r1, r2 = (current_and_noise(*x) for x in ((joint, IntegratedCurrent(weights)), (s1, c1), (s2, c2)))
    scale = abs(r1.F) + abs(r2.F) + 1e-300
    assert abs(r.F - (r1.F + r2.F)) <= 1e-9 * scale
    assert abs(r.D - (r1.D + r2.D)) <= 1e-9 * (r1.D + r2.D)


def test_constant_policy_optimal_current_is_sum():
    base = [qubit_clockwork(E_STAR, PHI_STAR), qubit_clockwork(0.5, 2.0)]
    from clockfcs import control_family

    families = [control_family("energy", b, (0.0, 2.0)) for b in base]
    joint = build_joint(families, constant_policy(families, [[1.0], [1.0]]))
    parts = [current_and_noise(b, total(b)).S for b in base]
    _, best = optimal_current(joint)
    assert np.isclose(best.S, sum(parts), rtol=1e-8)


def test_optimal_current_dominates_random_ones():
    rng = np.random.default_rng(3)
    chain = random_chain(rng, 5)
    stats = CountingStatistics(chain)
    _, best = optimal_current(stats)
    for _ in range(20):
        assert stats.evaluate(random_current(rng, stats.transitions)).S <= best.S + 1e-9
    assert best.S <= 1 / cur_bound(chain) + 1e-9
