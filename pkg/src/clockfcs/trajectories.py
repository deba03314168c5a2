"""Stochastic jump trajectories as an independent check of the counting statistics.

Quantum systems are unravelled into pure-state jump trajectories. Between
jumps the unnormalized state follows exp(-i H_eff t) and the waiting time is
located by a greedy dyadic search on precomputed propagators, so jump times
are exact in distribution up to the finest step. Classical chains use the
Gillespie algorithm. Trajectory ``i`` draws from its own SplitMix64 stream
seeded from ``SeedSequence(seed, spawn_key=(i,))``, so results do not depend
on the number of threads.
"""
import os
from dataclasses import dataclass

import numba
import numpy as np
from scipy.linalg import expm

from .errors import ModelError, SimulationError
from .fcs import CountingStatistics
from .feedback import JointSystem, classical_feedback_rate_matrix, memory_resolved
from .models import ClassicalClockworkSpec, LindbladSpec, is_classical, to_classical

DEFAULT_TRAJECTORIES = 10_000
HORIZON_SCALE = 500.0
LEVELS = 44
EIG_CUTOFF = 1e-12
COLLAPSE = 1e-12

if "NUMBA_THREADING_LAYER" not in os.environ:
    # prefer OpenMP; avoids a warning from outdated TBB installations
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

OK, ERR_COLLAPSE, ERR_NO_CHANNEL, ERR_ABSORBING, ERR_OVERFLOW = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class RngStream:
    base_seed: int
    stream_index: int

    def state(self):
        seq = np.random.SeedSequence(self.base_seed, spawn_key=(self.stream_index,))
        return seq.generate_state(1, dtype=np.uint64)[0]


def stream_states(seed, n):
    return np.array([RngStream(seed, i).state() for i in range(n)], dtype=np.uint64)


@dataclass
class TrajectoryStats:
    T: float
    n_traj: int
    mean_N: float
    var_N: float
    F_hat: float
    D_hat: float
    se_F: float
    se_D: float
    seed: int

    @property
    def S_hat(self):
        return self.F_hat**2 / self.D_hat if self.D_hat > 0 else 0.0

    @property
    def se_S(self):
        """Delta-method standard error of S_hat, ignoring the F-D covariance."""
        if self.D_hat <= 0:
            return 0.0
        s = self.S_hat
        return s * np.hypot(2 * self.se_F / self.F_hat if self.F_hat else 0.0, self.se_D / self.D_hat)

    def agrees(self, F, D, k=3.0):
        return abs(self.F_hat - F) <= k * self.se_F and abs(self.D_hat - D) <= k * self.se_D

    def record(self):
        return {
            "T": self.T,
            "n_traj": self.n_traj,
            "mean_N": self.mean_N,
            "var_N": self.var_N,
            "F_hat": self.F_hat,
            "D_hat": self.D_hat,
            "se_F": self.se_F,
            "se_D": self.se_D,
            "seed": self.seed,
        }


def summarize(counts, T, seed):
    counts = np.asarray(counts, dtype=float)
    n = counts.size
    if n < 2:
        raise ModelError("at least two trajectories are needed")
    mean = counts.mean()
    var = counts.var(ddof=1)
    mu4 = np.mean((counts - mean) ** 4)
    var_of_var = max((mu4 - (n - 3) / (n - 1) * var * var) / n, 0.0)
    return TrajectoryStats(
        T=float(T),
        n_traj=n,
        mean_N=float(mean),
        var_N=float(var),
        F_hat=float(mean / T),
        D_hat=float(var / T),
        se_F=float(np.sqrt(var / n) / T),
        se_D=float(np.sqrt(var_of_var) / T),
        seed=int(seed),
    )


def set_threads(threads=None):
    """Apply ``threads`` (or CLOCKFCS_THREADS) to the numba thread pool."""
    if threads is None:
        env = os.environ.get("CLOCKFCS_THREADS")
        threads = int(env) if env else None
    if threads is None:
        return numba.get_num_threads()
    if threads < 1:
        raise ModelError("threads must be at least 1")
    threads = min(int(threads), numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(threads)
    return threads


# -- random numbers -------------------------------------------------------------


@numba.njit(cache=True)
def _uniform(state):
    """Next double in (0, 1) from a SplitMix64 stream held in ``state[0]``."""
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return ((z >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _pick(cumulative, u):
    total = cumulative[-1]
    target = u * total
    for i in range(cumulative.size):
        if target < cumulative[i]:
            return i
    return cumulative.size - 1


# -- quantum jumps --------------------------------------------------------------


@numba.njit(cache=True)
def _apply(mat, vec, out):
    n = vec.size
    for i in range(n):
        acc = 0j
        for k in range(n):
            acc += mat[i, k] * vec[k]
        out[i] = acc


@numba.njit(cache=True)
def _normsq(vec):
    s = 0.0
    for i in range(vec.size):
        s += vec[i].real ** 2 + vec[i].imag ** 2
    return s


@numba.njit(cache=True)
def _quantum_trajectory(
    state, T, steps, props, ops, m_pre, m_post, weights, by_memory, by_memory_len,
    init_probs, init_m, init_vecs, ev_t, ev_c, ev_norm,
):
    """Return (N, status, n_events). Events are recorded while space remains."""
    n = init_vecs.shape[1]
    levels = steps.size
    cap = ev_t.size
    k0 = _pick(init_probs, _uniform(state))
    m = init_m[k0]
    psi = init_vecs[k0].copy()
    trial = np.empty(n, dtype=np.complex128)
    jumped = np.empty(n, dtype=np.complex128)
    probs = np.empty(ops.shape[0])
    t = 0.0
    N = 0.0
    events = 0
    while True:
        r = _uniform(state)
        remaining = T - t
        s = 0.0
        for lvl in range(levels):
            dt = steps[lvl]
            if s + dt > remaining:
                continue
            _apply(props[m, lvl], psi, trial)
            if _normsq(trial) > r:
                psi[:] = trial
                s += dt
        if remaining - s <= steps[levels - 1]:
            return N, OK, events
        # jump from the state just before the norm crosses r
        norm0 = _normsq(psi)
        if norm0 < COLLAPSE * r:
            return N, ERR_COLLAPSE, events
        count = by_memory_len[m]
        total = 0.0
        for i in range(count):
            c = by_memory[m, i]
            _apply(ops[c], psi, jumped)
            total += _normsq(jumped)
            probs[i] = total
        if total <= 0.0:
            return N, ERR_NO_CHANNEL, events
        i = _pick(probs[:count], _uniform(state))
        c = by_memory[m, i]
        _apply(ops[c], psi, jumped)
        scale = 1.0 / np.sqrt(_normsq(jumped))
        for q in range(n):
            psi[q] = jumped[q] * scale
        t += s
        N += weights[c]
        m = m_post[c]
        if events < cap:
            ev_t[events] = t
            ev_c[events] = c
            ev_norm[events] = _normsq(psi)
        events += 1


@numba.njit(cache=True, parallel=True)
def _quantum_batch(
    seeds, T, steps, props, ops, m_pre, m_post, weights, by_memory, by_memory_len,
    init_probs, init_m, init_vecs,
):
    n_traj = seeds.size
    counts = np.zeros(n_traj)
    status = np.zeros(n_traj, dtype=np.int64)
    for i in numba.prange(n_traj):
        state = np.empty(1, dtype=np.uint64)
        state[0] = seeds[i]
        ev_t = np.empty(0)
        ev_c = np.empty(0, dtype=np.int64)
        ev_n = np.empty(0)
        N, st, _ = _quantum_trajectory(
            state, T, steps, props, ops, m_pre, m_post, weights, by_memory, by_memory_len,
            init_probs, init_m, init_vecs, ev_t, ev_c, ev_n,
        )
        counts[i] = N
        status[i] = st
    return counts, status


def _as_joint(system):
    if isinstance(system, JointSystem):
        return system
    if isinstance(system, LindbladSpec):
        return memory_resolved(system)
    raise ModelError(f"cannot simulate {type(system).__name__} with quantum jumps")


def _initial_ensemble(joint, rho):
    n, size = joint.clockwork_dim, joint.memory_dim
    probs, mems, vecs = [], [], []
    for m in range(size):
        block = rho[m::size, m::size]
        # the memory must be classical in the steady state
        vals, vecs_m = np.linalg.eigh(0.5 * (block + block.conj().T))
        for lam, v in zip(vals, vecs_m.T):
            if lam > EIG_CUTOFF:
                probs.append(lam)
                mems.append(m)
                vecs.append(v)
    probs = np.array(probs)
    return np.cumsum(probs / probs.sum()), np.array(mems, dtype=np.int64), np.array(vecs, dtype=complex).reshape(-1, n)


def default_horizon(system):
    """HORIZON_SCALE divided by the median rate of the system's jumps."""
    if isinstance(system, ClassicalClockworkSpec):
        rates = system.escape_rates()
    else:
        joint = _as_joint(system)
        rates = np.array([np.linalg.norm(ch.op, 2) ** 2 for ch in joint.channels])
    rates = rates[rates > 0]
    if rates.size == 0:
        raise ModelError("the system has no jumps")
    return HORIZON_SCALE / float(np.median(rates))


class QuantumJumpSampler:
    """Precomputed propagators and channel tables of one system."""

    def __init__(self, system, current, T):
        if not T > 0:
            raise ModelError("horizon T must be positive")
        joint = _as_joint(system)
        self.joint = joint
        self.T = float(T)
        current.validate(joint.spec.labels)
        channels = joint.channels
        n, size = joint.clockwork_dim, joint.memory_dim
        self.channels = channels
        self.ops = np.array([ch.op for ch in channels], dtype=complex).reshape(-1, n, n)
        self.m_pre = np.array([ch.m_pre for ch in channels], dtype=np.int64)
        self.m_post = np.array([ch.m_post for ch in channels], dtype=np.int64)
        self.weights = np.array([current.weight(ch.label) for ch in channels], dtype=float)
        width = max(1, max((int(np.sum(self.m_pre == m)) for m in range(size)), default=1))
        self.by_memory = np.zeros((size, width), dtype=np.int64)
        self.by_memory_len = np.zeros(size, dtype=np.int64)
        for c, m in enumerate(self.m_pre):
            self.by_memory[m, self.by_memory_len[m]] = c
            self.by_memory_len[m] += 1
        self.steps = self.T / 2.0 ** np.arange(LEVELS)
        self.props = np.empty((size, LEVELS, n, n), dtype=complex)
        for m in range(size):
            h_eff = joint.hamiltonians[m].astype(complex)
            for c in np.nonzero(self.m_pre == m)[0]:
                h_eff = h_eff - 0.5j * self.ops[c].conj().T @ self.ops[c]
            for lvl, dt in enumerate(self.steps):
                self.props[m, lvl] = expm(-1j * dt * h_eff)
        rho = CountingStatistics(joint.spec).steady_state
        self.init_probs, self.init_m, self.init_vecs = _initial_ensemble(joint, rho)

    def _args(self):
        return (
            self.T, self.steps, self.props, self.ops, self.m_pre, self.m_post, self.weights,
            self.by_memory, self.by_memory_len, self.init_probs, self.init_m, self.init_vecs,
        )

    def run(self, seeds):
        counts, status = _quantum_batch(np.asarray(seeds, dtype=np.uint64), *self._args())
        _raise_status(status)
        return counts

    def record(self, seed, stream_index=0, capacity=100_000):
        """One trajectory with its jump events: list of (t, label, m_pre, m_post, norm)."""
        state = np.array([RngStream(seed, stream_index).state()], dtype=np.uint64)
        ev_t = np.empty(capacity)
        ev_c = np.empty(capacity, dtype=np.int64)
        ev_n = np.empty(capacity)
        N, status, count = _quantum_trajectory(state, *self._args(), ev_t, ev_c, ev_n)
        _raise_status(np.array([status]))
        if count > capacity:
            raise SimulationError(f"{count} events exceed the recording capacity {capacity}")
        events = [
            (ev_t[i], self.channels[ev_c[i]].label, int(self.m_pre[ev_c[i]]), int(self.m_post[ev_c[i]]), ev_n[i])
            for i in range(count)
        ]
        return N, events


def _raise_status(status):
    bad = status[status != OK]
    if bad.size == 0:
        return
    reasons = {
        ERR_COLLAPSE: "state norm collapsed below 1e-12 before the jump was resolved",
        ERR_NO_CHANNEL: "no jump channel has positive probability",
        ERR_ABSORBING: "an absorbing state (zero escape rate) was reached",
    }
    first = int(np.nonzero(status != OK)[0][0])
    raise SimulationError(f"trajectory {first}: {reasons.get(int(bad[0]), 'unknown failure')}")


def simulate_quantum(system, current, T=None, n_traj=DEFAULT_TRAJECTORIES, seed=0, threads=None):
    """Monte Carlo estimate of F and D for a spec or joint feedback system."""
    if n_traj < 2:
        raise ModelError("n_traj must be at least 2")
    T = default_horizon(system) if T is None else float(T)
    set_threads(threads)
    sampler = QuantumJumpSampler(system, current, T)
    return summarize(sampler.run(stream_states(seed, n_traj)), T, seed)


# -- classical chains -----------------------------------------------------------


@numba.njit(cache=True)
def _gillespie(state, T, offsets, targets, cum_rates, weights, escape, init_cum):
    x = _pick(init_cum, _uniform(state))
    t = 0.0
    N = 0.0
    while True:
        esc = escape[x]
        if esc <= 0.0:
            return N, ERR_ABSORBING
        t += -np.log(_uniform(state)) / esc
        if t > T:
            return N, OK
        lo, hi = offsets[x], offsets[x + 1]
        i = lo + _pick(cum_rates[lo:hi], _uniform(state))
        N += weights[i]
        x = targets[i]


@numba.njit(cache=True, parallel=True)
def _gillespie_batch(seeds, T, offsets, targets, cum_rates, weights, escape, init_cum):
    n_traj = seeds.size
    counts = np.zeros(n_traj)
    status = np.zeros(n_traj, dtype=np.int64)
    for i in numba.prange(n_traj):
        state = np.empty(1, dtype=np.uint64)
        state[0] = seeds[i]
        counts[i], status[i] = _gillespie(state, T, offsets, targets, cum_rates, weights, escape, init_cum)
    return counts, status


def _chain_of(system, policy):
    if policy is not None:
        return classical_feedback_rate_matrix(system, policy)
    if isinstance(system, ClassicalClockworkSpec):
        return system
    spec = system.spec if isinstance(system, JointSystem) else system
    if isinstance(spec, LindbladSpec) and is_classical(spec):
        return to_classical(spec)
    raise ModelError("simulate_classical needs a classical chain")


def simulate_classical(system, current, policy=None, T=None, n_traj=DEFAULT_TRAJECTORIES, seed=0, threads=None):
    """Gillespie estimate of F and D on a classical chain.

    With ``policy`` given, ``system`` is the list of clockwork dimensions and
    the chain is the clockwork x memory chain of the feedback policy.
    """
    if n_traj < 2:
        raise ModelError("n_traj must be at least 2")
    chain = _chain_of(system, policy)
    T = default_horizon(chain) if T is None else float(T)
    if not T > 0:
        raise ModelError("horizon T must be positive")
    set_threads(threads)
    stats = CountingStatistics(chain)
    weights = stats.weight_vector(current)
    d = chain.num_states
    trans = chain.transitions()
    offsets = np.zeros(d + 1, dtype=np.int64)
    for _, l, _ in trans:
        offsets[l + 1] += 1
    offsets = np.cumsum(offsets)
    targets = np.array([k for k, _, _ in trans], dtype=np.int64)
    rates = np.array([r for _, _, r in trans], dtype=float)
    cum_rates = np.zeros_like(rates)
    for l in range(d):
        lo, hi = offsets[l], offsets[l + 1]
        cum_rates[lo:hi] = np.cumsum(rates[lo:hi])
    p = np.clip(np.real(np.diag(stats.steady_state)), 0.0, None)
    init_cum = np.cumsum(p / p.sum())
    counts, status = _gillespie_batch(
        stream_states(seed, n_traj), T, offsets, targets, cum_rates, weights, chain.escape_rates().astype(float), init_cum
    )
    _raise_status(status)
    return summarize(counts, T, seed)


def simulate(system, current, T=None, n_traj=DEFAULT_TRAJECTORIES, seed=0, threads=None):
    """Dispatch to the Gillespie sampler for classical chains, quantum jumps otherwise."""
    if isinstance(system, ClassicalClockworkSpec):
        return simulate_classical(system, current, T=T, n_traj=n_traj, seed=seed, threads=threads)
    return simulate_quantum(system, current, T=T, n_traj=n_traj, seed=seed, threads=threads)
