"""Random classical instances for falsification runs of the SNR bounds."""
from dataclasses import dataclass, field

import numpy as np

from .errors import KernelDimensionError
from .fcs import (
    CountingStatistics,
    IntegratedCurrent,
    corollary1_construction,
    hyperaccurate_current,
    theorem1_bound,
)
from .feedback import FeedbackPolicy, classical_feedback_rate_matrix
from .models import ClassicalClockworkSpec, JumpLabel, cyclic_family

RATE_RANGE = (0.1, 5.0)


def random_chain(rng, max_states=6, rate_range=RATE_RANGE, density=0.6):
    """Irreducible chain: a random ring plus extra random transitions."""
    d = int(rng.integers(2, max_states + 1))
    rates = np.where(rng.random((d, d)) < density, rng.uniform(*rate_range, (d, d)), 0.0)
    order = rng.permutation(d)
    for i in range(d):
        l, k = order[i], order[(i + 1) % d]
        rates[k, l] = rng.uniform(*rate_range)
    np.fill_diagonal(rates, 0.0)
    return ClassicalClockworkSpec(rates)


def random_current(rng, labels, scale=1.0):
    return IntegratedCurrent({lab: rng.uniform(-scale, scale) for lab in labels})


def random_policy(rng, num_clockworks, memory_size, rate_range=RATE_RANGE):
    """Random memory update and rates for ``num_clockworks`` two-state clockworks."""
    update = {
        (m, JumpLabel(a, j)): int(rng.integers(memory_size))
        for m in range(memory_size)
        for a in range(1, num_clockworks + 1)
        for j in range(2)
    }
    params = {
        (m, a): rng.uniform(*rate_range, 2) for m in range(memory_size) for a in range(1, num_clockworks + 1)
    }
    return FeedbackPolicy(tuple(range(memory_size)), update, params)


@dataclass
class FeedbackInstance:
    policy: FeedbackPolicy
    families: list
    chain: ClassicalClockworkSpec
    stats: CountingStatistics
    bound: float


def random_feedback_instance(rng, max_clockworks=3, max_memory=4, rate_range=RATE_RANGE):
    """Draw until the clockwork x memory chain has a unique steady state."""
    while True:
        g = int(rng.integers(1, max_clockworks + 1))
        size = int(rng.integers(1, max_memory + 1))
        policy = random_policy(rng, g, size, rate_range)
        families = [cyclic_family(2, rate_range)] * g
        chain = classical_feedback_rate_matrix([2] * g, policy)
        try:
            stats = CountingStatistics(chain)
        except KernelDimensionError:
            continue
        return FeedbackInstance(policy, families, chain, stats, theorem1_bound(policy, families))


@dataclass
class Theorem1Report:
    trials: int
    currents_per_trial: int
    max_ratio: float = 0.0
    violations: list = field(default_factory=list)
    max_saturation_error: float = 0.0

    @property
    def ok(self):
        return not self.violations

    def record(self):
        return {
            "trials": self.trials,
            "currents_per_trial": self.currents_per_trial,
            "max_ratio": self.max_ratio,
            "violations": len(self.violations),
            "max_saturation_error": self.max_saturation_error,
        }


def verify_theorem1(trials=100, seed=0, currents=20, max_clockworks=3, max_memory=4, tol=1e-9):
    """Random currents on random classical feedback systems against the bound.

    Each trial also tests the total count and the hyperaccurate current of
    the joint chain, and checks that the constant-policy construction
    attains the bound.
    """
    rng = np.random.default_rng(seed)
    report = Theorem1Report(trials, currents)
    for trial in range(trials):
        inst = random_feedback_instance(rng, max_clockworks, max_memory)
        labels = list(dict.fromkeys(lab.base for lab in inst.stats.labels))
        candidates = [random_current(rng, inst.stats.labels) for _ in range(currents)]
        candidates += [random_current(rng, labels), IntegratedCurrent.total_count(labels), hyperaccurate_current(inst.chain)]
        for current in candidates:
            S = inst.stats.evaluate(current).S
            ratio = S / inst.bound
            report.max_ratio = max(report.max_ratio, ratio)
            if ratio > 1 + tol:
                report.violations.append((trial, S, inst.bound))
        constant, total = corollary1_construction(inst.policy, inst.families)
        chain = classical_feedback_rate_matrix([2] * constant.clockworks, constant)
        S_const = CountingStatistics(chain).evaluate(total).S
        report.max_saturation_error = max(report.max_saturation_error, abs(S_const - inst.bound) / inst.bound)
    return report
