"""Exact failure probabilities by dynamic programming over stash and queue occupancies.

Both quantities keep the union-bound structure of the analytic argument (over the
B stash queues, and over the compression checkpoints) but replace every
Chernoff/Hoeffding estimate by an exact binomial tail. All tails are taken in
natural-log space and exponentiated only once they are products of
probabilities, so values far below 2^-128 stay representable.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binom, binomtest

from .compress import DRAIN, compress_schedule
from .enclave import AssignmentMode, Seed, StashLayout, Streams
from .errors import ConditionViolated, NumericError
from .params import ShuffleParams
from .shuffle import run_stash_shuffle

NUMERIC_TOL = 1e-12


@dataclass
class TailDistribution:
    """Truncated pmf on [0, cap] plus the mass that has ever left it."""

    pmf: np.ndarray
    cap: int
    overflow_mass: float = 0.0

    @classmethod
    def point(cls, cap: int, at: int = 0) -> TailDistribution:
        pmf = np.zeros(cap + 1)
        pmf[at] = 1.0
        return cls(pmf, cap)

    def total(self) -> float:
        return math.fsum(self.pmf) + self.overflow_mass

    def check(self, tol: float = NUMERIC_TOL) -> None:
        if np.any(self.pmf < 0) or self.overflow_mass < 0:
            raise NumericError("negative probability mass")
        drift = abs(self.total() - 1.0)
        if drift > tol:
            raise NumericError(f"mass drifted by {drift:.3e} (tolerance {tol:.1e})")

    def tail_above(self, k: int) -> float:
        return math.fsum(self.pmf[k + 1:]) if k < self.cap else 0.0


def stash_transition(D: int, B: int, C: int, cap: int) -> tuple[np.ndarray, np.ndarray]:
    """One step of x -> max(0, x + Bin(D, 1/B) - C) on [0, cap].

    Returns (T, escape) where T[x, y] is the probability of moving from x to y
    and escape[x] the probability of landing above ``cap``.
    """
    pr = 1.0 / B
    x = np.arange(cap + 1)
    T = np.zeros((cap + 1, cap + 1))
    # y = 0 absorbs every increment up to C - x
    T[:, 0] = np.exp(binom.logcdf(C - x, D, pr))
    y = np.arange(1, cap + 1)
    k = y[None, :] + C - x[:, None]
    T[:, 1:] = np.exp(binom.logpmf(k, D, pr))
    escape = np.exp(binom.logsf(cap + C - x, D, pr))
    # independent cdf/pmf/sf evaluations leave each row ~1e-16 off; over
    # thousands of steps that drift would exceed NUMERIC_TOL
    rows = np.array([math.fsum(T[r]) + escape[r] for r in range(cap + 1)])
    return T / rows[:, None], escape / rows


def stash_distributions(p: ShuffleParams, check: bool = True) -> Iterator[TailDistribution]:
    """Occupancy of one stash queue after each of the B input buckets."""
    cap = p.stash_per_bucket
    T, escape = stash_transition(p.D, p.B, p.C, cap)
    dist = TailDistribution.point(cap)
    for _ in range(p.B):
        dist = TailDistribution(
            dist.pmf @ T, cap, dist.overflow_mass + float(dist.pmf @ escape)
        )
        if check:
            dist.check()
        yield dist


def stash_tail_exact(p: ShuffleParams) -> float:
    """Union over the B queues of: ever exceeding S/B, or ending above K."""
    dist = TailDistribution.point(p.stash_per_bucket)
    for dist in stash_distributions(p):
        pass
    per_queue = dist.overflow_mass + dist.tail_above(p.K)
    return min(1.0, p.B * per_queue)


def _log_below(threshold: np.ndarray, n: int, pr: np.ndarray) -> np.ndarray:
    """log P[Bin(n, pr) < threshold] for integer thresholds."""
    return binom.logcdf(threshold - 1, n, pr)


def _log_above(threshold: np.ndarray, n: int, pr: np.ndarray) -> np.ndarray:
    """log P[Bin(n, pr) > threshold] for integer thresholds."""
    return binom.logsf(threshold, n, pr)


def _clamped_exp(log_terms: np.ndarray) -> float:
    if log_terms.size == 0 or np.all(np.isneginf(log_terms)):
        return 0.0
    return math.exp(min(0.0, float(logsumexp(log_terms))))


def compression_tail_exact(p: ShuffleParams, window: int | None = None) -> float:
    """Sum over i = W..B of P[Y_i < D(i-W)] + P[Y_i > Di + Q], Y_i ~ Bin(N, i/B)."""
    W = p.W if window is None else window
    if W > p.B:
        raise ConditionViolated(["W<=B"])
    i = np.arange(W, p.B + 1)
    pr = i / p.B
    terms = np.concatenate([
        _log_below(p.D * (i - W), p.N, pr),
        _log_above(p.D * i + p.Q, p.N, pr),
    ])
    return _clamped_exp(terms)


def compression_schedule_tail(p: ShuffleParams) -> float:
    """Union bound over the checkpoints the windowed compression actually executes.

    After m imports and d drains the queue holds Y_m - dD records. An import
    fails when that exceeds W*D + Q; a non-final drain fails when it is below D.
    """
    below, above, imported, drained = [], [], 0, 0
    for step, arg in compress_schedule(p.B, p.L):
        if step == DRAIN:
            if arg < p.B - 1:
                below.append((imported, (drained + 1) * p.D))
            drained += 1
        else:
            imported += 1
            if imported < p.B:
                above.append((imported, p.queue_capacity + drained * p.D))
            elif p.N - drained * p.D > p.queue_capacity:
                # Y_B = N is certain
                return 1.0
    terms = []
    if below:
        m, t = map(np.array, zip(*below))
        terms.append(_log_below(t, p.N, m / p.B))
    if above:
        m, t = map(np.array, zip(*above))
        terms.append(_log_above(t, p.N, m / p.B))
    return _clamped_exp(np.concatenate(terms)) if terms else 0.0


# -- Monte Carlo --------------------------------------------------------------------


@dataclass
class MonteCarloResult:
    trials: int
    failures: Counter = field(default_factory=Counter)
    mode: str = AssignmentMode.MULTINOMIAL.value
    stash_layout: str = StashLayout.POOLED.value

    @property
    def failed(self) -> int:
        return sum(self.failures.values())

    @property
    def rate(self) -> float:
        return self.failed / self.trials

    @property
    def stderr(self) -> float:
        return math.sqrt(max(self.rate * (1 - self.rate), 0.0) / self.trials)

    def interval(self, confidence: float = 0.95) -> tuple[float, float]:
        ci = binomtest(self.failed, self.trials).proportion_ci(confidence, method="wilson")
        return ci.low, ci.high

    def rate_of(self, cause: str) -> float:
        return self.failures.get(cause, 0) / self.trials

    def to_dict(self) -> dict:
        lo, hi = self.interval()
        return {
            "trials": self.trials, "mode": self.mode, "stash_layout": self.stash_layout,
            "rate": self.rate, "ci95": [lo, hi], "stderr": self.stderr,
            "by_cause": dict(sorted(self.failures.items())),
        }


def random_payloads(n: int, size: int, seed: Seed) -> list[bytes]:
    rng = Streams(seed).generator(Streams.DATA)
    blob = rng.bytes(n * size)
    return [blob[k * size:(k + 1) * size] for k in range(n)]


def monte_carlo_failure(
    p: ShuffleParams,
    trials: int,
    seed: int,
    mode: AssignmentMode | str = AssignmentMode.MULTINOMIAL,
    stash_layout: StashLayout | str = StashLayout.POOLED,
    payload_size: int = 8,
) -> MonteCarloResult:
    """Run the real shuffle ``trials`` times on fresh random inputs and tally failures."""
    result = MonteCarloResult(trials, Counter(), AssignmentMode(mode).value,
                              StashLayout(stash_layout).value)
    for t in range(trials):
        payloads = random_payloads(p.N, payload_size, (seed, t, 1))
        run = run_stash_shuffle(payloads, p, (seed, t), mode, stash_layout)
        if run.failure is not None:
            result.failures[run.failure.cause] += 1
    return result
