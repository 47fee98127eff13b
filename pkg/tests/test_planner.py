import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import payloads_for, random_condition_params
from stashshuffle.distribute import Stash, distribute_bucket
from stashshuffle.enclave import AssignmentMode, Enclave, StashLayout, Streams
from stashshuffle.params import ShuffleParams, table1_params, theorem_distance
from stashshuffle.planner import (
    NUMERIC_TOL,
    compression_schedule_tail,
    compression_tail_exact,
    monte_carlo_failure,
    stash_distributions,
    stash_tail_exact,
)
from stashshuffle.shuffle import ingest


# -- brute-force oracles in exact arithmetic ------------------------------------------


def binom_pmf(n, pr, k):
    return math.comb(n, k) * pr**k * (1 - pr) ** (n - k)


def stash_queue_failure(D, B, C, cap, K):
    """P[one queue ever exceeds cap, or ends above K], enumerating every arrival sequence."""
    pr = Fraction(1, B)
    pmf = [binom_pmf(D, pr, a) for a in range(D + 1)]
    total = Fraction(0)
    for arrivals in itertools.product(range(D + 1), repeat=B):
        x, failed = 0, False
        for a in arrivals:
            x = max(0, x + a - C)
            if x > cap:
                failed = True
                break
        if failed or x > K:
            total += math.prod(pmf[a] for a in arrivals)
    return total


def stash_joint_failure_b2(D, C, cap, K):
    """Two buckets, every joint target assignment: P[queue 0 fails], P[either fails]."""
    q0 = either = Fraction(0)
    weight = Fraction(1, 2 ** (2 * D))
    for targets in itertools.product(range(2), repeat=2 * D):
        xs, failed = [0, 0], [False, False]
        for b in range(2):
            row = targets[b * D:(b + 1) * D]
            for j in range(2):
                xs[j] = max(0, xs[j] + row.count(j) - C)
                failed[j] |= xs[j] > cap
        failed = [f or x > K for f, x in zip(failed, xs)]
        q0 += weight * failed[0]
        either += weight * any(failed)
    return q0, either


def compression_sum(N, B, D, W, Q):
    total = Fraction(0)
    for i in range(W, B + 1):
        pr = Fraction(i, B)
        total += sum(binom_pmf(N, pr, y) for y in range(N + 1)
                     if y < D * (i - W) or y > D * i + Q)
    return total


def compression_schedule_failure(N, B, D, L, capacity):
    """Exact P[windowed compression fails], over every multinomial bucket-count vector."""
    total = Fraction(0)
    for counts in itertools.product(range(N + 1), repeat=B - 1):
        last = N - sum(counts)
        if last < 0:
            continue
        counts = (*counts, last)
        coef = math.factorial(N) // math.prod(math.factorial(c) for c in counts)
        queue, exported, failed = 0, 0, False
        steps = [("i", b) for b in range(L)]
        for b in range(L, B):
            steps += [("d", None), ("i", b)]
        steps += [("d", None)] * L
        drains = 0
        for kind, b in steps:
            if kind == "i":
                queue += counts[b]
                if queue > capacity:
                    failed = True
                    break
            else:
                need = N - exported if drains == B - 1 else D
                if queue < need:
                    failed = True
                    break
                queue -= need
                exported += need
                drains += 1
        if failed:
            total += Fraction(coef, B**N)
    return total


def same(a, b):
    return a == pytest.approx(float(b), rel=1e-10, abs=1e-300)


# -- stash -----------------------------------------------------------------------------


@pytest.mark.parametrize("N, B, C, S, K", [
    (8, 2, 3, 2, None), (12, 2, 4, 4, None), (12, 3, 2, 6, 1), (16, 4, 2, 4, None),
    (24, 4, 3, 8, 1), (12, 2, 6, 2, None), (6, 3, 1, 3, None),
])
def test_stash_matches_enumeration(N, B, C, S, K):
    p = ShuffleParams.create(N, B, S, 1, N, C=C, K=K)
    per_queue = stash_queue_failure(p.D, p.B, p.C, p.stash_per_bucket, p.K)
    assert same(stash_tail_exact(p), min(1, B * per_queue))


@pytest.mark.parametrize("D, C, spb", [(3, 2, 1), (4, 2, 1), (5, 3, 1), (6, 3, 2), (6, 4, 1)])
def test_stash_union_against_joint_enumeration(D, C, spb):
    p = ShuffleParams.create(2 * D, 2, 2 * spb, 1, 2 * D, C=C)
    q0, either = stash_joint_failure_b2(D, C, p.stash_per_bucket, p.K)
    exact = stash_tail_exact(p)
    # marginal of one queue is exactly the DP; the union bound dominates the joint event
    assert same(exact / 2, q0)
    assert float(either) <= exact + 1e-15


def test_cap_at_d_never_stashes():
    assert stash_tail_exact(ShuffleParams.create(40, 4, 4, 1, 0, C=10)) == 0.0


def test_mass_conserved_every_step():
    for p, _ in table1_params():
        for dist in stash_distributions(p, check=False):
            assert abs(dist.total() - 1.0) <= NUMERIC_TOL


def test_stash_monotone_in_s():
    vals = [stash_tail_exact(ShuffleParams.create(100_000, 100, s * 100, 1, 0, C=14))
            for s in range(1, 12)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[0] > vals[-1]


def test_occupancy_law_against_simulation():
    # queue 0 after each input bucket, real distribution code; the stash is large
    # enough that no queue can overflow, so every run reaches every step
    p = ShuffleParams.create(30, 3, 90, 1, 30, C=4)
    expected = [d.pmf for d in stash_distributions(p)]
    trials = 1500
    observed = np.zeros((p.B, p.stash_per_bucket + 1))
    for t in range(trials):
        enclave = Enclave(8, Streams((11, t)), stash_layout=StashLayout.PER_BUCKET)
        store = ingest(payloads_for(p.N), p, enclave)
        stash = Stash.for_params(p, StashLayout.PER_BUCKET)
        for b in range(p.B):
            distribute_bucket(stash, b, store, p, enclave)
            observed[b, len(stash[0])] += 1
    for b in range(p.B):
        # pool the sparse upper tail into one cell
        exp = np.append(expected[b][:3], 1 - expected[b][:3].sum()) * trials
        obs = np.append(observed[b][:3], observed[b][3:].sum())
        assert chisquare(obs, exp).pvalue > 1e-3


# -- compression -----------------------------------------------------------------------


@pytest.mark.parametrize("N, B, W, Q", [(8, 4, 1, 2), (8, 4, 2, 0), (9, 3, 1, 1), (6, 2, 2, 0)])
def test_compression_matches_enumeration(N, B, W, Q):
    p = ShuffleParams.create(N, B, B, W, Q, C=-(-N // B))
    assert same(compression_tail_exact(p), min(1, compression_sum(N, B, p.D, W, Q)))


@pytest.mark.parametrize("N, B, W, Q", [(8, 4, 1, 2), (8, 4, 2, 0), (9, 3, 2, 1), (8, 2, 1, 3)])
def test_schedule_bound_dominates_exact_failure(N, B, W, Q):
    p = ShuffleParams.create(N, B, B, W, Q, C=-(-N // B))
    exact = compression_schedule_failure(N, B, p.D, p.L, p.queue_capacity)
    assert float(exact) <= compression_schedule_tail(p) + 1e-15


def test_full_window_and_hedge_never_fails():
    p = ShuffleParams.create(40, 4, 4, 4, 40, C=10)
    assert compression_tail_exact(p) == 0.0
    assert compression_schedule_tail(p) == 0.0


def test_compression_monotone_in_q():
    vals = [compression_tail_exact(ShuffleParams.create(100_000, 100, 200, 2, q, C=14))
            for q in range(0, 3000, 250)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


# -- exact against closed forms --------------------------------------------------------


@pytest.mark.parametrize("p, _", table1_params())
def test_exact_below_closed_on_table_rows(p, _):
    r = theorem_distance(p)
    assert r.f2_exact <= r.f2_closed
    if r.f1_conditions_met:
        assert r.f1_exact <= r.f1_closed


def test_exact_below_closed_on_random_vectors():
    for p in random_condition_params(50):
        r = theorem_distance(p)
        assert r.f1_exact <= r.f1_closed and r.f2_exact <= r.f2_closed, p


# -- Monte Carlo -----------------------------------------------------------------------


@pytest.mark.parametrize("mode", list(AssignmentMode))
def test_monte_carlo_no_failures_when_impossible(mode):
    p = ShuffleParams.create(40, 4, 400, 4, 40, C=10)
    mc = monte_carlo_failure(p, 30, 0, mode)
    assert mc.failed == 0 and mc.rate == 0.0
    assert mc.to_dict()["ci95"][0] == 0.0


def test_monte_carlo_tallies_causes():
    p = ShuffleParams.create(16, 4, 4, 1, 0, C=1)
    mc = monte_carlo_failure(p, 40, 0)
    assert mc.failed > 0
    assert sum(mc.rate_of(c) for c in mc.failures) == pytest.approx(mc.rate)
