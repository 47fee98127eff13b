"""Verification suites run by ``stashshuffle verify`` and by the acceptance tests."""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.stats import chisquare

from .enclave import AssignmentMode, StashLayout
from .memory import trace_fingerprint
from .oracle import buckets_shuffle, coupled_run
from .params import ShuffleParams, theorem_distance
from .planner import compression_tail_exact, monte_carlo_failure, random_payloads, stash_tail_exact
from .shuffle import run_stash_shuffle

SUITES = ("uniform", "oblivious", "couple", "montecarlo")


def uniform_params() -> ShuffleParams:
    # N=5 in two buckets of three (one padding slot); failure is impossible here
    return ShuffleParams.create(5, 2, 10, 2, 0, C=2)


def adversarial_stash_params() -> ShuffleParams:
    # per-queue stash tail ~0.135 under the multinomial model
    return ShuffleParams.create(60, 2, 8, 2, 0, C=16)


def adversarial_queue_params() -> ShuffleParams:
    # compression queue overflow ~0.109, stash failure ~1e-7
    return ShuffleParams.create(200, 4, 4, 3, 7, C=30)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    lines: list[str] = field(default_factory=list)
    data: dict[str, Any] = field(default_factory=dict)

    def report(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return "\n".join([f"[{status}] {self.name}", *("  " + ln for ln in self.lines)])


def permutation_chisquare(outputs: Counter, n: int) -> tuple[float, float]:
    """Chi-square of observed permutation counts against the uniform over all n! cells."""
    cells = list(itertools.permutations(range(n)))
    observed = np.array([outputs.get(c, 0) for c in cells], dtype=float)
    stat, pvalue = chisquare(observed)
    return float(stat), float(pvalue)


def uniform(
    trials: int = 120_000, seed: int = 0, p: ShuffleParams | None = None,
    mode: AssignmentMode | str = AssignmentMode.MULTINOMIAL, alpha: float = 0.001,
) -> SuiteResult:
    """Output permutations of the Stash Shuffle and of the Buckets Shuffle are uniform."""
    p = p or uniform_params()
    if math.factorial(p.N) > 5040:
        raise ValueError(f"N={p.N} has too many permutations for a chi-square test")
    eps = theorem_distance(p).epsilon_exact
    payloads = [k.to_bytes(1, "little") for k in range(p.N)]
    real, ideal, failed = Counter(), Counter(), 0
    for t in range(trials):
        run = run_stash_shuffle(payloads, p, (seed, t), mode)
        if run.ok:
            real[tuple(x[0] for x in run.output)] += 1
        else:
            failed += 1
        ideal[tuple(x[0] for x in buckets_shuffle(payloads, p.B, (seed, t, 7), mode))] += 1
    stat_r, p_r = permutation_chisquare(real, p.N)
    stat_i, p_i = permutation_chisquare(ideal, p.N)
    passed = eps < 1e-6 and p_r > alpha and p_i > alpha
    return SuiteResult("uniform", passed, [
        f"params N={p.N} B={p.B} C={p.C} S={p.S} W={p.W} Q={p.Q} mode={AssignmentMode(mode).value}",
        f"planner epsilon {eps:.3e} (must be < 1e-6)",
        f"stash shuffle: {trials - failed} successes, chi2={stat_r:.2f}, p={p_r:.4f}",
        f"buckets shuffle: chi2={stat_i:.2f}, p={p_i:.4f}",
    ], {"epsilon": eps, "p_stash": p_r, "p_buckets": p_i, "failed": failed})


def oblivious(
    runs: int = 100, seed: int = 0, p: ShuffleParams | None = None,
    mode: AssignmentMode | str = AssignmentMode.MULTINOMIAL,
) -> SuiteResult:
    """One trace across distinct inputs; every failed trace is a prefix of it."""
    p = p or adversarial_stash_params()
    fingerprints: Counter = Counter()
    success_trace = None
    failed_traces = []
    for t in range(runs):
        payloads = random_payloads(p.N, 8, (seed, t, 1))
        run = run_stash_shuffle(payloads, p, (seed, t), mode)
        if run.ok:
            fingerprints[trace_fingerprint(run.store)] += 1
            success_trace = success_trace or run.store.trace
        else:
            failed_traces.append(run.store.trace)
    non_prefix = 0
    if success_trace is not None:
        non_prefix = sum(tr != success_trace[:len(tr)] for tr in failed_traces)
    passed = len(fingerprints) == 1 and non_prefix == 0
    return SuiteResult("oblivious", passed, [
        f"{sum(fingerprints.values())} successful runs, {len(fingerprints)} distinct fingerprint(s)",
        f"{len(failed_traces)} failed runs, {non_prefix} not a prefix of the success trace",
    ], {"fingerprints": len(fingerprints), "failed": len(failed_traces), "non_prefix": non_prefix})


def couple(
    seeds: int = 500, seed: int = 0, p: ShuffleParams | None = None,
    mode: AssignmentMode | str = AssignmentMode.MULTINOMIAL,
) -> SuiteResult:
    """Every successful Stash Shuffle equals the Buckets Shuffle on the same seed."""
    p = p or adversarial_stash_params()
    payloads = random_payloads(p.N, 8, (seed, 1))
    successes = mismatches = 0
    for t in range(seeds):
        cr = coupled_run(payloads, p, (seed, t), mode)
        if cr.real.ok:
            successes += 1
            mismatches += not cr.agree
    return SuiteResult("couple", mismatches == 0, [
        f"{seeds} seeds, {successes} successes, {mismatches} mismatches",
    ], {"successes": successes, "mismatches": mismatches})


def montecarlo(
    trials: int = 10_000, seed: int = 0, params: list[ShuffleParams] | None = None,
    stash_layout: StashLayout | str = StashLayout.PER_BUCKET, sigmas: float = 3.0,
    compare_modes: bool = True,
) -> SuiteResult:
    """Observed failure rates (multinomial targets) against the exact planner."""
    params = params or [adversarial_stash_params(), adversarial_queue_params()]
    lines, data, passed = [], [], True
    for p in params:
        predicted = stash_tail_exact(p) + compression_tail_exact(p, window=p.L)
        mc = monte_carlo_failure(p, trials, seed, AssignmentMode.MULTINOMIAL, stash_layout)
        # standard error under the predicted rate, so a zero observed count is still testable
        se = math.sqrt(predicted * (1 - predicted) / trials)
        z = (mc.rate - predicted) / se if se > 0 else (0.0 if mc.rate == predicted else math.inf)
        ok = abs(z) <= sigmas
        passed &= ok
        lo, hi = mc.interval()
        lines.append(
            f"N={p.N} B={p.B} C={p.C} S={p.S} W={p.W} Q={p.Q}: predicted {predicted:.4f}, "
            f"multinomial {mc.rate:.4f} [{lo:.4f}, {hi:.4f}] ({z:+.2f} se) {dict(mc.failures)}"
        )
        row = {"params": p.to_dict(), "predicted": predicted, "multinomial": mc.to_dict(), "z": z}
        if compare_modes:
            sep = monte_carlo_failure(p, trials, seed, AssignmentMode.SEPARATORS, stash_layout)
            lines.append(f"  separators {sep.rate:.4f} {dict(sep.failures)} (informational)")
            row["separators"] = sep.to_dict()
        data.append(row)
    return SuiteResult("montecarlo", passed, lines, {"rows": data})


def run_suite(name: str, trials: int | None = None, seed: int = 0,
              p: ShuffleParams | None = None) -> SuiteResult:
    kwargs: dict[str, Any] = {"seed": seed}
    if name == "montecarlo":
        if p is not None:
            kwargs["params"] = [p]
        if trials is not None:
            kwargs["trials"] = trials
        return montecarlo(**kwargs)
    fn = {"uniform": uniform, "oblivious": oblivious, "couple": couple}[name]
    if p is not None:
        kwargs["p"] = p
    if trials is not None:
        kwargs[{"uniform": "trials", "oblivious": "runs", "couple": "seeds"}[name]] = trials
    return fn(**kwargs)
