"""
Shuffle parameters and the closed-form failure bounds.

Parameters:
- N: number of real items
- B: number of buckets (input and output)
- D: items per bucket, ceil(N/B)
- C: cap on items moved from one input bucket to one output bucket
- S: total stash capacity, always a multiple of B
- K: stash-drain slots per output bucket, S/B unless given
- W: compression window in buckets; L = min(W, B) is the window actually used
- Q: extra compression queue capacity beyond W*D
- alpha: cap slack, C = D/B + alpha*sqrt(D/B)

Closed-form bounds are evaluated in natural-log space and clamped to [0, 1].
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import ConditionViolated, NoRoot, ParameterError

log = logging.getLogger(__name__)

FIELDS = ("N", "B", "D", "C", "S", "K", "W", "Q", "L", "alpha")
DERIVED = ("D", "K", "L")

# Absorbs float noise in D/B + alpha*sqrt(D/B) so that an alpha inverted from an
# integer C maps back to the same C.
_CEIL_SLACK = 1e-9


def _ceil(x: float) -> int:
    return math.ceil(x - _CEIL_SLACK)


def _cap_from_alpha(D: int, B: int, alpha: float) -> int:
    if B == 1:
        return D
    return _ceil(D / B + alpha * math.sqrt(D / B))


@dataclass(frozen=True)
class ShuffleParams:
    N: int
    B: int
    D: int
    C: int
    S: int
    K: int
    W: int
    Q: int
    L: int
    alpha: float
    adjustments: tuple[str, ...] = field(default=(), compare=False, repr=False)

    @classmethod
    def create(
        cls,
        N: int,
        B: int,
        S: int,
        W: int,
        Q: int,
        *,
        C: int | None = None,
        alpha: float | None = None,
        K: int | None = None,
    ) -> ShuffleParams:
        """Build a validated parameter vector from the free parameters.

        Either ``C`` or ``alpha`` drives the cap. When both are given they must
        agree: ``alpha`` either rounds up to ``C`` or is the value implied by it.
        ``S`` is rounded up to a multiple of ``B``.
        """
        for name, value in (("N", N), ("B", B), ("S", S), ("W", W)):
            if int(value) != value or value < 1:
                raise ParameterError(f"{name} must be a positive integer, got {value!r}")
        if int(Q) != Q or Q < 0:
            raise ParameterError(f"Q must be a non-negative integer, got {Q!r}")
        N, B, S, W, Q = int(N), int(B), int(S), int(W), int(Q)
        if N < B:
            raise ParameterError(f"need N >= B, got N={N}, B={B}")
        D = -(-N // B)
        if (B - 1) * D >= N:
            raise ParameterError(
                f"N={N}, B={B} leaves the last bucket without real items (D={D})"
            )

        adjustments: list[str] = []
        if S % B:
            rounded = -(-S // B) * B
            adjustments.append(f"S rounded up from {S} to {rounded}")
            S = rounded

        per_bucket = D / B
        if C is not None:
            if int(C) != C:
                raise ParameterError(f"C must be an integer, got {C!r}")
            C = int(C)
            if C < -(-D // B):
                raise ParameterError(f"C={C} is below ceil(D/B)={-(-D // B)}")
            implied = (C - per_bucket) / math.sqrt(per_bucket)
            if alpha is not None and not (
                math.isclose(alpha, implied, rel_tol=1e-9, abs_tol=1e-12)
                or _cap_from_alpha(D, B, alpha) == C
            ):
                raise ParameterError(f"alpha={alpha} disagrees with C={C}")
            alpha = implied if alpha is None else alpha
        elif alpha is not None:
            if alpha <= 0:
                raise ParameterError(f"alpha must be positive, got {alpha}")
            C = _cap_from_alpha(D, B, alpha)
        else:
            raise ParameterError("either C or alpha is required")

        if K is None:
            K = S // B
        elif int(K) != K or K < 1:
            raise ParameterError(f"K must be a positive integer, got {K!r}")

        L = min(W, B)
        if W > B:
            log.warning("W=%d exceeds B=%d; effective window clamped to L=%d", W, B, L)
            adjustments.append(f"L clamped to {L} (W > B)")

        return cls(N, B, D, C, S, int(K), W, Q, L, float(alpha), tuple(adjustments))

    @property
    def stash_per_bucket(self) -> int:
        return self.S // self.B

    @property
    def mid_bucket_size(self) -> int:
        """Slots of one output bucket in the intermediate array: C per source, K for the drain."""
        return self.C * self.B + self.K

    @property
    def mid_size(self) -> int:
        return self.B * self.mid_bucket_size

    @property
    def padded_size(self) -> int:
        return self.B * self.D

    @property
    def queue_capacity(self) -> int:
        return self.W * self.D + self.Q

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("adjustments")
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ShuffleParams:
        unknown = set(data) - set(FIELDS)
        if unknown:
            raise ParameterError(f"unknown parameter keys: {sorted(unknown)}")
        missing = [k for k in ("N", "B", "S", "W", "Q") if k not in data]
        if missing:
            raise ParameterError(f"missing parameter keys: {missing}")
        p = cls.create(
            data["N"], data["B"], data["S"], data["W"], data["Q"],
            C=data.get("C"), alpha=data.get("alpha"), K=data.get("K"),
        )
        for key in DERIVED:
            if key in data and data[key] != getattr(p, key):
                raise ParameterError(
                    f"{key}={data[key]} disagrees with derived value {getattr(p, key)}"
                )
        return p

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    @classmethod
    def load(cls, path: str | Path) -> ShuffleParams:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ParameterError(f"{path}: expected a flat JSON object")
        return cls.from_dict(data)


def derive_params(N: int, B: int, alpha: float, S: int, W: int, Q: int) -> ShuffleParams:
    """Derive D, C, K and L from the free parameters, with the cap set by ``alpha``."""
    p = ShuffleParams.create(N, B, S, W, Q, alpha=alpha)
    if B > 1 and p.C >= p.D:
        raise ParameterError(f"cap C={p.C} never binds for D={p.D}; lower alpha or raise N/B")
    return p


# -- side conditions --------------------------------------------------------------


def cap_exponent(p: ShuffleParams) -> float:
    """The analytic stand-in for t0: CB/D - 1."""
    return p.C * p.B / p.D - 1.0


def conditions(p: ShuffleParams) -> dict[str, bool]:
    t = cap_exponent(p)
    spb = p.S / p.B
    return {
        "K>=S/B": p.K >= spb,
        "S/B>2C": spb > 2 * p.C,
        "exp(t)<1+(tC-ln2)B/D": t > 0
        and math.exp(t) < 1 + (t * p.C - math.log(2)) * p.B / p.D,
        "W<=B": p.W <= p.B,
    }


_F1_CONDITIONS = ("K>=S/B", "S/B>2C", "exp(t)<1+(tC-ln2)B/D")
_F2_CONDITIONS = ("W<=B",)


def _check(p: ShuffleParams, names: tuple[str, ...]) -> None:
    met = conditions(p)
    failed = [n for n in names if not met[n]]
    if failed:
        raise ConditionViolated(failed)


# -- closed-form bounds -----------------------------------------------------------


def f1_closed_log(p: ShuffleParams) -> float:
    """Natural log of B^2 exp((CB/D - 1)(2C - S/B)), unclamped."""
    return 2 * math.log(p.B) + cap_exponent(p) * (2 * p.C - p.S / p.B)


def f2_closed_log(p: ShuffleParams) -> float:
    """Natural log of B (exp(-2(DW)^2/N) + exp(-2Q^2/N)), unclamped."""
    a = -2.0 * (p.D * p.W) ** 2 / p.N
    b = -2.0 * p.Q**2 / p.N
    hi, lo = max(a, b), min(a, b)
    return math.log(p.B) + hi + math.log1p(math.exp(lo - hi))


def f1_closed_bound(p: ShuffleParams, check: bool = True) -> float:
    """Closed-form bound on stash overflow or drain failure."""
    if check:
        _check(p, _F1_CONDITIONS)
    return math.exp(min(0.0, f1_closed_log(p)))


def f2_closed_bound(p: ShuffleParams, check: bool = True) -> float:
    """Closed-form bound on compression queue overflow or underflow."""
    if check:
        _check(p, _F2_CONDITIONS)
    return math.exp(min(0.0, f2_closed_log(p)))


def _mgf_gap(t: float, p: ShuffleParams) -> float:
    # ln S_Bin(t) - ln(0.5 e^{tC}); negative where the stash MGF recursion contracts
    return p.D * math.log1p(math.expm1(t) / p.B) + math.log(2) - t * p.C


def t_zero(p: ShuffleParams, t_max: float = 64.0) -> float:
    """Largest root of [1 + (e^t - 1)/B]^D = 0.5 e^{tC}.

    The equation has no root at all unless the gap dips below zero somewhere on
    (0, t_max); the gap is convex in t so its minimum is found first and the
    root is bracketed to its right.
    """
    if p.C * p.B <= p.D:
        raise NoRoot(f"CB/D = {p.C * p.B / p.D:.6g} <= 1")
    res = minimize_scalar(_mgf_gap, bounds=(0.0, t_max), args=(p,), method="bounded",
                          options={"xatol": 1e-12})
    t_min = float(res.x)
    if _mgf_gap(t_min, p) >= 0:
        raise NoRoot(f"S_Bin(t) >= 0.5 e^(tC) for all t in (0, {t_max}]")
    if _mgf_gap(t_max, p) <= 0:
        raise NoRoot(f"root lies beyond t_max={t_max}")
    return brentq(_mgf_gap, t_min, t_max, args=(p,), xtol=1e-14, rtol=1e-14)


def corollary_preset(N: int, eps: float) -> ShuffleParams:
    """Asymptotic parameter choice with N^(1/2+o(1)) private memory.

    B is floored, every other real-valued quantity is rounded up; C is raised to
    ceil(D/B) if flooring B pushed D/B above (1+eps) N^(2 eps).
    """
    if not 0 < eps < 1:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")
    B = math.floor(N ** (0.5 - eps))
    if B < 1:
        raise ParameterError(f"N={N} too small for eps={eps}: B rounds to 0")
    D = -(-N // B)
    C = max(_ceil((1 + eps) * N ** (2 * eps)), -(-D // B))
    S = _ceil(N ** (0.5 + 2 * eps))
    Q = _ceil(N ** (0.5 + eps))
    return ShuffleParams.create(N, B, S, 1, Q, C=C)


# -- report -----------------------------------------------------------------------


def _log2(x: float) -> float:
    return math.log2(x) if x > 0 else float("-inf")


@dataclass
class SecurityReport:
    f1_closed: float
    f2_closed: float
    f1_exact: float
    f2_exact: float
    epsilon_closed: float
    epsilon_exact: float
    log2_epsilon_exact: float
    log2_epsilon_closed: float
    conditions: dict[str, bool]
    f1_conditions_met: bool
    f2_conditions_met: bool
    vacuous: dict[str, bool]

    @property
    def conditions_met(self) -> list[tuple[str, bool]]:
        return list(self.conditions.items())

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and math.isinf(v):
                d[k] = "-inf" if v < 0 else "inf"
        return d


def theorem_distance(p: ShuffleParams) -> SecurityReport:
    """Distance-from-uniform report: closed-form and exact flavours side by side.

    Closed forms are evaluated even when their side conditions fail; the
    per-flavour flags say whether the value is a proven bound.
    """
    from .planner import compression_tail_exact, stash_tail_exact

    cond = conditions(p)
    f1c_log, f2c_log = f1_closed_log(p), f2_closed_log(p)
    f1c = math.exp(min(0.0, f1c_log))
    f2c = math.exp(min(0.0, f2c_log))
    f1e = stash_tail_exact(p)
    # exact compression tail is defined over the effective window
    f2e = compression_tail_exact(p, window=p.L)
    eps_c = min(1.0, f1c + f2c)
    eps_e = min(1.0, f1e + f2e)
    log2_closed = min(0.0, float(np.logaddexp(f1c_log, f2c_log))) / math.log(2)
    return SecurityReport(
        f1_closed=f1c,
        f2_closed=f2c,
        f1_exact=f1e,
        f2_exact=f2e,
        epsilon_closed=eps_c,
        epsilon_exact=eps_e,
        log2_epsilon_exact=_log2(eps_e),
        log2_epsilon_closed=log2_closed,
        conditions=cond,
        f1_conditions_met=all(cond[n] for n in _F1_CONDITIONS),
        f2_conditions_met=all(cond[n] for n in _F2_CONDITIONS),
        vacuous={"f1_closed": f1c_log >= 0, "f2_closed": f2c_log >= 0},
    )


TABLE1 = (
    # (N, B, C, W, S, Q, reported log2 epsilon)
    (10_000_000, 1_000, 25, 2, 40_000, 18_000, -80.1),
    (50_000_000, 2_000, 30, 2, 86_000, 40_000, -81.8),
    (100_000_000, 3_000, 30, 2, 117_000, 57_000, -81.9),
    (200_000_000, 4_400, 24, 2, 170_000, 73_000, -64.5),
)


def table1_params() -> list[tuple[ShuffleParams, float]]:
    return [
        (ShuffleParams.create(N, B, S, W, Q, C=C), ref)
        for N, B, C, W, S, Q, ref in TABLE1
    ]
