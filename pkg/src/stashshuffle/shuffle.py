"""End-to-end Stash Shuffle over an in-memory UntrustedStore."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .compress import compress
from .distribute import Stash, distribute_bucket, drain_stash
from .enclave import AssignmentMode, Enclave, Seed, StashLayout, Streams
from .errors import IntegrityError, ShuffleFailure
from .memory import Record, UntrustedStore
from .params import ShuffleParams


def distribution_memory_bound(p: ShuffleParams) -> int:
    return p.D + p.S + p.B * p.C


def compression_memory_bound(p: ShuffleParams) -> int:
    return p.mid_bucket_size + p.D * (p.W - 1) + p.Q + p.D


@dataclass
class ShuffleRun:
    params: ShuffleParams
    store: UntrustedStore
    output: list[bytes] | None = None
    failure: ShuffleFailure | None = None
    peaks: dict[str, int] = field(default_factory=dict)
    # "distribution", "compression" or "done"
    phase: str = "distribution"

    @property
    def ok(self) -> bool:
        return self.failure is None


def ingest(payloads: Sequence[bytes], p: ShuffleParams, enclave: Enclave) -> UntrustedStore:
    """Encrypt the input into ``in``, padding the last bucket with dummies up to B*D."""
    if len(payloads) != p.N:
        raise ValueError(f"got {len(payloads)} records for N={p.N}")
    store = UntrustedStore.allocate(p)
    enc = enclave.in_cipher.encrypt
    dummy = Record.dummy(enclave.payload_size)
    store.in_arr[:] = [enc(Record(x)) for x in payloads] + [
        enc(dummy) for _ in range(p.padded_size - p.N)
    ]
    return store


def run_stash_shuffle(
    payloads: Sequence[bytes],
    p: ShuffleParams,
    seed: Seed = None,
    mode: AssignmentMode | str = AssignmentMode.MULTINOMIAL,
    stash_layout: StashLayout | str = StashLayout.POOLED,
    check_memory: bool = True,
) -> ShuffleRun:
    """Shuffle ``payloads``; failures are returned in the run, never raised."""
    payload_size = len(payloads[0]) if payloads else 1
    enclave = Enclave(payload_size, Streams(seed), mode, stash_layout)
    store = ingest(payloads, p, enclave)
    run = ShuffleRun(p, store)
    try:
        stash = Stash.for_params(p, enclave.stash_layout)
        for b in range(p.B):
            distribute_bucket(stash, b, store, p, enclave)
        drain_stash(stash, store, p, enclave)
        run.phase = "compression"
        enclave.meter.phase = "compression"
        compress(store, p, enclave)
        run.phase = "done"
    except ShuffleFailure as exc:
        run.failure = exc
    run.peaks = dict(enclave.meter.peaks)
    if check_memory:
        assert run.peaks.get("distribution", 0) <= distribution_memory_bound(p), run.peaks
        assert run.peaks.get("compression", 0) <= compression_memory_bound(p), run.peaks
    if run.ok:
        records = [enclave.out_cipher.decrypt(c) for c in store.out_arr]
        if any(r.is_dummy for r in records):
            raise IntegrityError("dummy record reached the output")
        run.output = [r.payload for r in records]
    return run


def stash_shuffle(
    payloads: Sequence[bytes],
    p: ShuffleParams,
    seed: Seed = None,
    mode: AssignmentMode | str = AssignmentMode.MULTINOMIAL,
    stash_layout: StashLayout | str = StashLayout.POOLED,
) -> list[bytes]:
    run = run_stash_shuffle(payloads, p, seed, mode, stash_layout)
    if run.failure is not None:
        raise run.failure
    return run.output
