"""Distribution phase: split every input bucket across the output buckets under cap C."""

from __future__ import annotations

from collections import deque

import numpy as np

from .enclave import AssignmentMode, Enclave, StashLayout
from .errors import DrainFailure, StashOverflow
from .memory import Array, Record, UntrustedStore, data_idx, mid_idx
from .params import ShuffleParams


class Stash:
    """B FIFO queues of deferred records sharing a total capacity."""

    def __init__(self, B: int, capacity: int, per_queue: int | None = None) -> None:
        self.queues: list[deque[Record]] = [deque() for _ in range(B)]
        self.capacity = capacity
        self.per_queue = per_queue
        self.total_count = 0

    @classmethod
    def for_params(cls, p: ShuffleParams, layout: StashLayout = StashLayout.POOLED) -> Stash:
        per_queue = p.stash_per_bucket if layout is StashLayout.PER_BUCKET else None
        return cls(p.B, p.S, per_queue)

    def __len__(self) -> int:
        return self.total_count

    def __getitem__(self, j: int) -> deque[Record]:
        return self.queues[j]

    def full(self, j: int) -> bool:
        if self.total_count >= self.capacity:
            return True
        return self.per_queue is not None and len(self.queues[j]) >= self.per_queue

    def push(self, j: int, record: Record) -> None:
        self.queues[j].append(record)
        self.total_count += 1

    def pop(self, j: int) -> Record:
        self.total_count -= 1
        return self.queues[j].popleft()

    def empty(self) -> bool:
        return self.total_count == 0


def shuffle_to_buckets(
    B: int, D: int, rng: np.random.Generator,
    mode: AssignmentMode = AssignmentMode.MULTINOMIAL,
) -> np.ndarray:
    """Output bucket for each of the D slots of an input bucket."""
    if B == 1:
        return np.zeros(D, dtype=np.int64)
    if AssignmentMode(mode) is AssignmentMode.MULTINOMIAL:
        return rng.integers(0, B, size=D)
    # markers 0..D-1 are items, D..D+B-2 are separators
    order = rng.permutation(D + B - 1)
    is_item = order < D
    seps_before = np.cumsum(~is_item)
    targets = np.empty(D, dtype=np.int64)
    targets[order[is_item]] = seps_before[is_item]
    return targets


def distribute_bucket(
    stash: Stash, b: int, store: UntrustedStore, p: ShuffleParams, enclave: Enclave,
    targets: np.ndarray | None = None,
) -> None:
    """Distribute input bucket ``b`` into B chunks of exactly C records in ``mid``.

    Stashed records for a bucket take its chunk slots before fresh ones do.
    """
    if targets is None:
        targets = shuffle_to_buckets(p.B, p.D, enclave.streams.targets(b), enclave.mode)
    meter = enclave.meter
    output: list[list[Record]] = [[] for _ in range(p.B)]
    held = len(stash)

    for j in range(p.B):
        chunk, queue = output[j], stash[j]
        while len(chunk) < p.C and queue:
            chunk.append(stash.pop(j))
    meter.set(held)

    for i in range(p.D):
        record = enclave.in_cipher.decrypt(store.read(Array.IN, data_idx(b, i, p)))
        j = int(targets[i])
        if len(output[j]) < p.C:
            output[j].append(record)
        elif not stash.full(j):
            stash.push(j, record)
        else:
            raise StashOverflow(
                f"stash full while distributing input bucket {b} to output bucket {j}",
                bucket=b, target=j,
            )
        held += 1
        meter.set(held)

    dummy = Record.dummy(enclave.payload_size)
    for j in range(p.B):
        chunk = output[j]
        chunk.extend([dummy] * (p.C - len(chunk)))
        for slot, record in enumerate(chunk):
            store.write(Array.MID, mid_idx(j, slot, b, p), enclave.mid_cipher.encrypt(record))
    meter.set(len(stash))


def drain_stash(stash: Stash, store: UntrustedStore, p: ShuffleParams, enclave: Enclave) -> None:
    """Write the K-slot drain chunk of every output bucket: leftovers, then dummies."""
    dummy = Record.dummy(enclave.payload_size)
    for j in range(p.B):
        if len(stash[j]) > p.K:
            raise DrainFailure(
                f"stash queue {j} holds {len(stash[j])} records, drain fits {p.K}",
                target=j, count=len(stash[j]),
            )
        chunk = [stash.pop(j) for _ in range(len(stash[j]))]
        chunk.extend([dummy] * (p.K - len(chunk)))
        for slot, record in enumerate(chunk):
            store.write(Array.MID, mid_idx(j, slot, p.B, p), enclave.mid_cipher.encrypt(record))
    enclave.meter.set(len(stash))
