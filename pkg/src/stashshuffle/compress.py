"""Compression phase: sliding-window import of intermediate buckets, fixed-rate export."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Sequence, TypeVar

import numpy as np

from .enclave import Enclave
from .errors import QueueOverflow, QueueUnderflow
from .memory import Array, Record, UntrustedStore, mid_idx
from .params import ShuffleParams

T = TypeVar("T")

IMPORT = "import"
DRAIN = "drain"


def compress_schedule(B: int, L: int) -> Iterator[tuple[str, int]]:
    """Yield ("import", bucket) and ("drain", drain_number) steps in execution order.

    L imports fill the window, then each further import is preceded by a drain,
    and L trailing drains flush the window. There are exactly B drains.
    """
    drains = 0
    for b in range(L):
        yield IMPORT, b
    for b in range(L, B):
        yield DRAIN, drains
        drains += 1
        yield IMPORT, b
    for _ in range(L):
        yield DRAIN, drains
        drains += 1


def shuffle_bucket(items: Sequence[T], rng: np.random.Generator) -> list[T]:
    return [items[k] for k in rng.permutation(len(items))]


@dataclass
class CompressQueue:
    capacity: int
    items: deque[Record] = field(default_factory=deque)
    exported: int = 0

    def __len__(self) -> int:
        return len(self.items)


def import_intermediate(
    b: int, store: UntrustedStore, q: CompressQueue, p: ShuffleParams, enclave: Enclave
) -> None:
    """Load the C*B+K slots of intermediate bucket ``b``, shuffle, enqueue the real records.

    Dummies are dropped before the permutation is drawn: a uniform shuffle
    restricted to the real records is again uniform, and drawing it over the
    reals alone lets an idealized shuffle reproduce it from the same stream.
    """
    base = mid_idx(b, 0, 0, p)
    ciphertexts = [store.read(Array.MID, base + s) for s in range(p.mid_bucket_size)]
    enclave.meter.set(len(q) + len(ciphertexts))
    reals = []
    for c in ciphertexts:
        record = enclave.mid_cipher.decrypt(c)
        if not record.is_dummy:
            reals.append(record)
    reals = shuffle_bucket(reals, enclave.streams.bucket_shuffle(b))
    if len(q) + len(reals) > q.capacity:
        raise QueueOverflow(
            f"importing bucket {b} brings the queue to {len(q) + len(reals)} > {q.capacity}",
            bucket=b, size=len(q) + len(reals),
        )
    q.items.extend(reals)
    enclave.meter.set(len(q))


def drain_queue(
    q: CompressQueue, store: UntrustedStore, p: ShuffleParams, enclave: Enclave,
    final: bool = False,
) -> None:
    """Export D records to the next out slots; the final drain exports the remainder."""
    count = p.N - q.exported if final else p.D
    if len(q) < count:
        raise QueueUnderflow(
            f"drain after {q.exported} exported records needs {count}, queue holds {len(q)}",
            exported=q.exported, size=len(q),
        )
    for k in range(count):
        record = q.items.popleft()
        store.write(Array.OUT, q.exported + k, enclave.out_cipher.encrypt(record))
    q.exported += count
    enclave.meter.set(len(q))


def compress(store: UntrustedStore, p: ShuffleParams, enclave: Enclave) -> CompressQueue:
    q = CompressQueue(p.queue_capacity)
    for step, arg in compress_schedule(p.B, p.L):
        if step == IMPORT:
            import_intermediate(arg, store, q, p, enclave)
        else:
            drain_queue(q, store, p, enclave, final=arg == p.B - 1)
    assert not q.items, "records left in the queue after the final drain"
    return q
