"""Reference shuffles on cleartext, sharing randomness with the real one through Streams."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence, TypeVar

from .compress import DRAIN, compress_schedule, shuffle_bucket
from .distribute import shuffle_to_buckets
from .enclave import AssignmentMode, Seed, StashLayout, Streams
from .errors import QueueOverflow, QueueUnderflow
from .params import ShuffleParams
from .shuffle import ShuffleRun, run_stash_shuffle

T = TypeVar("T")


def ideal_distribute(
    items: Sequence[T], B: int, streams: Streams,
    mode: AssignmentMode | str = AssignmentMode.MULTINOMIAL,
) -> list[list[T]]:
    """Unbounded distribution: every item lands in its target bucket, in arrival order."""
    N = len(items)
    D = -(-N // B)
    mid: list[list[T]] = [[] for _ in range(B)]
    for b in range(B):
        targets = shuffle_to_buckets(B, D, streams.targets(b), mode)
        # slots past N are ingestion padding and carry nothing here
        for i in range(min(D, N - b * D)):
            mid[int(targets[i])].append(items[b * D + i])
    return mid


def buckets_shuffle(
    items: Sequence[T], B: int, seed: Seed = None,
    mode: AssignmentMode | str = AssignmentMode.MULTINOMIAL,
) -> list[T]:
    """Never-failing shuffle: ideal distribution, then a uniform shuffle per output bucket."""
    streams = Streams(seed)
    mid = ideal_distribute(items, B, streams, mode)
    out: list[T] = []
    for j, bucket in enumerate(mid):
        out.extend(shuffle_bucket(bucket, streams.bucket_shuffle(j)))
    return out


def hybrid_shuffle(
    items: Sequence[T], p: ShuffleParams, seed: Seed = None,
    mode: AssignmentMode | str = AssignmentMode.MULTINOMIAL,
) -> list[T]:
    """Ideal distribution followed by the bounded, windowed compression.

    Raises QueueOverflow or QueueUnderflow exactly where the real compression would.
    """
    if len(items) != p.N:
        raise ValueError(f"got {len(items)} items for N={p.N}")
    streams = Streams(seed)
    mid = ideal_distribute(items, p.B, streams, mode)
    queue: deque[T] = deque()
    out: list[T] = []
    for step, arg in compress_schedule(p.B, p.L):
        if step == DRAIN:
            count = p.N - len(out) if arg == p.B - 1 else p.D
            if len(queue) < count:
                raise QueueUnderflow(
                    f"drain after {len(out)} exported items needs {count}, queue holds {len(queue)}",
                    exported=len(out), size=len(queue),
                )
            out.extend(queue.popleft() for _ in range(count))
        else:
            reals = shuffle_bucket(mid[arg], streams.bucket_shuffle(arg))
            if len(queue) + len(reals) > p.queue_capacity:
                raise QueueOverflow(
                    f"importing bucket {arg} brings the queue to {len(queue) + len(reals)}",
                    bucket=arg, size=len(queue) + len(reals),
                )
            queue.extend(reals)
    return out


@dataclass
class CoupledRun:
    ideal: list[bytes]
    real: ShuffleRun

    @property
    def agree(self) -> bool:
        """True when the real run failed or produced exactly the ideal output."""
        return self.real.output is None or self.real.output == self.ideal


def coupled_run(
    payloads: Sequence[bytes], p: ShuffleParams, seed: Seed,
    mode: AssignmentMode | str = AssignmentMode.MULTINOMIAL,
    stash_layout: StashLayout | str = StashLayout.POOLED,
) -> CoupledRun:
    """Run the Buckets Shuffle and the Stash Shuffle on one seed."""
    if seed is None:
        raise ValueError("coupling needs an explicit seed")
    ideal = buckets_shuffle(list(payloads), p.B, seed, mode)
    real = run_stash_shuffle(payloads, p, seed, mode, stash_layout)
    return CoupledRun(ideal, real)
