"""Trusted-side context of one shuffle run: keys, named random streams, memory accounting."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .memory import RecordCipher

Seed = int | Sequence[int] | None


class AssignmentMode(str, Enum):
    """How ShuffleToBuckets picks an output bucket for each item of an input bucket."""

    # uniform arrangement of D items and B-1 separators
    SEPARATORS = "separators"
    # independent uniform bucket per item
    MULTINOMIAL = "multinomial"


class StashLayout(str, Enum):
    # one shared capacity S across all B queues
    POOLED = "pooled"
    # every queue capped at S/B
    PER_BUCKET = "per_bucket"


class Streams:
    """Independent generators derived from one master seed.

    Each (domain, index) pair gets its own stream so that two algorithms with
    different control flow still consume identical randomness for, say, the
    targets of input bucket 3.
    """

    TARGETS = 0
    BUCKET_SHUFFLE = 1
    KEYS = 2
    DATA = 3

    def __init__(self, seed: Seed = None) -> None:
        if seed is None:
            seed = np.random.SeedSequence().entropy
        self.entropy = seed

    def generator(self, domain: int, index: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(self.entropy, spawn_key=(domain, index))
        return np.random.Generator(np.random.PCG64(ss))

    def targets(self, b: int) -> np.random.Generator:
        return self.generator(self.TARGETS, b)

    def bucket_shuffle(self, j: int) -> np.random.Generator:
        return self.generator(self.BUCKET_SHUFFLE, j)

    def key(self, index: int) -> bytes:
        return self.generator(self.KEYS, index).bytes(16)


@dataclass
class MemoryMeter:
    """Peak count of records held in private memory, per phase."""

    current: int = 0
    peaks: dict[str, int] = field(default_factory=dict)
    phase: str = "distribution"

    def set(self, count: int) -> None:
        self.current = count
        if count > self.peaks.get(self.phase, 0):
            self.peaks[self.phase] = count


@dataclass
class Enclave:
    """What lives in trusted memory for the length of one run."""

    payload_size: int
    streams: Streams
    mode: AssignmentMode = AssignmentMode.MULTINOMIAL
    stash_layout: StashLayout = StashLayout.POOLED
    meter: MemoryMeter = field(default_factory=MemoryMeter)

    def __post_init__(self) -> None:
        self.mode = AssignmentMode(self.mode)
        self.stash_layout = StashLayout(self.stash_layout)
        # separate keys and nonce domains per phase
        self.in_cipher = RecordCipher(self.streams.key(0), self.payload_size, domain=0)
        self.mid_cipher = RecordCipher(self.streams.key(1), self.payload_size, domain=1)
        self.out_cipher = RecordCipher(self.streams.key(2), self.payload_size, domain=2)
