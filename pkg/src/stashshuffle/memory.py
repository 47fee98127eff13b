"""Trusted/untrusted boundary: records, ciphertexts, untrusted arrays and the access trace."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import IO, Iterable, NamedTuple

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import IntegrityError, ParameterError
from .params import ShuffleParams

DEFAULT_PAYLOAD_SIZE = 64

NONCE_SIZE = 12
TAG_SIZE = 16
# nonce + dummy flag byte + GCM tag
ENC_OVERHEAD = NONCE_SIZE + 1 + TAG_SIZE


@dataclass(frozen=True)
class Record:
    payload: bytes
    is_dummy: bool = False

    @classmethod
    def dummy(cls, size: int) -> Record:
        return cls(bytes(size), True)


class RecordCipher:
    """Randomized AES-GCM over fixed-size records.

    Nonces are a 4-byte domain tag followed by a 64-bit counter, so every call
    under one key gets a fresh nonce and ciphertexts of equal records differ.
    """

    def __init__(self, key: bytes, payload_size: int, domain: int = 0) -> None:
        if payload_size < 1:
            raise ParameterError(f"payload size must be positive, got {payload_size}")
        self._aead = AESGCM(key)
        self.payload_size = payload_size
        self._prefix = struct.pack("<I", domain)
        self._counter = 0

    @property
    def ciphertext_size(self) -> int:
        return self.payload_size + ENC_OVERHEAD

    def encrypt(self, record: Record) -> bytes:
        if len(record.payload) != self.payload_size:
            raise ParameterError(
                f"payload is {len(record.payload)} bytes, expected {self.payload_size}"
            )
        nonce = self._prefix + struct.pack("<Q", self._counter)
        self._counter += 1
        flag = b"\x01" if record.is_dummy else b"\x00"
        return nonce + self._aead.encrypt(nonce, flag + record.payload, None)

    def decrypt(self, ciphertext: bytes) -> Record:
        if len(ciphertext) != self.ciphertext_size:
            raise IntegrityError(f"ciphertext has length {len(ciphertext)}")
        nonce = ciphertext[:NONCE_SIZE]
        try:
            plain = self._aead.decrypt(nonce, ciphertext[NONCE_SIZE:], None)
        except InvalidTag:
            raise IntegrityError("ciphertext failed authentication") from None
        if plain[0] > 1:
            raise IntegrityError("corrupt dummy flag")
        return Record(plain[1:], plain[0] == 1)


def encrypt(record: Record, cipher: RecordCipher) -> bytes:
    return cipher.encrypt(record)


def decrypt(ciphertext: bytes, cipher: RecordCipher) -> Record:
    return cipher.decrypt(ciphertext)


# -- layout -----------------------------------------------------------------------


def data_idx(b: int, i: int, p: ShuffleParams) -> int:
    if not (0 <= b < p.B and 0 <= i < p.D):
        raise IndexError(f"data_idx({b}, {i}) outside B={p.B}, D={p.D}")
    return b * p.D + i


def mid_idx(j: int, slot: int, source: int, p: ShuffleParams) -> int:
    """Offset of ``slot`` in the chunk that ``source`` wrote for output bucket ``j``.

    ``source < B`` is an input bucket's chunk of C slots; ``source == B`` is the
    K-slot stash-drain chunk that closes the bucket's region.
    """
    if not 0 <= j < p.B:
        raise IndexError(f"output bucket {j} outside [0, {p.B})")
    if 0 <= source < p.B:
        width = p.C
    elif source == p.B:
        width = p.K
    else:
        raise IndexError(f"source {source} outside [0, {p.B}]")
    if not 0 <= slot < width:
        raise IndexError(f"slot {slot} outside chunk of width {width}")
    return j * p.mid_bucket_size + source * p.C + slot


# -- untrusted store and trace ----------------------------------------------------


class Array(IntEnum):
    IN = 0
    MID = 1
    OUT = 2


class Op(IntEnum):
    READ = 0
    WRITE = 1


class AccessEvent(NamedTuple):
    seq: int
    array: Array
    op: Op
    index: int


@dataclass
class UntrustedStore:
    """The adversary-visible arrays. Every access is appended to ``trace``."""

    in_arr: list[bytes | None]
    mid_arr: list[bytes | None]
    out_arr: list[bytes | None]
    trace: list[AccessEvent] = field(default_factory=list)

    @classmethod
    def allocate(cls, p: ShuffleParams) -> UntrustedStore:
        return cls([None] * p.padded_size, [None] * p.mid_size, [None] * p.N)

    def _arr(self, array: Array) -> list[bytes | None]:
        return (self.in_arr, self.mid_arr, self.out_arr)[array]

    def read(self, array: Array, index: int) -> bytes:
        arr = self._arr(array)
        if not 0 <= index < len(arr):
            raise IndexError(f"{array.name}[{index}] out of bounds ({len(arr)})")
        self.trace.append(AccessEvent(len(self.trace), array, Op.READ, index))
        value = arr[index]
        if value is None:
            raise IntegrityError(f"{array.name}[{index}] read before it was written")
        return value

    def write(self, array: Array, index: int, value: bytes) -> None:
        arr = self._arr(array)
        if not 0 <= index < len(arr):
            raise IndexError(f"{array.name}[{index}] out of bounds ({len(arr)})")
        self.trace.append(AccessEvent(len(self.trace), array, Op.WRITE, index))
        arr[index] = value


def trace_fingerprint(store_or_trace: UntrustedStore | Iterable[AccessEvent]) -> str:
    """SHA-256 over the ordered (array, op, index) triples; contents never enter it."""
    trace = store_or_trace.trace if isinstance(store_or_trace, UntrustedStore) else store_or_trace
    h = hashlib.sha256()
    pack = struct.Struct("<BBQ").pack
    for ev in trace:
        h.update(pack(ev.array, ev.op, ev.index))
    return h.hexdigest()


def write_trace(trace: Iterable[AccessEvent], fh: IO[str]) -> None:
    for ev in trace:
        fh.write(f"{ev.seq},{ev.array.name},{ev.op.name},{ev.index}\n")


def read_trace(fh: IO[str]) -> list[AccessEvent]:
    events = []
    for line in fh:
        seq, array, op, index = line.strip().split(",")
        events.append(AccessEvent(int(seq), Array[array], Op[op], int(index)))
    return events


# -- item files -------------------------------------------------------------------

MAGIC = b"STSH"
VERSION = 1
_HEADER = struct.Struct("<4sHQI")


def write_items(path: str | Path, payloads: list[bytes], payload_size: int) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(payloads), payload_size))
        for p in payloads:
            if len(p) != payload_size:
                raise ParameterError(f"payload of {len(p)} bytes, expected {payload_size}")
            fh.write(p)


def read_items(path: str | Path) -> tuple[list[bytes], int]:
    """Return (payloads, payload size) from an item file."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ParameterError(f"{path}: truncated header")
        magic, version, n, size = _HEADER.unpack(head)
        if magic != MAGIC or version != VERSION:
            raise ParameterError(f"{path}: not an item file (magic={magic!r}, version={version})")
        if size < 1:
            raise ParameterError(f"{path}: payload size {size}")
        body = fh.read()
    if len(body) != n * size:
        raise ParameterError(f"{path}: expected {n * size} payload bytes, found {len(body)}")
    return [body[k * size:(k + 1) * size] for k in range(n)], size
