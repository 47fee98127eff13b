import math

import numpy as np
import pytest

from stashshuffle.enclave import Enclave, Streams
from stashshuffle.errors import ParameterError
from stashshuffle.memory import mid_idx
from stashshuffle.params import ShuffleParams, conditions
from stashshuffle.shuffle import ingest


def payloads_for(n, size=8):
    return [k.to_bytes(size, "little") for k in range(n)]


@pytest.fixture
def staged():
    """(store, enclave) with payloads k = 0..N-1 encrypted into ``in``."""
    def stage(p, seed=0, **kwargs):
        enclave = Enclave(8, Streams(seed), **kwargs)
        return ingest(payloads_for(p.N), p, enclave), enclave
    return stage


def mid_records(store, enclave, p, j, source):
    """Decrypted records of one chunk of ``mid`` (bypasses the trace)."""
    width = p.C if source < p.B else p.K
    return [enclave.mid_cipher.decrypt(store.mid_arr[mid_idx(j, s, source, p)])
            for s in range(width)]


def real_ids(records):
    return [int.from_bytes(r.payload, "little") for r in records if not r.is_dummy]


def random_condition_params(count=50, seed=1):
    """Random parameter vectors with C < D that satisfy every closed-form side condition."""
    rng = np.random.default_rng(seed)
    found = []
    while len(found) < count:
        N = int(10 ** rng.uniform(4, 8))
        # D/B bounded so the stash DP stays small
        B = max(2, round(math.sqrt(N / 10 ** rng.uniform(0.5, 2.5))))
        mu = -(-N // B) / B
        C = int(np.ceil(mu + rng.uniform(1, 8) * np.sqrt(mu)))
        S = B * int(rng.integers(2 * C + 1, 6 * C + 2))
        W = int(rng.integers(1, 4))
        Q = int(rng.uniform(0, 3) * np.sqrt(N))
        try:
            p = ShuffleParams.create(N, B, S, W, Q, C=C)
        except ParameterError:
            continue
        if C < p.D and all(conditions(p).values()):
            found.append(p)
    return found
