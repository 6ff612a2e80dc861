import hashlib
import random

import pytest
from hypothesis import given, settings, strategies as st

from anchor.errors import ReseedRequired, SeedTooShort
from anchor.prg import RESEED_LIMIT, Prg, PrgState, prg_next, prg_reseed, prg_seed

from _stats import monobit_frequency, runs_z


def test_zero_seed_vector():
    expected = hashlib.sha256(b"\x10" + bytes(32)).digest()
    assert prg_seed(bytes(32)).S == expected
    assert expected.hex() == "a9deba97c5a6ecfff3bd534250e4d43e44732733254e794ca53727344f5522eb"


def test_seed_length():
    with pytest.raises(SeedTooShort):
        prg_seed(bytes(31))
    assert prg_seed(b"x" * 32) == prg_seed(b"x" * 32)


def test_next_distinct_and_deterministic():
    s0 = prg_seed(bytes(range(32)))
    a, s1 = prg_next(s0, 32)
    b, s2 = prg_next(s1, 32)
    assert a != b and s0 != s1 != s2
    assert prg_next(s0, 32) == (a, s1)
    assert s2.generated == 64


def test_request_bounds_and_reseed_limit():
    s = prg_seed(bytes(32))
    with pytest.raises(ValueError):
        prg_next(s, 0)
    with pytest.raises(ValueError):
        prg_next(s, 4097)
    near = PrgState(s.S, RESEED_LIMIT - 10, 0)
    prg_next(near, 10)
    with pytest.raises(ReseedRequired):
        prg_next(near, 11)
    fresh = prg_reseed(near, bytes(16))
    assert fresh.generated == 0 and fresh.reseed_epoch == 1
    prg_next(fresh, 11)


def test_reseed_semantics():
    s = prg_seed(bytes(32))
    with pytest.raises(SeedTooShort):
        prg_reseed(s, bytes(15))
    r1 = prg_reseed(s, b"a" * 16)
    r2 = prg_reseed(s, b"b" * 16)
    assert prg_next(r1, 32)[0] != prg_next(s, 32)[0]
    assert prg_next(r1, 32)[0] != prg_next(r2, 32)[0]
    epochs = s
    for k in range(1, 6):
        epochs = prg_reseed(epochs, bytes(16))
        assert epochs.reseed_epoch == k


def test_stateful_wrapper_autoreseeds():
    calls = []

    def entropy(n):
        calls.append(n)
        return bytes(n)

    prg = Prg(PrgState(prg_seed(bytes(32)).S, RESEED_LIMIT - 4, 0), entropy)
    prg.read(8)
    assert calls == [32] and prg.state.reseed_epoch == 1
    bare = Prg(PrgState(bytes(32), RESEED_LIMIT, 0))
    with pytest.raises(ReseedRequired):
        bare.read(1)


def test_random_seeds_determinism_and_divergence():
    rng = random.Random(99)
    for _ in range(10_000):
        seed = rng.randbytes(32)
        s = prg_seed(seed)
        assert prg_next(s, 16) == prg_next(prg_seed(seed), 16)
        assert prg_next(prg_reseed(s, rng.randbytes(16)), 16)[0] != prg_next(s, 16)[0]


def test_state_and_output_non_reuse():
    s = prg_seed(b"\x01" * 32)
    states, outputs = {s.S}, set()
    for _ in range(10_000):
        out, s = prg_next(s, 32)
        assert s.S not in states
        assert out not in outputs
        states.add(s.S)
        outputs.add(out)


def test_statistics_one_million_bits():
    s = prg_seed(b"statistics-seed".ljust(32, b"\x00"))
    chunks = []
    for _ in range(125_000 // 4096 + 1):
        out, s = prg_next(s, 4096)
        chunks.append(out)
    data = b"".join(chunks)[:125_000]
    assert 0.49 <= monobit_frequency(data) <= 0.51
    assert abs(runs_z(data)) < 20


def test_runs_statistic_detects_structure():
    assert abs(runs_z(b"\x55" * 125_000)) > 20
    assert abs(runs_z(b"\x00\xff" * 62_500)) > 20


@settings(max_examples=300)
@given(st.binary(min_size=32, max_size=64), st.integers(1, 4096))
def test_output_length_and_advance(seed, n):
    out, nxt = prg_next(prg_seed(seed), n)
    assert len(out) == n
    assert nxt.generated == n
