import hashlib
import hmac
import random

import pytest
from hypothesis import given, settings, strategies as st

from anchor.errors import Backward, BadLength, LabelTooLong, WindowExceeded
from anchor.idvv import RESYNC_WINDOW, idvv_derive, idvv_init, idvv_next, idvv_resync

ZERO = bytes(32)


def test_zero_vector():
    s = idvv_init(ZERO, ZERO)
    assert s.idvv == hashlib.sha256(b"\x20" + ZERO + ZERO).digest()
    assert s.idvv.hex() == "d0531ed8e3745d0137f6ff277d5af1a4fd9d49146867493c51242b5242c381de"
    assert s.counter == 0


def test_step_and_derive_formulas():
    key = bytes(range(32))
    s = idvv_init(ZERO, key)
    v, s1 = idvv_next(s)
    assert v == s.idvv
    assert s1.idvv == hashlib.sha256(b"\x21" + s.idvv + key).digest()
    assert idvv_derive(s1, "mac") == hmac.digest(s1.idvv, b"\x22mac", "sha256")


def test_bad_length():
    with pytest.raises(BadLength):
        idvv_init(bytes(16), ZERO)
    with pytest.raises(BadLength):
        idvv_init(ZERO, bytes(33))


def test_next_twice_distinct():
    s = idvv_init(b"s" * 32, b"k" * 32)
    a, s = idvv_next(s)
    b, s = idvv_next(s)
    assert a != b and s.counter == 2


def test_derive_labels():
    s = idvv_init(b"s" * 32, b"k" * 32)
    assert idvv_derive(s, "mac") != idvv_derive(s, "enc")
    assert idvv_derive(s, "mac") == idvv_derive(idvv_init(b"s" * 32, b"k" * 32), "mac")
    idvv_derive(s, "x" * 16)
    with pytest.raises(LabelTooLong):
        idvv_derive(s, "x" * 17)
    before = s
    for _ in range(5):
        idvv_derive(s, "enc")
    assert s == before


def test_resync():
    s = idvv_init(b"s" * 32, b"k" * 32)
    manual = s
    for _ in range(3):
        _, manual = idvv_next(manual)
    assert idvv_resync(s, 3) == manual
    with pytest.raises(Backward):
        idvv_resync(manual, 2)
    with pytest.raises(WindowExceeded):
        idvv_resync(manual, manual.counter + RESYNC_WINDOW + 1)
    assert idvv_resync(manual, manual.counter + RESYNC_WINDOW).counter == 3 + RESYNC_WINDOW


def test_no_value_reuse_over_trace():
    s = idvv_init(b"a" * 32, b"b" * 32)
    emitted = set()
    for _ in range(10_000):
        v, s = idvv_next(s)
        emitted.add(v)
        assert s.idvv not in emitted
        assert s.seed not in emitted and s.key not in emitted
    assert len(emitted) == 10_000


def test_lockstep_100k():
    a = b = idvv_init(b"\x11" * 32, b"\x22" * 32)
    seen = set()
    for _ in range(100_000):
        va, a = idvv_next(a)
        vb, b = idvv_next(b)
        assert va == vb
        seen.add(va)
    assert len(seen) == 100_000


@settings(max_examples=10_000, deadline=None)
@given(st.binary(min_size=32, max_size=32), st.binary(min_size=32, max_size=32),
       st.lists(st.integers(0, 5), max_size=6), st.lists(st.integers(0, 5), max_size=6))
def test_lockstep_any_interleaving(seed, key, jumps_a, jumps_b):
    a = b = idvv_init(seed, key)
    for j in jumps_a:
        a = idvv_resync(a, a.counter + j) if j % 2 else idvv_next(a)[1]
    for j in jumps_b:
        b = idvv_resync(b, b.counter + j) if j % 2 else idvv_next(b)[1]
    target = max(a.counter, b.counter)
    a, b = idvv_resync(a, target), idvv_resync(b, target)
    assert a == b
    assert idvv_derive(a, "mac") == idvv_derive(b, "mac")


def test_random_keys_distinct_chains():
    rng = random.Random(5)
    firsts = {idvv_init(rng.randbytes(32), rng.randbytes(32)).idvv for _ in range(1000)}
    assert len(firsts) == 1000
