import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from feds3a.errors import CorruptionError, StaleBaseError, VersionError
from feds3a.nn import ModelSpec, OptimizerState, init_params, loss_and_grad, optimizer_step
from feds3a.transport import (
    ModelCache,
    SparseDelta,
    decode,
    dense_cost,
    encode,
    fnv1a64,
    pack_dense,
    pack_sparse,
    send,
    sparse_cost,
    unpack_dense,
    unpack_sparse,
)

from helpers import flat


def test_fnv1a64_reference_vectors():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_threshold_hand_example():
    d = encode(flat([0.0, 1e-12, 0.5]), flat([0.0, 0.0, 0.0]), 3, zero_threshold=1e-9)
    assert d.indices.tolist() == [2] and d.values.tolist() == [0.5] and d.base_version == 3


def test_costs():
    assert sparse_cost(0) == 24 and sparse_cost(5) == 84
    assert dense_cost(10) == 96
    n = 1000
    assert sparse_cost(n // 2) / dense_cost(n) == pytest.approx(0.75, abs=0.01)


vectors = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=60)


@given(vectors, st.integers(0, 10_000))
def test_round_trip_lossless_above_threshold(vals, seed):
    rng = np.random.default_rng(seed)
    base = flat(rng.normal(size=len(vals)))
    new = flat(vals)
    d = encode(new, base, 0, zero_threshold=0.0)
    assert np.array_equal(decode(d, base).values, base.values + (new.values - base.values))
    frame = pack_sparse(d)
    d2 = unpack_sparse(frame, base)
    assert np.array_equal(decode(d2, base).values, decode(d, base).values)


@given(vectors)
def test_dense_frame_round_trip(vals):
    p = flat(vals)
    assert np.array_equal(unpack_dense(pack_dense(p), p).values, p.values)


def test_corrupted_frame_detected():
    base = flat([0.0, 0.0, 0.0, 0.0])
    frame = bytearray(pack_sparse(encode(flat([1.0, 0, 2.0, 0]), base, 0)))
    frame[20] ^= 0x01
    with pytest.raises(CorruptionError):
        unpack_sparse(bytes(frame), base)


def test_wrong_base_fails_checksum():
    d = encode(flat([1.0, 2.0]), flat([0.0, 0.0]), 0)
    with pytest.raises(CorruptionError):
        decode(d, flat([0.0, 1.0]))


def test_stale_base_not_cached():
    cache = ModelCache(depth=2)
    for v in range(4):
        cache.put(v, flat([float(v), 0.0]))
    assert cache.versions() == [2, 3]
    d = encode(flat([5.0, 0.0]), flat([1.0, 0.0]), 1)
    with pytest.raises(StaleBaseError):
        decode(d, cache)
    d = encode(flat([5.0, 0.0]), flat([3.0, 0.0]), 3)
    assert decode(d, cache).values.tolist() == [5.0, 0.0]
    with pytest.raises(VersionError):
        cache.put(3, flat([0.0, 0.0]))


def test_invalid_delta_rejected():
    with pytest.raises(VersionError):
        SparseDelta(0, 3, np.array([2, 1]), np.array([1.0, 1.0]), 0)


def test_send_picks_cheaper_framing():
    base = flat(np.zeros(100))
    dense_tr = send(flat(np.ones(100)), base, 0)
    assert not dense_tr.sparse and dense_tr.sent_bytes == dense_cost(100)
    v = np.zeros(100)
    v[:10] = 1.0
    sp = send(flat(v), base, 0)
    assert sp.sparse and sp.sent_bytes == sparse_cost(10) and sp.nnz == 10
    assert np.array_equal(sp.params.values, v)
    assert send(flat(v), None, 0).sent_bytes == dense_cost(100)


def test_below_threshold_entries_stay_at_base():
    new = np.zeros(10)
    new[:2] = [1e-10, 1.0]
    tr = send(flat(new), flat(np.zeros(10)), 0, zero_threshold=1e-8)
    assert tr.sparse and tr.params.values[:2].tolist() == [0.0, 1.0]


def _train_nnz(l1, seed=0):
    spec = ModelSpec((4, 8, 2), l1=l1)
    rng = np.random.default_rng(seed)
    p0 = init_params(spec, rng)
    x = rng.normal(size=(200, 4))
    t = np.eye(2)[(x[:, 0] > 0).astype(int)]
    opt = OptimizerState("sgd", lr=0.05, l1=l1)
    p = p0
    for _ in range(200):
        _, g = loss_and_grad(p, spec, x, t)
        p = optimizer_step(opt, p, g)
    return int(np.count_nonzero(p.values)), encode(p, p0, 0).nnz


def test_stronger_l1_gives_sparser_models():
    nnz = [_train_nnz(l1)[0] for l1 in (0.0, 1e-3, 1e-2, 5e-2)]
    assert all(a >= b for a, b in zip(nnz, nnz[1:]))
    assert nnz[-1] < nnz[0]
