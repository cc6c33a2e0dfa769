import numpy as np

from doc_sim import _rng


def test_block_matches_scalar_draws():
    key = _rng.stream_key(12345, 3, 7, _rng.CONTEND)
    block = _rng.draw_block(key, 10, 64)
    scalars = [_rng.draw(key, 10 + i) for i in range(1, 65)]
    assert np.array_equal(block, np.array(scalars))


def test_streams_are_independent_and_deterministic():
    a = _rng.stream_key(1, 0, 0, _rng.CONTEND)
    b = _rng.stream_key(1, 1, 0, _rng.CONTEND)
    c = _rng.stream_key(1, 0, 1, _rng.CONTEND)
    d = _rng.stream_key(1, 0, 0, _rng.GAIN)
    assert len({a, b, c, d}) == 4
    assert a == _rng.stream_key(1, 0, 0, _rng.CONTEND)
    u = _rng.draw_block(a, 0, 100)
    assert np.array_equal(u, _rng.draw_block(a, 0, 100))


def test_uniform_range_and_moments():
    key = _rng.stream_key(2024, 0, 0, _rng.GAIN)
    u = _rng.draw_block(key, 0, 1_000_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    # mean 1/2 and variance 1/12, each within 5 standard errors
    assert abs(u.mean() - 0.5) < 5 * (1 / 12) ** 0.5 / 1000
    assert abs(u.var() - 1 / 12) < 5e-4


def test_mix64_avalanche():
    # flipping one input bit flips roughly half the output bits
    flips = []
    for bit in range(0, 64, 7):
        x = 0x0123456789ABCDEF
        flips.append(bin(_rng.mix64(x) ^ _rng.mix64(x ^ (1 << bit))).count("1"))
    assert all(20 <= f <= 44 for f in flips)
