import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from resguide.embedding import (
    SidecarError,
    apply_modifications,
    double_tanh_relax,
    hard_sample,
    noise_field,
    payload_bits,
    probability_for_payload,
    read_rgpm,
    write_rgpm,
)
from resguide.guidance import P_MAX, ternary_entropy

from . import oracles


def test_double_tanh_limits():
    big = 1e6
    assert float(double_tanh_relax(np.array(0.5), np.array(0.1), big)) == pytest.approx(-1.0, abs=1e-12)
    assert float(double_tanh_relax(np.array(0.5), np.array(0.5), big)) == pytest.approx(0.0, abs=1e-12)
    assert float(double_tanh_relax(np.array(0.5), np.array(0.9), big)) == pytest.approx(1.0, abs=1e-12)


def test_double_tanh_zero_probability():
    n = np.linspace(0.01, 0.99, 7)
    lam = 60.0
    expected = -0.5 * np.tanh(-2 * lam * n) + 0.5 * np.tanh(-2 * lam * (1 - n))
    assert np.array_equal(double_tanh_relax(np.zeros(7), n, lam), expected)
    assert double_tanh_relax(np.array(0.0), np.array(0.5), lam) == 0.0


def test_double_tanh_bounded(rng):
    P = rng.uniform(0, P_MAX, 1000)
    n = rng.uniform(size=1000)
    M = double_tanh_relax(P, n, 60.0)
    assert np.all(np.abs(M) <= 1.0)


def test_hard_sample_examples():
    n = np.random.default_rng(0).uniform(size=(8, 8))
    assert np.all(hard_sample(np.zeros((8, 8)), n) == 0)
    assert hard_sample(np.array([P_MAX]), np.array([0.2]))[0] == -1
    assert hard_sample(np.array([P_MAX]), np.array([0.8]))[0] == 1
    assert hard_sample(np.array([P_MAX]), np.array([0.5]))[0] == 0


def test_hard_sample_monte_carlo_rate():
    n = noise_field((1000, 1000), seed=11)
    M = hard_sample(np.full((1000, 1000), 0.4), n)
    assert np.count_nonzero(M) / 1e6 == pytest.approx(0.4, abs=0.002)


def test_noise_field_properties():
    a = noise_field((32, 48), seed=5, stream=3)
    assert a.shape == (32, 48)
    assert np.all((a >= 0) & (a < 1))
    assert np.array_equal(a, noise_field((32, 48), seed=5, stream=3))
    assert not np.array_equal(a, noise_field((32, 48), seed=5, stream=4))
    assert not np.array_equal(a, noise_field((32, 48), seed=6, stream=3))
    # a pixel's value depends on its raster index only, not on the map width
    flat = noise_field((1, 32 * 48), seed=5, stream=3)
    assert np.array_equal(a.ravel(), flat.ravel())


def test_apply_modifications_examples():
    x = np.array([[128, 255, 0, 7]], dtype=np.uint8)
    assert np.array_equal(apply_modifications(x, np.zeros((1, 4), np.int8)), x)
    y = apply_modifications(x, np.array([[1, 1, -1, -1]], np.int8))
    assert y.tolist() == [[129, 254, 1, 6]]
    assert y.dtype == np.uint8


def test_apply_modifications_rejects_large():
    with pytest.raises(ValueError):
        apply_modifications(np.zeros((2, 2), np.uint8), np.full((2, 2), 2))


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, (16, 16)), arrays(np.int8, (16, 16), elements=st.integers(-1, 1)))
def test_apply_modifications_range_and_count(x, m):
    y = apply_modifications(x, m)
    assert y.min() >= 0 and y.max() <= 255
    assert np.count_nonzero(y.astype(int) != x.astype(int)) == np.count_nonzero(m)


def test_payload_bits_examples():
    assert abs(payload_bits(np.zeros((16, 16)))) < 1e-8
    assert payload_bits(np.full((16, 16), 0.5)) == pytest.approx(384.0, abs=1e-8)
    assert payload_bits(np.full((256, 256), P_MAX)) == pytest.approx(65536 * math.log2(3), abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (16, 16), elements=st.floats(0.0, P_MAX)))
def test_payload_bits_matches_oracle(P):
    ref = sum(oracles.entropy_bits(float(p), 1e-12) for p in P.ravel())
    assert payload_bits(P) == pytest.approx(ref, abs=1e-9)


def test_probability_for_payload_examples():
    assert probability_for_payload(math.log2(3)) == P_MAX
    # eps_log lowers H(0.5) by ~4e-12 bits and dH/dp = 1 there
    assert probability_for_payload(1.5) == pytest.approx(0.5, abs=1e-10)
    assert probability_for_payload(1e-9) < 1e-9
    for q in (0.0, -1.0, 1.6):
        with pytest.raises(ValueError):
            probability_for_payload(q)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, P_MAX - 1e-3))
def test_probability_for_payload_inverts_entropy(p):
    assert probability_for_payload(float(ternary_entropy(p))) == pytest.approx(p, abs=1e-8)


def test_rgpm_round_trip(tmp_path, rng):
    P = rng.uniform(0, P_MAX, (17, 23))
    path = tmp_path / "p.rgpm"
    write_rgpm(path, P)
    data = path.read_bytes()
    assert data[:4] == b"RGPM"
    assert int.from_bytes(data[4:8], "little") == 23
    assert int.from_bytes(data[8:12], "little") == 17
    assert len(data) == 12 + 8 * 17 * 23
    assert np.array_equal(read_rgpm(path), P)


def test_rgpm_errors(tmp_path):
    P = np.zeros((4, 4))
    good = tmp_path / "good.rgpm"
    write_rgpm(good, P)
    data = good.read_bytes()
    cases = {"short": data[:8], "body": data[:-3], "magic": b"XXXX" + data[4:]}
    for name, blob in cases.items():
        path = tmp_path / f"{name}.rgpm"
        path.write_bytes(blob)
        with pytest.raises(SidecarError, match="^bad sidecar"):
            read_rgpm(path)
