"""Ternary embedding simulator, payload accounting and the RGPM sidecar format."""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .guidance import LOG2_3, P_MAX, ternary_entropy

# stream ids below 2**32 are optimisation steps; these mark the other consumers
FINAL_SAMPLE_STREAM = 2**40
GRADCHECK_STREAM = 2**41

RGPM_MAGIC = b"RGPM"
_RGPM_HEADER = struct.Struct("<4sII")


class SidecarError(ValueError):
    pass


def noise_field(shape: tuple[int, int], seed: int, stream: int = 0) -> np.ndarray:
    """Uniform [0, 1) noise from a counter-based generator keyed by (seed, stream).

    Philox maps each pixel's raster index to its own counter block, so the
    value at a pixel depends only on the key and that index.
    """
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.random(shape[0] * shape[1]).reshape(shape)


def double_tanh_relax(P: np.ndarray, n: np.ndarray, lambda_slope: float) -> np.ndarray:
    if lambda_slope <= 0:
        raise ValueError("lambda_slope must be positive")
    return -0.5 * np.tanh(lambda_slope * (P - 2.0 * n)) + 0.5 * np.tanh(lambda_slope * (P - 2.0 * (1.0 - n)))


def double_tanh_derivative(P: np.ndarray, n: np.ndarray, lambda_slope: float) -> np.ndarray:
    """d(double_tanh_relax)/dP, element-wise."""
    ta = np.tanh(lambda_slope * (P - 2.0 * n))
    tb = np.tanh(lambda_slope * (P - 2.0 * (1.0 - n)))
    return 0.5 * lambda_slope * ((1.0 - tb * tb) - (1.0 - ta * ta))


def hard_sample(P: np.ndarray, n: np.ndarray) -> np.ndarray:
    """-1 where n < P/2, +1 where n > 1 - P/2, 0 elsewhere."""
    half = np.asarray(P) / 2.0
    M = np.zeros(np.shape(P), dtype=np.int8)
    M[n < half] = -1
    M[n > 1.0 - half] = 1
    return M


def apply_modifications(cover: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Y = X + M with out-of-range changes flipped to the opposite direction."""
    x = np.asarray(cover, dtype=np.int16)
    m = np.asarray(M, dtype=np.int16)
    if np.any(np.abs(m) > 1):
        raise ValueError("hard modification map must be in {-1, 0, +1}")
    m = np.where((x == 0) & (m == -1), 1, m)
    m = np.where((x == 255) & (m == 1), -1, m)
    return (x + m).astype(np.uint8)


def payload_bits(P: np.ndarray, eps_log: float = 1e-12) -> float:
    return float(np.sum(ternary_entropy(P, eps_log)))


def probability_for_payload(q: float, eps_log: float = 1e-12) -> float:
    """Change probability p in [0, 2/3] whose ternary entropy equals q bits."""
    if not 0.0 < q <= LOG2_3:
        raise ValueError(f"payload q must lie in (0, log2 3], got {q}")
    top = float(ternary_entropy(P_MAX, eps_log))
    if q >= top:
        return P_MAX
    p = brentq(lambda x: float(ternary_entropy(x, eps_log)) - q, 0.0, P_MAX, xtol=1e-16, rtol=1e-15, maxiter=500)
    return float(p)


# --- RGPM sidecar ------------------------------------------------------------


def write_rgpm(path: str | Path, P: np.ndarray) -> None:
    P = np.asarray(P, dtype="<f8")
    h, w = P.shape
    with open(path, "wb") as fh:
        fh.write(_RGPM_HEADER.pack(RGPM_MAGIC, w, h))
        fh.write(np.ascontiguousarray(P).tobytes())


def read_rgpm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _RGPM_HEADER.size:
        raise SidecarError("bad sidecar: truncated header")
    magic, w, h = _RGPM_HEADER.unpack_from(data)
    if magic != RGPM_MAGIC:
        raise SidecarError("bad sidecar: wrong magic bytes")
    body = data[_RGPM_HEADER.size:]
    if len(body) != 8 * w * h:
        raise SidecarError(f"bad sidecar: expected {8 * w * h} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(h, w).astype(np.float64)


def uniform_probability(shape: tuple[int, int], q: float) -> np.ndarray:
    return np.full(shape, probability_for_payload(q))


def expected_change_rate(P: np.ndarray) -> float:
    return float(np.mean(P))


def change_rate_sigma(P: np.ndarray) -> float:
    """Standard deviation of the change rate for independent per-pixel draws."""
    return math.sqrt(float(np.sum(P * (1.0 - P)))) / P.size
