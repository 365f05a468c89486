"""Guidance losses on probability and modification maps.

Maps are plain 2-D ``float64`` arrays of the cover's shape. The four loss
components are

* ``l1``: residual guidance, diffused |M| weighted by the reciprocal texture map;
* ``l2``: residual distance between cover and stego under the 30 SRM kernels,
  weighted by P;
* ``l3``: probability mass on the smooth-region mask;
* ``l4``: squared gap between ternary entropy of P and the target payload.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelBank, convolve, convolve_many, mirror_pad

P_MAX = 2.0 / 3.0
LOG2_3 = math.log2(3.0)

RG, RDG, LVG = "RG", "RDG", "LVG"
COMPONENTS = (RG, RDG, LVG)
ALL_ACTIVE = frozenset(COMPONENTS)


@dataclass(frozen=True)
class GuidanceConfig:
    r: float = 0.5
    eps_recip: float = 1e-2
    eps_log: float = 1e-12

    def __post_init__(self) -> None:
        if not 0.0 < self.r < 1.0:
            raise ValueError(f"r must lie in (0, 1), got {self.r}")
        if not self.eps_recip > 0 or not self.eps_log > 0:
            raise ValueError("epsilons must be positive")


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 10.0
    gamma: float = 1000.0
    delta: float = 1e-4

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "gamma", "delta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"weight {name} must be finite and >= 0, got {v}")


def parse_components(text: str) -> frozenset[str]:
    """Parse ``"rg,rdg"`` / ``"RG+LVG"`` into a component set. Empty string gives the empty set."""
    names = [t.strip().upper() for t in text.replace("+", ",").split(",") if t.strip()]
    bad = [n for n in names if n not in COMPONENTS]
    if bad:
        raise ValueError(f"unknown guidance component(s): {', '.join(bad)}")
    return frozenset(names)


def components_label(active: frozenset[str]) -> str:
    return "+".join(c for c in COMPONENTS if c in active) or "none"


@dataclass(frozen=True)
class LossBreakdown:
    l1: float
    l2: float
    l3: float
    l4: float
    total: float
    active: frozenset[str] = field(default=ALL_ACTIVE)

    CSV_HEADER = ("step", "l1", "l2", "l3", "l4", "total", "active")

    def csv_row(self, step: int) -> list[str]:
        return [str(step), *(repr(float(v)) for v in (self.l1, self.l2, self.l3, self.l4, self.total)),
                components_label(self.active)]


def _check_same_shape(*maps: np.ndarray) -> None:
    shapes = {np.shape(m) for m in maps}
    if len(shapes) != 1:
        raise ValueError(f"dimension mismatch: {sorted(shapes)}")


def check_probability(P: np.ndarray) -> None:
    if not np.all(np.isfinite(P)) or P.min() < 0.0 or P.max() > P_MAX:
        raise ValueError("probability map out of range [0, 2/3]")


def check_payload(q: float) -> None:
    if not 0.0 < q < LOG2_3:
        raise ValueError(f"payload q must lie in (0, log2 3), got {q}")


# --- residual guidance -----------------------------------------------------


def normalized_abs_residuals(cover: np.ndarray, bank: KernelBank) -> list[np.ndarray]:
    """|H1 residual| per filter, each divided by its own maximum (all-zero stays zero)."""
    out = []
    for k in bank.h1:
        a = np.abs(convolve(cover, k))
        m = a.max()
        out.append(a / m if m > 0 else a)
    return out


def residual_reciprocal_map(cover: np.ndarray, bank: KernelBank, cfg: GuidanceConfig) -> np.ndarray:
    total = np.zeros(np.shape(cover))
    for a in normalized_abs_residuals(cover, bank):
        total += 1.0 / (convolve(a, bank.l1[0]) + cfg.eps_recip)
    return total


def diffused_modification_map(mod_map: np.ndarray, bank: KernelBank) -> np.ndarray:
    m = np.asarray(mod_map, dtype=np.float64)
    if np.any(np.abs(m) > 1.0):
        raise ValueError("invalid modification magnitude")
    a = np.abs(m)
    big, small = bank.l2
    return 0.5 * (convolve(a, big) + convolve(a, small))


def loss_residual_guidance(M_L: np.ndarray, R_HL: np.ndarray) -> float:
    _check_same_shape(M_L, R_HL)
    return float(np.sum(M_L * R_HL) / M_L.size)


# --- residual distance -----------------------------------------------------


def srm_residuals(values: np.ndarray, bank: KernelBank) -> np.ndarray:
    return convolve_many(values, bank.h2)


def mean_abs_residual_gap(cover: np.ndarray, stego: np.ndarray, bank: KernelBank) -> np.ndarray:
    """Per-pixel (1/30) sum_k |R^X_k - R^Y_k|."""
    _check_same_shape(cover, stego)
    diff = srm_residuals(cover, bank) - srm_residuals(stego, bank)
    return np.abs(diff).mean(axis=0)


def loss_residual_distance(cover: np.ndarray, stego: np.ndarray, P: np.ndarray, bank: KernelBank) -> float:
    _check_same_shape(cover, stego, P)
    check_probability(P)
    gap = mean_abs_residual_gap(cover, stego, bank)
    return float(np.sum(gap * P) / P.size)


# --- local variance --------------------------------------------------------


def local_variance_map(cover: np.ndarray) -> np.ndarray:
    """Population variance over each mirror-padded 3x3 neighbourhood."""
    u = np.asarray(cover, dtype=np.float64)
    h, w = u.shape
    padded = mirror_pad(u, 1)
    windows = [padded[a:a + h, b:b + w] for a in range(3) for b in range(3)]
    mean = sum(windows) / 9.0
    return sum((x - mean) ** 2 for x in windows) / 9.0


def smooth_mask(S: np.ndarray, r: float) -> np.ndarray:
    """Binary mask with ones on the floor(r*h*w) lowest-variance pixels, ties in raster order."""
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    flat = np.asarray(S, dtype=np.float64).ravel()
    n_ones = math.floor(r * flat.size)
    order = np.argsort(flat, kind="stable")
    F = np.zeros(flat.size)
    F[order[:n_ones]] = 1.0
    return F.reshape(np.shape(S))


def loss_local_variance(F: np.ndarray, P: np.ndarray) -> float:
    _check_same_shape(F, P)
    return float(np.sum(F * P) / P.size)


# --- payload ---------------------------------------------------------------


def ternary_entropy(P: np.ndarray | float, eps_log: float = 1e-12) -> np.ndarray:
    """Entropy in bits of (P/2, 1-P, P/2), with eps inside each logarithm."""
    P = np.asarray(P, dtype=np.float64)
    return -P * np.log2(P / 2.0 + eps_log) - (1.0 - P) * np.log2(1.0 - P + eps_log)


def ternary_entropy_derivative(P: np.ndarray, eps_log: float = 1e-12) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    ln2 = math.log(2.0)
    half = P / 2.0 + eps_log
    rest = 1.0 - P + eps_log
    return (-np.log2(half) - P / (2.0 * half * ln2)) + (np.log2(rest) + (1.0 - P) / (rest * ln2))


def loss_payload(P: np.ndarray, q: float, cfg: GuidanceConfig) -> float:
    check_payload(q)
    check_probability(P)
    gap = float(np.sum(ternary_entropy(P, cfg.eps_log))) - P.size * q
    return gap * gap


# --- total -----------------------------------------------------------------


def loss_total(
    l1: float,
    l2: float,
    l3: float,
    l4: float,
    weights: LossWeights = LossWeights(),
    active: frozenset[str] = ALL_ACTIVE,
) -> LossBreakdown:
    total = 0.0
    if RG in active:
        total += weights.alpha * l1
    if RDG in active:
        total += weights.beta * l2
    if LVG in active:
        total += weights.gamma * l3
    total += weights.delta * l4
    return LossBreakdown(l1, l2, l3, l4, total, frozenset(active))
