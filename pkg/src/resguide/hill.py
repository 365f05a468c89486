"""HILL embedding costs and the Gibbs cost-to-probability conversion."""

from __future__ import annotations

import numpy as np

from .guidance import check_payload, ternary_entropy
from .kernels import KernelBank, convolve, default_bank

WET_COST = 1e10
HILL_EPS = 1e-10


class PayloadUnreachable(ValueError):
    pass


def hill_cost(cover: np.ndarray, bank: KernelBank | None = None, wet: float = WET_COST) -> np.ndarray:
    """rho = MEAN15(1 / (MEAN3(|KB3 * X|) + eps)), capped at the wet cost."""
    bank = bank or default_bank()
    x = np.asarray(cover, dtype=np.float64)
    kb3 = bank.by_name("KB3")
    spread = convolve(np.abs(convolve(x, kb3)), bank.l1[0])
    rho = convolve(1.0 / (spread + HILL_EPS), bank.mean15)
    return np.minimum(rho, wet)


def gibbs_probability(rho: np.ndarray, lam: float, wet: float = WET_COST) -> np.ndarray:
    """Total change probability 2 e^(-lam rho) / (1 + 2 e^(-lam rho)); zero on wet pixels."""
    x = np.exp(-lam * rho)
    P = 2.0 * x / (1.0 + 2.0 * x)
    P[rho >= wet] = 0.0
    return P


def solve_multiplier(
    rho: np.ndarray,
    q: float,
    wet: float = WET_COST,
    tol_bits: float = 0.1,
    max_iter: int = 200,
    eps_log: float = 1e-12,
) -> tuple[float, int]:
    """Find the Gibbs multiplier whose probability map carries q bits per pixel.

    Entropy falls monotonically as the multiplier grows, so it is bracketed
    by doubling and then bisected down to floating-point resolution.
    Returns ``(multiplier, bisection_iterations)``.
    """
    check_payload(q)
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(~(rho > 0)):
        raise ValueError("costs must be strictly positive")
    target = q * rho.size

    def bits(lam: float) -> float:
        return float(np.sum(ternary_entropy(gibbs_probability(rho, lam, wet), eps_log)))

    dry = rho[rho < wet]
    if dry.size == 0 or bits(0.0) < target - tol_bits:
        raise PayloadUnreachable(f"payload of {target:.1f} bits exceeds what the non-wet pixels can carry")

    lo, hi = 0.0, 1.0 / float(np.mean(dry))
    while bits(hi) > target:
        lo, hi = hi, 2.0 * hi
    iterations = 0
    while iterations < max_iter:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        iterations += 1
        if bits(mid) > target:
            lo = mid
        else:
            hi = mid
    lam = lo if abs(bits(lo) - target) <= abs(bits(hi) - target) else hi
    return lam, iterations


def costs_to_probabilities(rho: np.ndarray, q: float, wet: float = WET_COST, tol_bits: float = 0.1) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.float64)
    lam, _ = solve_multiplier(rho, q, wet, tol_bits)
    return gibbs_probability(rho, lam, wet)
