"""Per-image minimisation of the weighted guidance loss over a logit field.

The probability map is parameterised as ``P = (2/3) * sigmoid(theta)`` and
optimised with Adam. Gradients are written out by hand: every step of the
forward pass below has its transpose in :meth:`GuidanceObjective.loss_and_gradient`.

Forward pass for one step::

    P      = (2/3) sigmoid(theta)
    M      = double_tanh(P, noise)           # relaxed modification, Y = X + M
    l1     = mean(0.5 (MEAN11 + MEAN7)|M| * R_HL)
    l2     = mean((1/30) sum_k |SRM_k (Y) - SRM_k (X)| * P)
    l3     = mean(F * P)
    l4     = (sum H(P) - h w q)^2
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from . import embedding
from .guidance import (
    ALL_ACTIVE,
    LVG,
    P_MAX,
    RDG,
    RG,
    GuidanceConfig,
    LossBreakdown,
    LossWeights,
    check_payload,
    local_variance_map,
    loss_total,
    residual_reciprocal_map,
    smooth_mask,
    ternary_entropy,
    ternary_entropy_derivative,
)
from .kernels import (
    ConvolutionError,
    KernelBank,
    convolve,
    convolve_adjoint,
    convolve_many,
    convolve_many_adjoint,
    default_bank,
)

log = logging.getLogger(__name__)


class OptimizationDiverged(RuntimeError):
    def __init__(self, message: str, trace: list[LossBreakdown]):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class OptimizerConfig:
    steps: int = 400
    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.95
    adam_eps: float = 1e-8
    seed: int = 0
    resample_noise: bool = True
    # replace |M| by P in the residual-guidance term (deterministic debugging mode)
    expected_abs: bool = False
    lambda_slope: float = 60.0
    weights: LossWeights = field(default_factory=LossWeights)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    active: frozenset[str] = ALL_ACTIVE

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("moment decay factors must lie in (0, 1)")
        if not self.lambda_slope > 0:
            raise ValueError("lambda_slope must be > 0")


@dataclass
class OptimizationResult:
    P_final: np.ndarray
    loss_trace: list[LossBreakdown]
    M_hard: np.ndarray
    stego: np.ndarray
    converged: bool
    payload_bpp: float


def probability_from_logits(theta: np.ndarray) -> np.ndarray:
    return P_MAX * expit(theta)


def logits_for_probability(p: float | np.ndarray) -> np.ndarray:
    return logit(np.asarray(p, dtype=np.float64) / P_MAX)


class GuidanceObjective:
    """Loss of one cover as a function of the logit field.

    Everything that depends only on the cover (texture reciprocal map, smooth
    mask, transposed diffusion weights) is computed once here.
    """

    def __init__(
        self,
        cover: np.ndarray,
        q: float,
        cfg: OptimizerConfig = OptimizerConfig(),
        bank: KernelBank | None = None,
    ):
        check_payload(q)
        self.bank = bank or default_bank()
        self.cover = np.asarray(cover, dtype=np.float64)
        self.q = q
        self.cfg = cfg
        self.size = self.cover.size
        self.R_HL = residual_reciprocal_map(self.cover, self.bank, cfg.guidance)
        self.F = smooth_mask(local_variance_map(self.cover), cfg.guidance.r)
        big, small = self.bank.l2
        # l1 = <|M|, G1>, since the diffusion filters are linear
        self.G1 = 0.5 * (convolve_adjoint(self.R_HL, big) + convolve_adjoint(self.R_HL, small)) / self.size

    def _forward(self, theta: np.ndarray, noise: np.ndarray):
        return self._forward_probability(probability_from_logits(theta), noise)

    def _forward_probability(self, P: np.ndarray, noise: np.ndarray):
        cfg = self.cfg
        M = embedding.double_tanh_relax(P, noise, cfg.lambda_slope)
        big, small = self.bank.l2
        A = P if cfg.expected_abs else np.abs(M)
        M_L = 0.5 * (convolve(A, big) + convolve(A, small))
        l1 = float(np.sum(M_L * self.R_HL) / self.size)
        # SRM(Y) - SRM(X) == SRM(M) by linearity
        D = convolve_many(M, self.bank.h2)
        gap = np.abs(D).mean(axis=0)
        l2 = float(np.sum(gap * P) / self.size)
        l3 = float(np.sum(self.F * P) / self.size)
        bits_gap = float(np.sum(ternary_entropy(P, cfg.guidance.eps_log))) - self.size * self.q
        l4 = bits_gap * bits_gap
        parts = loss_total(l1, l2, l3, l4, cfg.weights, cfg.active)
        return parts, (P, M, D, gap, bits_gap)

    def loss(self, theta: np.ndarray, noise: np.ndarray) -> LossBreakdown:
        return self._forward(theta, noise)[0]

    def loss_at_probability(self, P: np.ndarray, noise: np.ndarray) -> LossBreakdown:
        """Score an arbitrary probability map (e.g. a baseline's) with the same objective."""
        return self._forward_probability(np.asarray(P, dtype=np.float64), noise)[0]

    def loss_and_gradient(self, theta: np.ndarray, noise: np.ndarray) -> tuple[LossBreakdown, np.ndarray]:
        cfg, w = self.cfg, self.cfg.weights
        parts, (P, M, D, gap, bits_gap) = self._forward(theta, noise)
        if not math.isfinite(parts.total):
            raise FloatingPointError(f"non-finite loss {parts}")

        grad_P = w.delta * 2.0 * bits_gap * ternary_entropy_derivative(P, cfg.guidance.eps_log)
        grad_M = np.zeros_like(M)
        if RG in cfg.active:
            if cfg.expected_abs:
                grad_P += w.alpha * self.G1
            else:
                grad_M += w.alpha * np.sign(M) * self.G1
        if RDG in cfg.active:
            grad_P += w.beta * gap / self.size
            scale = w.beta / (len(self.bank.h2) * self.size)
            grad_M += convolve_many_adjoint(np.sign(D) * (P * scale), self.bank.h2)
        if LVG in cfg.active:
            grad_P += w.gamma * self.F / self.size
        grad_P += grad_M * embedding.double_tanh_derivative(P, noise, cfg.lambda_slope)

        s = expit(theta)
        grad_theta = grad_P * (P_MAX * s * (1.0 - s))
        return parts, grad_theta

    def exclusion_mask(self, theta: np.ndarray, noise: np.ndarray, fd_step: float) -> np.ndarray:
        """Coordinates where central differences are unreliable.

        A coordinate is excluded when the finite-difference step can move an
        absolute-value argument it feeds across zero, or when the step spans
        a steep part of the double-tanh ramp.
        """
        cfg = self.cfg
        P, M, D, _, _ = self._forward(theta, noise)[1]
        h, w = P.shape
        s = expit(theta)
        dP = P_MAX * s * (1.0 - s)
        # first-order change of M under the step, with a safety factor of 2
        dM = 2.0 * np.abs(embedding.double_tanh_derivative(P, noise, cfg.lambda_slope) * dP) * fd_step
        bad = np.zeros((h, w), dtype=bool)
        if RG in cfg.active and not cfg.expected_abs:
            bad |= (np.abs(M) <= dM) & (dM > 0)
        if RDG in cfg.active:
            # which source pixel each padded row/column reads
            r = self.bank.h2[0].radius
            rows = np.pad(np.arange(h), r, mode="reflect")
            cols = np.pad(np.arange(w), r, mode="reflect")
            for k, kernel in enumerate(self.bank.h2):
                for a, b, c in kernel.taps():
                    src = np.ix_(rows[a:a + h], cols[b:b + w])
                    reach_k = abs(c) * dM[src]
                    np.logical_or.at(bad, src, (np.abs(D[k]) <= reach_k) & (reach_k > 0))
        lam = cfg.lambda_slope
        reach = lam * dP * fd_step
        in_ramp = (np.abs(lam * (P - 2.0 * noise)) < 30.0) | (np.abs(lam * (P - 2.0 * (1.0 - noise))) < 30.0)
        bad |= in_ramp & (reach > 1e-3)
        return bad


def loss_and_gradient(
    cover: np.ndarray,
    theta: np.ndarray,
    q: float,
    cfg: OptimizerConfig,
    noise: np.ndarray,
    bank: KernelBank | None = None,
) -> tuple[LossBreakdown, np.ndarray]:
    return GuidanceObjective(cover, q, cfg, bank).loss_and_gradient(theta, noise)


def optimize(cover: np.ndarray, q: float, cfg: OptimizerConfig = OptimizerConfig(),
             bank: KernelBank | None = None) -> OptimizationResult:
    """Run Adam on the logit field from the payload-matching uniform map."""
    objective = GuidanceObjective(cover, q, cfg, bank)
    shape = objective.cover.shape
    theta = np.full(shape, float(logits_for_probability(embedding.probability_for_payload(q))))
    m = np.zeros(shape)
    v = np.zeros(shape)
    trace: list[LossBreakdown] = []
    for step in range(cfg.steps):
        stream = step if cfg.resample_noise else 0
        noise = embedding.noise_field(shape, cfg.seed, stream)
        try:
            parts, grad = objective.loss_and_gradient(theta, noise)
        except (FloatingPointError, ConvolutionError) as exc:
            raise OptimizationDiverged(f"optimizer diverged at step {step}: {exc}", trace) from exc
        trace.append(parts)
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
        m_hat = m / (1.0 - cfg.beta1 ** (step + 1))
        v_hat = v / (1.0 - cfg.beta2 ** (step + 1))
        theta = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        if step % 100 == 0:
            log.debug("step %d total=%.6g l4=%.6g", step, parts.total, parts.l4)

    P = probability_from_logits(theta)
    bpp = embedding.payload_bits(P, cfg.guidance.eps_log) / P.size
    M_hard = embedding.hard_sample(P, embedding.noise_field(shape, cfg.seed, embedding.FINAL_SAMPLE_STREAM))
    stego = embedding.apply_modifications(np.asarray(cover), M_hard)
    return OptimizationResult(
        P_final=P,
        loss_trace=trace,
        M_hard=M_hard,
        stego=stego,
        converged=abs(bpp - q) < 0.01,
        payload_bpp=bpp,
    )


# --- gradient check ----------------------------------------------------------


@dataclass
class GradcheckReport:
    max_rel_error: float
    checked: int
    excluded: int
    tolerance: float
    trial_errors: list[float]

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_error < self.tolerance


def relative_error(analytic: float, numeric: float) -> float:
    denom = max(abs(analytic), abs(numeric))
    if denom == 0.0:
        return 0.0
    return abs(analytic - numeric) / denom


def gradcheck(
    cover: np.ndarray,
    cfg: OptimizerConfig = OptimizerConfig(),
    trials: int = 1,
    q: float = 0.4,
    coords: int = 100,
    fd_step: float = 1e-5,
    tolerance: float = 1e-5,
    seed: int = 0,
    bank: KernelBank | None = None,
) -> GradcheckReport:
    """Compare analytic gradients with central differences at random coordinates."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    objective = GuidanceObjective(cover, q, cfg, bank)
    shape = objective.cover.shape
    rng = np.random.default_rng([seed, embedding.GRADCHECK_STREAM])
    errors: list[float] = []
    checked = excluded = 0
    for _ in range(trials):
        theta = rng.normal(0.0, 1.0, shape)
        noise = rng.random(shape)
        _, grad = objective.loss_and_gradient(theta, noise)
        skip = objective.exclusion_mask(theta, noise, fd_step)
        picks = rng.choice(theta.size, size=min(coords, theta.size), replace=False)
        worst = 0.0
        for flat in picks:
            idx = np.unravel_index(flat, shape)
            if skip[idx]:
                excluded += 1
                continue
            orig = theta[idx]
            theta[idx] = orig + fd_step
            up = objective.loss(theta, noise).total
            theta[idx] = orig - fd_step
            down = objective.loss(theta, noise).total
            theta[idx] = orig
            numeric = (up - down) / (2.0 * fd_step)
            worst = max(worst, relative_error(float(grad[idx]), numeric))
            checked += 1
        errors.append(worst)
    return GradcheckReport(max(errors), checked, excluded, tolerance, errors)
