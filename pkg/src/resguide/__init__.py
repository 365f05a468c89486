"""Residual-guided embedding probability maps for 8-bit grayscale covers."""

from .embedding import (
    apply_modifications,
    double_tanh_relax,
    hard_sample,
    noise_field,
    payload_bits,
    probability_for_payload,
    read_rgpm,
    write_rgpm,
)
from .guidance import GuidanceConfig, LossBreakdown, LossWeights
from .hill import costs_to_probabilities, hill_cost
from .kernels import KernelBank, convolve, kernel_bank_load
from .metrics import MetricsReport, compare_methods, compute_metrics, residual_distance
from .optimizer import OptimizationResult, OptimizerConfig, gradcheck, loss_and_gradient, optimize

__version__ = "0.1.0"
