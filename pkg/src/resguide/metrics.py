"""Security-proxy metrics for cover/stego pairs and the probability maps behind them."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import spearmanr

from . import embedding
from .guidance import GuidanceConfig, local_variance_map, mean_abs_residual_gap, normalized_abs_residuals, smooth_mask
from .kernels import KernelBank, default_bank


@dataclass(frozen=True)
class MetricsReport:
    change_rate: float
    payload_bpp: float
    residual_distance: float
    prob_residual_rank_corr: float
    mask_mass_ratio: float


def residual_distance(cover: np.ndarray, stego: np.ndarray, bank: KernelBank | None = None) -> float:
    """Pixel mean of (1/30) sum_k |SRM_k(cover) - SRM_k(stego)|."""
    bank = bank or default_bank()
    x = np.asarray(cover, dtype=np.float64)
    y = np.asarray(stego, dtype=np.float64)
    return float(mean_abs_residual_gap(x, y, bank).mean())


def texture_map(cover: np.ndarray, bank: KernelBank | None = None) -> np.ndarray:
    """Mean of the max-normalised |KB3| and |KV5| residuals."""
    maps = normalized_abs_residuals(np.asarray(cover, dtype=np.float64), bank or default_bank())
    return sum(maps) / len(maps)


def rank_correlation(P: np.ndarray, texture: np.ndarray, F: np.ndarray) -> float:
    """Spearman correlation of P and texture over pixels outside the smooth mask."""
    keep = F == 0
    a, b = P[keep], texture[keep]
    if a.size < 2 or np.all(a == a[0]) or np.all(b == b[0]):
        return float("nan")
    return float(spearmanr(a, b).statistic)


def mask_mass_ratio(P: np.ndarray, F: np.ndarray) -> float:
    on, off = P[F == 1], P[F == 0]
    if on.size == 0 or off.size == 0:
        return float("nan")
    denom = float(off.mean())
    if denom == 0.0:
        return float("nan") if float(on.mean()) == 0.0 else float("inf")
    return float(on.mean()) / denom


def compute_metrics(
    cover: np.ndarray,
    stego: np.ndarray,
    P: np.ndarray,
    bank: KernelBank | None = None,
    guidance: GuidanceConfig = GuidanceConfig(),
) -> MetricsReport:
    bank = bank or default_bank()
    x = np.asarray(cover)
    if np.shape(stego) != x.shape or np.shape(P) != x.shape:
        raise ValueError("dimension mismatch between cover, stego and probability map")
    F = smooth_mask(local_variance_map(x.astype(np.float64)), guidance.r)
    return MetricsReport(
        change_rate=float(np.count_nonzero(np.asarray(stego) != x)) / x.size,
        payload_bpp=embedding.payload_bits(P, guidance.eps_log) / x.size,
        residual_distance=residual_distance(x, stego, bank),
        prob_residual_rank_corr=rank_correlation(P, texture_map(x, bank), F),
        mask_mass_ratio=mask_mass_ratio(P, F),
    )


def compare_methods(
    cover: np.ndarray,
    maps: Sequence[tuple[str, np.ndarray]],
    seeds: Iterable[int],
    bank: KernelBank | None = None,
    guidance: GuidanceConfig = GuidanceConfig(),
) -> list[dict]:
    """Hard-sample every (method, seed) pair and report metrics.

    The same seed drives the same noise field for every method, so methods
    are compared on common random numbers. Rows are ordered by method name
    then seed; one ``seed="mean"`` row per method follows its seeded rows.
    """
    bank = bank or default_bank()
    seeds = sorted(seeds)
    rows = []
    for name, P in sorted(maps, key=lambda item: item[0]):
        per_seed = []
        for seed in seeds:
            noise = embedding.noise_field(np.shape(cover), seed, embedding.FINAL_SAMPLE_STREAM)
            stego = embedding.apply_modifications(cover, embedding.hard_sample(P, noise))
            report = compute_metrics(cover, stego, P, bank, guidance)
            per_seed.append(report)
            rows.append({"method": name, "seed": seed, **asdict(report)})
        means = {f.name: float(np.mean([getattr(r, f.name) for r in per_seed])) for f in fields(MetricsReport)}
        rows.append({"method": name, "seed": "mean", **means})
    return rows


METRIC_COLUMNS = ["method", "seed", *(f.name for f in fields(MetricsReport))]


def format_value(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def rows_to_csv(rows: Iterable[dict], columns: Sequence[str] = METRIC_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row[c]) for c in columns])
    return buf.getvalue()
