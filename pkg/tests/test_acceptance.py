"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed together at the end of the run by the terminal-summary
hook in ``conftest.py``.
"""

import hashlib
import itertools
import math
import time

import numpy as np
import pytest

from resguide import embedding
from resguide.cli import main
from resguide.embedding import hard_sample, noise_field
from resguide.guidance import (
    COMPONENTS,
    LVG,
    ALL_ACTIVE,
    GuidanceConfig,
    diffused_modification_map,
    local_variance_map,
    loss_local_variance,
    loss_payload,
    loss_residual_distance,
    loss_residual_guidance,
    residual_reciprocal_map,
    smooth_mask,
)
from resguide.hill import costs_to_probabilities, hill_cost, solve_multiplier, gibbs_probability
from resguide.imageio import write_pgm
from resguide.metrics import compare_methods, rank_correlation, texture_map
from resguide.optimizer import GuidanceObjective, OptimizerConfig, gradcheck, optimize
from resguide.synthetic import textured_cover

from . import oracles

RESULTS: list[str] = []

SUBSETS = [frozenset(c) for n in range(4) for c in itertools.combinations(COMPONENTS, n)]
PAYLOADS = (0.2, 0.4)
COVER_SEEDS = range(5)


def record(number: int, ok: bool, detail: str) -> None:
    RESULTS.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    print(RESULTS[-1])
    assert ok, detail


class _Runs:
    """Lazily computed 256x256 optimisations shared by criteria 3 to 6."""

    def __init__(self):
        self.covers = {s: textured_cover(256, seed=s) for s in COVER_SEEDS}
        self.cache = {}

    def get(self, seed, q, active=ALL_ACTIVE):
        key = (seed, q, active)
        if key not in self.cache:
            start = time.perf_counter()
            result = optimize(self.covers[seed], q, OptimizerConfig(active=active))
            self.cache[key] = (result, time.perf_counter() - start)
        return self.cache[key]


@pytest.fixture(scope="module")
def runs():
    return _Runs()


def test_criterion_01_detection_error_not_reproduced():
    RESULTS.append("criterion  1: INFO  detection-error tables need trained steganalysers; "
                   "covered by the property criteria below")


def test_criterion_02_gradient_fidelity():
    start = time.perf_counter()
    worst, failures = 0.0, []
    for cover_seed in range(5):
        cover = np.random.default_rng([17, cover_seed]).integers(0, 256, (16, 16)).astype(np.uint8)
        for active in SUBSETS:
            rep = gradcheck(cover, OptimizerConfig(active=active), coords=100, seed=cover_seed)
            worst = max(worst, rep.max_rel_error)
            if not rep.passed:
                failures.append((cover_seed, sorted(active), rep.max_rel_error))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 120
    record(2, ok, f"max rel error {worst:.2e} over 5 covers x 8 subsets in {elapsed:.1f}s; failures={failures}")


@pytest.mark.slow
def test_criterion_03_payload_constraint(runs):
    worst_gap, worst_time, lines = 0.0, 0.0, []
    for seed in COVER_SEEDS:
        for q in PAYLOADS:
            result, elapsed = runs.get(seed, q)
            gap = abs(result.payload_bpp - q)
            worst_gap, worst_time = max(worst_gap, gap), max(worst_time, elapsed)
            lines.append(f"{seed}/{q}:{result.payload_bpp:.4f}")
    ok = worst_gap < 0.01 and worst_time < 120
    record(3, ok, f"max |bpp - q| {worst_gap:.4f}, slowest image {worst_time:.1f}s ({' '.join(lines)})")


@pytest.mark.slow
def test_criterion_04_smooth_region_suppression(runs):
    details, ok = [], True
    for seed in COVER_SEEDS:
        cover = runs.covers[seed]
        F = GuidanceObjective(cover, 0.4).F
        full, _ = runs.get(seed, 0.4)
        ablated, _ = runs.get(seed, 0.4, ALL_ACTIVE - {LVG})
        r_on = full.P_final[F == 1].mean() / full.P_final[F == 0].mean()
        r_off = ablated.P_final[F == 1].mean() / ablated.P_final[F == 0].mean()
        ok &= bool(r_on < 0.1 and r_off > r_on)
        details.append(f"{seed}:{r_on:.4f}->{r_off:.4f}")
    record(4, ok, f"mask mass ratio with LVG -> without ({' '.join(details)})")


@pytest.mark.slow
def test_criterion_05_texture_affinity(runs):
    values = []
    for seed in COVER_SEEDS:
        cover = runs.covers[seed]
        F = GuidanceObjective(cover, 0.4).F
        T = texture_map(cover)
        for q in PAYLOADS:
            values.append(rank_correlation(runs.get(seed, q)[0].P_final, T, F))
    ok = all(v > 0 for v in values)
    record(5, ok, f"Spearman min {min(values):.3f}, max {max(values):.3f} over {len(values)} runs")


@pytest.mark.slow
def test_criterion_06_residual_distance_vs_uniform(runs):
    per_cover, ok = [], True
    for seed in COVER_SEEDS:
        cover = runs.covers[seed]
        for q in PAYLOADS:
            P_opt = runs.get(seed, q)[0].P_final
            P_uni = embedding.uniform_probability(cover.shape, q)
            rows = compare_methods(cover, [("optimized", P_opt), ("uniform", P_uni)], seeds=range(10))
            opt = {r["seed"]: r["residual_distance"] for r in rows if r["method"] == "optimized"}
            uni = {r["seed"]: r["residual_distance"] for r in rows if r["method"] == "uniform"}
            wins = sum(opt[s] < uni[s] for s in range(10))
            ok &= wins >= 8
            per_cover.append(f"{seed}/{q}:{wins}/10 ({opt['mean']:.4f} vs {uni['mean']:.4f})")
    record(6, ok, "seeds where optimized beats uniform: " + " ".join(per_cover))


def test_criterion_07_oracle_equivalence(bank):
    cfg = GuidanceConfig()
    srm = [k.coefficients.tolist() for k in bank.h2]
    h1 = [k.coefficients.tolist() for k in bank.h1]
    worst = {"l1": 0.0, "l2": 0.0, "l3": 0.0, "l4": 0.0}
    for trial in range(20):
        rng = np.random.default_rng([7, trial])
        cover = rng.integers(0, 256, (16, 16)).astype(np.float64)
        M = rng.uniform(-1, 1, (16, 16))
        P = rng.uniform(0, 2 / 3, (16, 16))
        stego = cover + rng.choice([-1.0, 0.0, 1.0], (16, 16))
        q = float(rng.uniform(0.05, 1.5))
        C, Ml, Pl, Yl = (oracles.to_lists(a) for a in (cover, M, P, stego))

        l1 = loss_residual_guidance(diffused_modification_map(M, bank), residual_reciprocal_map(cover, bank, cfg))
        ref1 = oracles.loss_rg(oracles.diffused(Ml), oracles.residual_reciprocal(C, h1, cfg.eps_recip))
        l2 = loss_residual_distance(cover, stego, P, bank)
        ref2 = oracles.loss_rdg(C, Yl, Pl, srm)
        F = smooth_mask(local_variance_map(cover), cfg.r)
        S_ref = oracles.local_variance(C)
        order = sorted(range(256), key=lambda i: (S_ref[i // 16][i % 16], i))
        F_ref = [[0.0] * 16 for _ in range(16)]
        for i in order[: math.floor(cfg.r * 256)]:
            F_ref[i // 16][i % 16] = 1.0
        l3 = loss_local_variance(F, P)
        ref3 = oracles.loss_lvg(F_ref, Pl)
        l4 = loss_payload(P, q, cfg)
        ref4 = oracles.loss_payload(Pl, q, cfg.eps_log)
        for name, got, ref in (("l1", l1, ref1), ("l2", l2, ref2), ("l3", l3, ref3), ("l4", l4, ref4)):
            worst[name] = max(worst[name], abs(got - ref))
    ok = all(v < 1e-9 for v in worst.values())
    record(7, ok, "max |loss - oracle| " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))


def test_criterion_08_simulator_statistics():
    n_draws = 10**6
    worst_z, ok = 0.0, True
    for i, p in enumerate((0.05, 0.2, 0.4, 0.6)):
        M = hard_sample(np.full(n_draws, p), noise_field((1, n_draws), seed=100 + i).ravel())
        for direction in (-1, 1):
            count = np.count_nonzero(M == direction)
            half = p / 2
            z = abs(count - n_draws * half) / math.sqrt(n_draws * half * (1 - half))
            worst_z = max(worst_z, z)
            ok &= z < 3
    rng = np.random.default_rng(8)
    P = rng.uniform(0, 2 / 3, 200_000)
    n = rng.uniform(size=200_000)
    outside = (np.abs(P - 2 * n) > 0.01) & (np.abs(P - 2 * (1 - n)) > 0.01)
    hard = hard_sample(P, n)
    gaps = []
    for lam in (1e3, 1e4, 1e6):
        gap = float(np.max(np.abs(embedding.double_tanh_relax(P, n, lam) - hard)[outside]))
        gaps.append(gap)
        ok &= gap < 1e-6
    ok &= gaps[0] >= gaps[1] >= gaps[2]
    record(8, ok, f"worst |z| {worst_z:.2f} (< 3); relax-vs-hard gaps at lambda 1e3/1e4/1e6: "
                  + "/".join(f"{g:.1e}" for g in gaps))


def test_criterion_09_hill_baseline():
    ok, worst_bits, iters = True, 0.0, 0
    for trial, q in enumerate((0.05, 0.2, 0.4, 0.7, 1.0)):
        rho = np.random.default_rng([9, trial]).uniform(0.1, 50, (16, 16))
        lam, it = solve_multiplier(rho, q)
        gap = abs(embedding.payload_bits(gibbs_probability(rho, lam)) - q * rho.size)
        worst_bits, iters = max(worst_bits, gap), max(iters, it)
    cover = textured_cover(256, seed=0)
    P_hill = costs_to_probabilities(hill_cost(cover), 0.4)
    worst_bits = max(worst_bits, abs(embedding.payload_bits(P_hill) - 0.4 * cover.size))
    ok &= worst_bits <= 0.1 and iters < 200
    P_eq = costs_to_probabilities(np.full((16, 16), 4.2), 0.3)
    uniform = bool(np.all(P_eq == P_eq[0, 0]))
    ok &= uniform
    rho = np.random.default_rng(99).uniform(0.1, 50, (64, 64))
    base = costs_to_probabilities(rho, 0.4)
    scale_gap = max(float(np.max(np.abs(costs_to_probabilities(rho * s, 0.4) - base))) for s in (1e-3, 0.5, 7.0, 1e4))
    ok &= scale_gap < 1e-8
    record(9, ok, f"payload gap {worst_bits:.2e} bits ({iters} bisection steps), equal-cost uniform={uniform}, "
                  f"scaling gap {scale_gap:.1e}")


def test_criterion_10_cli_determinism(tmp_path):
    cover_path = tmp_path / "cover.pgm"
    write_pgm(cover_path, textured_cover(64, seed=5))
    digests = []
    for run in ("run1", "run2"):
        out = tmp_path / run
        for method in ("resguide", "hill"):
            assert main(["embed", "--in", str(cover_path), "--q", "0.4", "--seed", "7", "--method", method,
                         "--out-dir", str(out / method)]) == 0
        assert main(["ablate", "--in", str(cover_path), "--seed", "7", "--steps", "60",
                     "--out-dir", str(out / "ablate")]) == 0
        digests.append({str(p.relative_to(out)): hashlib.sha256(p.read_bytes()).hexdigest()
                        for p in sorted(out.rglob("*")) if p.is_file()})
    ok = digests[0] == digests[1] and len(digests[0]) == 9
    record(10, ok, f"{len(digests[0])} artifacts, SHA-256 identical across runs: {digests[0] == digests[1]}")
