"""Command-line front end.

Subcommands: ``embed``, ``metrics``, ``gradcheck``, ``ablate`` and
``kernel dump``. Settings come from built-in defaults, then an optional
``--config`` file of ``key=value`` lines, then explicit flags.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import embedding, hill, imageio, metrics
from .guidance import (
    ALL_ACTIVE,
    COMPONENTS,
    LOG2_3,
    GuidanceConfig,
    LossBreakdown,
    LossWeights,
    components_label,
    parse_components,
)
from .kernels import default_bank, dump_bank
from .optimizer import GuidanceObjective, OptimizationDiverged, OptimizerConfig, gradcheck, optimize
from .synthetic import textured_cover

METHODS = ("resguide", "hill", "random-uniform")

# config-file key -> (type, default)
SETTINGS = {
    "q": (float, 0.4),
    "seed": (int, 0),
    "method": (str, "resguide"),
    "ablate": (str, ""),
    "steps": (int, OptimizerConfig.steps),
    "lr": (float, OptimizerConfig.learning_rate),
    "lambda_slope": (float, OptimizerConfig.lambda_slope),
    "r": (float, GuidanceConfig.r),
    "alpha": (float, LossWeights.alpha),
    "beta": (float, LossWeights.beta),
    "gamma": (float, LossWeights.gamma),
    "delta": (float, LossWeights.delta),
    "workers": (int, 1),
    "trials": (int, 1),
    "out_dir": (str, None),
}


class UsageError(Exception):
    pass


class CliError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    q: float = 0.4
    seed: int = 0
    method: str = "resguide"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    inputs: tuple[str, ...] = ()
    out_dir: str | None = None
    workers: int = 1
    trials: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.q < LOG2_3:
            raise UsageError(f"--q must lie in (0, log2 3), got {self.q}")
        if self.method not in METHODS:
            raise UsageError(f"--method must be one of {', '.join(METHODS)}")
        if self.workers < 1:
            raise UsageError("--workers must be >= 1")
        if self.trials < 1:
            raise UsageError("--trials must be >= 1")
        if self.out_dir is not None and not self.out_dir:
            raise UsageError("--out-dir must be non-empty")


def read_config_file(path: str) -> dict[str, str]:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in SETTINGS:
            raise UsageError(f"{path}:{lineno}: unrecognised setting {line!r}")
        values[key] = value.strip()
    return values


def build_run_config(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    merged = {}
    for key, (kind, default) in SETTINGS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in file_values:
            try:
                merged[key] = kind(file_values[key])
            except ValueError as exc:
                raise UsageError(f"config value for {key} is not a valid {kind.__name__}") from exc
        else:
            merged[key] = default
    try:
        active = ALL_ACTIVE - parse_components(merged["ablate"])
        opt = OptimizerConfig(
            steps=merged["steps"],
            learning_rate=merged["lr"],
            seed=merged["seed"],
            lambda_slope=merged["lambda_slope"],
            weights=LossWeights(merged["alpha"], merged["beta"], merged["gamma"], merged["delta"]),
            guidance=GuidanceConfig(r=merged["r"]),
            active=active,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return RunConfig(
        q=merged["q"],
        seed=merged["seed"],
        method=merged["method"],
        optimizer=opt,
        inputs=tuple(getattr(args, "inputs", None) or ()),
        out_dir=merged["out_dir"],
        workers=merged["workers"],
        trials=merged["trials"],
    )


# --- embedding ---------------------------------------------------------------


@dataclass
class MethodOutcome:
    P: np.ndarray
    stego: np.ndarray
    trace: list[LossBreakdown]


def run_method(cover: np.ndarray, cfg: RunConfig, opt: OptimizerConfig | None = None) -> MethodOutcome:
    opt = opt or cfg.optimizer
    if cfg.method == "resguide":
        result = optimize(cover, cfg.q, opt)
        return MethodOutcome(result.P_final, result.stego, result.loss_trace)
    if cfg.method == "hill":
        P = hill.costs_to_probabilities(hill.hill_cost(cover), cfg.q)
    else:
        P = embedding.uniform_probability(cover.shape, cfg.q)
    noise = embedding.noise_field(cover.shape, opt.seed, embedding.FINAL_SAMPLE_STREAM)
    stego = embedding.apply_modifications(cover, embedding.hard_sample(P, noise))
    # baselines get one trace row: the objective evaluated at their map
    score = GuidanceObjective(cover, cfg.q, opt).loss_at_probability(P, embedding.noise_field(cover.shape, opt.seed, 0))
    return MethodOutcome(P, stego, [score])


def trace_to_csv(trace: list[LossBreakdown]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LossBreakdown.CSV_HEADER)
    for step, parts in enumerate(trace):
        writer.writerow(parts.csv_row(step))
    return buf.getvalue()


def _output_dir(cfg: RunConfig) -> Path:
    if not cfg.out_dir:
        raise UsageError("--out-dir is required")
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc.strerror}") from exc
    return out


def embed_one(path: str, cfg: RunConfig) -> list[str]:
    cover = imageio.read_image(path)
    out = _output_dir(cfg)
    stem = Path(path).stem
    outcome = run_method(cover, cfg)
    report = metrics.compute_metrics(cover, outcome.stego, outcome.P, guidance=cfg.optimizer.guidance)
    row = {"method": cfg.method, "seed": cfg.seed, **report.__dict__}
    files = {
        out / f"{stem}.stego.pgm": None,
        out / f"{stem}.prob.rgpm": None,
        out / f"{stem}.loss.csv": trace_to_csv(outcome.trace),
        out / f"{stem}.metrics.csv": metrics.rows_to_csv([row]),
    }
    try:
        imageio.write_pgm(out / f"{stem}.stego.pgm", outcome.stego)
        embedding.write_rgpm(out / f"{stem}.prob.rgpm", outcome.P)
        for target, text in files.items():
            if text is not None:
                target.write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write outputs to {out}: {exc.strerror}") from exc
    return [str(p) for p in files]


def _map_inputs(func, cfg: RunConfig) -> list:
    if not cfg.inputs:
        raise UsageError("--in is required")
    if not cfg.out_dir:
        raise UsageError("--out-dir is required")
    if cfg.workers == 1 or len(cfg.inputs) == 1:
        return [func(p, cfg) for p in cfg.inputs]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(func, cfg.inputs, itertools.repeat(cfg)))


def cmd_embed(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    for written in _map_inputs(embed_one, cfg):
        for p in written:
            print(p)
    return 0


# --- ablation ----------------------------------------------------------------

ABLATION_COLUMNS = ["subset", "l1", "l2", "l3", "l4", "total", *metrics.METRIC_COLUMNS[2:]]


def ablation_subsets() -> list[frozenset[str]]:
    """The seven non-empty subsets of the guidance components, full set last."""
    return [frozenset(c) for k in (1, 2, 3) for c in itertools.combinations(COMPONENTS, k)]


def ablate_one(path: str, cfg: RunConfig) -> list[str]:
    cover = imageio.read_image(path)
    out = _output_dir(cfg)
    rows = []
    for subset in ablation_subsets():
        opt = replace(cfg.optimizer, active=subset)
        outcome = run_method(cover, replace(cfg, method="resguide"), opt)
        report = metrics.compute_metrics(cover, outcome.stego, outcome.P, guidance=opt.guidance)
        last = outcome.trace[-1]
        rows.append({"subset": components_label(subset), "l1": last.l1, "l2": last.l2, "l3": last.l3,
                     "l4": last.l4, "total": last.total, **report.__dict__})
    target = out / f"{Path(path).stem}.ablation.csv"
    try:
        target.write_text(metrics.rows_to_csv(rows, ABLATION_COLUMNS))
    except OSError as exc:
        raise CliError(f"cannot write {target}: {exc.strerror}") from exc
    return [str(target)]


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    for written in _map_inputs(ablate_one, cfg):
        for p in written:
            print(p)
    return 0


# --- metrics / gradcheck / kernels ----------------------------------------------


def cmd_metrics(args: argparse.Namespace) -> int:
    cover = imageio.read_image(args.cover)
    stego = imageio.read_image(args.stego)
    try:
        P = embedding.read_rgpm(args.prob)
    except OSError as exc:
        raise CliError(f"bad sidecar: cannot read {args.prob}") from exc
    if cover.shape != stego.shape or cover.shape != P.shape:
        raise CliError(f"dimension mismatch: cover {cover.shape}, stego {stego.shape}, sidecar {P.shape}")
    r = GuidanceConfig.r if args.r is None else args.r
    try:
        guidance = GuidanceConfig(r=r)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report = metrics.compute_metrics(cover, stego, P, guidance=guidance)
    sys.stdout.write(metrics.rows_to_csv([{"method": args.label, "seed": "-", **report.__dict__}]))
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    cover = textured_cover(16, seed=cfg.seed)
    ok = True
    for k in range(len(COMPONENTS) + 1):
        for subset in itertools.combinations(COMPONENTS, k):
            opt = replace(cfg.optimizer, active=frozenset(subset))
            rep = gradcheck(cover, opt, trials=cfg.trials, q=cfg.q, seed=cfg.seed)
            status = "PASS" if rep.passed else "FAIL"
            ok &= rep.passed
            print(f"subset={components_label(frozenset(subset))} max_rel_error={rep.max_rel_error:.3e} "
                  f"checked={rep.checked} excluded={rep.excluded} {status}")
    return 0 if ok else 1


def cmd_kernel_dump(args: argparse.Namespace) -> int:
    sys.stdout.write(dump_bank(default_bank()))
    return 0


# --- parser ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def _add_run_flags(p: argparse.ArgumentParser, with_io: bool = True) -> None:
    if with_io:
        p.add_argument("--in", dest="inputs", nargs="+", metavar="IMAGE")
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--workers", type=int)
    p.add_argument("--config")
    p.add_argument("--q", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--ablate", help="components to switch off, e.g. rdg,lvg")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda-slope", dest="lambda_slope", type=float)
    p.add_argument("--r", type=float)
    for name in ("alpha", "beta", "gamma", "delta"):
        p.add_argument(f"--{name}", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="resguide", description="Residual-guided embedding probability maps.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("embed", help="optimise (or baseline) a map and simulate embedding")
    _add_run_flags(p)
    p.add_argument("--method", choices=METHODS)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("ablate", help="run every non-empty subset of the guidance components")
    _add_run_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("metrics", help="metrics for a cover/stego/probability triple")
    p.add_argument("--cover", required=True)
    p.add_argument("--stego", required=True)
    p.add_argument("--prob", required=True)
    p.add_argument("--r", type=float)
    p.add_argument("--label", default="input")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradient")
    _add_run_flags(p, with_io=False)
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("kernel", help="kernel bank utilities")
    ksub = p.add_subparsers(dest="kernel_command", required=True, parser_class=_Parser)
    ksub.add_parser("dump", help="print every kernel at 12 significant digits").set_defaults(func=cmd_kernel_dump)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage-error: {exc}", file=sys.stderr)
        return 2
    except (CliError, imageio.ImageFormatError, embedding.SidecarError, hill.PayloadUnreachable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OptimizationDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
