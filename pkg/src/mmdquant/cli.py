"""
Command-line front end.

Subcommands
-----------
quantize   one quantization; writes report.json, points.csv, trace.csv (SGD
           methods) and two SVG figures
sweep      grid over targets, bandwidths, smoothness values and point counts;
           writes sweep.csv plus one directory per cell
check      runs the invariant suite and prints one PASS/FAIL line per check

Options may also come from a ``key = value`` file given by ``--config``;
flags on the command line take precedence.  The default output directory is
read from ``MMDQUANT_OUTPUT_DIR``.

Exit codes: 0 success, 1 failed checks or sweep cells, 2 usage error,
3 numerical abort.
"""
from __future__ import annotations

import argparse
import csv
import enum
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .closedform import NormalTargetSpec, WeightMode, deterministic_optimize
from .cost import cost_c_double_prime, monte_carlo_mean
from .distributions import (MC_SIZE, Normal, TargetDistribution, derive_seed, embedding,
                            parse_target, self_energy)
from .errors import DomainError, NumericalAbort, QuantizationError
from .kernel import KernelSpec
from .linalg import build_system
from .sgd import SgdConfig, sgd_quantize, sgd_quantize_penalized
from .weights import NEGATIVE_TOL, Quantization, WeightKind, mmd_sq, simplex_weights

__all__ = ["Method", "ExperimentConfig", "MmdReport", "run_experiment", "cmd_quantize",
           "cmd_sweep", "main", "format_float", "OUTPUT_ENV"]

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3
OUTPUT_ENV = "MMDQUANT_OUTPUT_DIR"
DEFAULT_OUTPUT = "mmdquant-output"

POINTS_HEADER = ["index", "x", "p"]
SWEEP_HEADER = ["target", "ell", "nu", "n", "method", "mmd", "status"]


class Method(str, enum.Enum):
    SGD = "sgd"
    PENALIZED = "penalized"
    CLOSED_FORM = "closedform"


def format_float(v: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    return format(float(v), ".17g")


def make_kernel(ell: float, nu: float) -> KernelSpec:
    return KernelSpec.gaussian(ell) if math.isinf(nu) else KernelSpec.matern(ell, nu)


@dataclass(frozen=True)
class ExperimentConfig:
    target: TargetDistribution
    kernel: KernelSpec
    n_points: int
    method: Method = Method.SGD
    sgd: SgdConfig = None
    output_dir: Path = Path(DEFAULT_OUTPUT)
    plots: bool = True

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.n_points < 1:
            raise DomainError("n_points must be at least 1")
        if self.sgd is None:
            object.__setattr__(self, "sgd", SgdConfig(n_points=self.n_points))
        elif self.sgd.n_points != self.n_points:
            raise DomainError("sgd.n_points must equal n_points")
        if self.method is Method.CLOSED_FORM and not (
                isinstance(self.target, Normal) and self.kernel.is_gaussian):
            raise DomainError("the closed-form method needs a normal target and a Gaussian kernel")

    def echo(self) -> dict:
        return {
            "target": {"family": self.target.family, **self.target.params()},
            "kernel": {"family": self.kernel.family.value, "ell": self.kernel.ell,
                       "nu": _json_float(self.kernel.nu)},
            "n_points": self.n_points,
            "method": self.method.value,
            "sgd": asdict(self.sgd),
        }


@dataclass
class MmdReport:
    config: dict
    points: list
    weights: list
    weight_kind: str
    mmd: float
    mmd_sq: float
    mmd_source: str
    mmd_std_error: float | None
    negative_weight_count: int
    active_set: list = field(default_factory=list)
    running_mmd_sq: float | None = None
    iterations: int = 0
    nudges: int = 0
    status: str = "ok"
    wall_time: float = 0.0

    def quantization(self) -> Quantization:
        return Quantization(self.points, self.weights, self.weight_kind)

    def to_json(self) -> str:
        data = {k: _json_float(v) if isinstance(v, float) else v for k, v in asdict(self).items()}
        return json.dumps(data, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MmdReport":
        data = json.loads(text)
        for key in ("mmd", "mmd_sq"):
            if data[key] is None:
                data[key] = math.nan
        return cls(**data)


def _json_float(v):
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _finalize(cfg: ExperimentConfig, quant: Quantization, m, seed: int):
    """Apply the active set if needed and evaluate the squared MMD."""
    spec, target = cfg.kernel, cfg.target
    x = quant.points
    sys_ = build_system(spec, x)
    if m is None:
        m, m_exact = embedding(target, spec, x, rng=np.random.default_rng([seed, 1]))
    else:
        m_exact = target.analytic_embedding(spec, x) is not None
    negatives = int(np.count_nonzero(quant.weights < -NEGATIVE_TOL))
    active = []
    if quant.kind is WeightKind.SUM_TO_ONE and negatives:
        sol = simplex_weights(sys_, m)
        quant, active = sol.quantization, list(sol.active_set)
    se, se_exact = self_energy(target, spec, rng=np.random.default_rng([seed, 3]))
    if m_exact and se_exact:
        value, source, err = mmd_sq(sys_, m, se, quant.weights), "closed_form", None
    else:
        p = quant.weights
        value, err = monte_carlo_mean(lambda s: cost_c_double_prime(spec, x, p, s), target,
                                      np.random.default_rng([seed, 4]), MC_SIZE)
        source = "monte_carlo"
    return quant, negatives, active, float(value), source, err


def run_experiment(cfg: ExperimentConfig):
    """Run one quantization without writing files.

    Returns ``(report, trace)``; ``trace`` is None for the closed-form method.
    """
    start = time.perf_counter()
    seed = cfg.sgd.seed
    trace, running, iterations, nudges, m = None, None, 0, 0, None
    if cfg.method is Method.CLOSED_FORM:
        t = NormalTargetSpec(cfg.target.mean, cfg.target.std, cfg.kernel.ell)
        res = deterministic_optimize(t, cfg.n_points, WeightMode.SUM_TO_ONE)
        quant, iterations = res.quantization, res.iterations
        status = "ok" if res.converged else "not_converged"
        extra_negatives = 0
    elif cfg.method is Method.SGD:
        res = sgd_quantize(cfg.kernel, cfg.target, cfg.sgd)
        quant, trace, running, m = res.quantization, res.trace, res.running_mmd_sq, res.m
        iterations, nudges, status = res.state.iter, res.nudges, "ok"
        extra_negatives = 0
    else:
        res = sgd_quantize_penalized(cfg.kernel, cfg.target, cfg.sgd)
        quant, trace, running = res.quantization, res.trace, res.running_objective
        iterations, nudges, status = cfg.sgd.max_iters, res.nudges, "ok"
        extra_negatives = int(np.count_nonzero(res.mu < -NEGATIVE_TOL))
    quant, negatives, active, value, source, err = _finalize(cfg, quant, m, seed)
    report = MmdReport(
        config=cfg.echo(),
        points=[float(v) for v in quant.points],
        weights=[float(v) for v in quant.weights],
        weight_kind=quant.kind.value,
        mmd=math.sqrt(max(value, 0.0)),
        mmd_sq=value,
        mmd_source=source,
        mmd_std_error=err,
        negative_weight_count=negatives + extra_negatives,
        active_set=[int(i) for i in active],
        running_mmd_sq=None if running is None or math.isnan(running) else float(running),
        iterations=int(iterations),
        nudges=int(nudges),
        status=status,
        wall_time=time.perf_counter() - start,
    )
    return report, trace


def write_points_csv(path, quant: Quantization) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POINTS_HEADER)
        for i, (x, p) in enumerate(zip(quant.points, quant.weights)):
            w.writerow([i, format_float(x), format_float(p)])


def read_points_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return (np.array([float(r["x"]) for r in rows]), np.array([float(r["p"]) for r in rows]))


def write_trace_csv(path, trace, n: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "running_mmd_sq"] + [f"x_{i}" for i in range(n)])
        for t, running, pts in zip(trace.t, trace.running, trace.points):
            w.writerow([t, format_float(running)] + [format_float(v) for v in pts])


def cmd_quantize(cfg: ExperimentConfig) -> MmdReport:
    """Run one experiment and write its files into ``cfg.output_dir``.

    On a numerical abort the partial trace is written before re-raising.
    """
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    try:
        report, trace = run_experiment(cfg)
    except NumericalAbort as exc:
        if exc.trace is not None:
            write_trace_csv(out / "trace.csv", exc.trace, cfg.n_points)
        (out / "report.json").write_text(json.dumps(
            {"config": cfg.echo(), "status": "numerical_abort", "message": str(exc)},
            indent=2, sort_keys=True) + "\n", encoding="utf-8")
        raise
    quant = report.quantization()
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    write_points_csv(out / "points.csv", quant)
    if trace is not None:
        write_trace_csv(out / "trace.csv", trace, cfg.n_points)
    if cfg.plots:
        from .plotting import write_density_svg, write_embedding_svg

        title = f"{cfg.target.label}, {cfg.kernel.label}, n={cfg.n_points}"
        write_density_svg(out / "density.svg", cfg.target, quant, title)
        write_embedding_svg(out / "embedding.svg", cfg.target, cfg.kernel, quant,
                            seed=cfg.sgd.seed, title=title)
    return report


def _run_cell(cell):
    index, cfg = cell
    row = {"target": cfg.target.label, "ell": format_float(cfg.kernel.ell),
           "nu": "inf" if math.isinf(cfg.kernel.nu) else format_float(cfg.kernel.nu),
           "n": str(cfg.n_points), "method": cfg.method.value}
    try:
        report = cmd_quantize(cfg)
        row.update(mmd=format_float(report.mmd), status=report.status)
    except NumericalAbort:
        row.update(mmd="nan", status="numerical_abort")
    except QuantizationError as exc:
        row.update(mmd="nan", status=f"error:{type(exc).__name__}")
    return index, row


def sweep_cells(targets, ells, nus, ns, method, base: SgdConfig, output_dir, plots=False):
    """Configurations of a sweep in row order, each with its derived seed."""
    cells = []
    for target in targets:
        for ell in ells:
            for nu in nus:
                for n in ns:
                    index = len(cells)
                    sgd = SgdConfig(**{**asdict(base), "n_points": n,
                                       "seed": derive_seed(base.seed, index)})
                    cfg = ExperimentConfig(target, make_kernel(ell, nu), n, method, sgd,
                                           Path(output_dir) / f"cell-{index:03d}", plots)
                    cells.append((index, cfg))
    return cells


def cmd_sweep(targets, ells=(0.1, 0.5), nus=(0.5, 2.5, math.inf), ns=(5,), method=Method.SGD,
              base: SgdConfig | None = None, output_dir=DEFAULT_OUTPUT, workers: int = 1,
              plots: bool = False) -> list[dict]:
    """Run every cell and write ``sweep.csv``; failed cells keep their row."""
    base = SgdConfig(n_points=1) if base is None else base
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    cells = sweep_cells(targets, ells, nus, ns, Method(method), base, output_dir, plots)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    rows = [row for _, row in sorted(results, key=lambda r: r[0])]
    with open(output_dir / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, SWEEP_HEADER, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return rows


# ---------------------------------------------------------------- argument parsing

def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _target(text):
    try:
        return parse_target(text)
    except DomainError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _list_of(conv):
    def parse(text):
        sep = ";" if (";" in text or ":" in text) else ","
        return [conv(part) for part in text.split(sep) if part.strip()]
    return parse


def _add_sgd_options(p):
    p.add_argument("--method", choices=[m.value for m in Method])
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--lr-offset", type=_positive_float)
    p.add_argument("--lr-scale", type=_positive_float)
    p.add_argument("--cost-variant", choices=["c", "c_prime"])
    p.add_argument("--stop-window", type=_positive_int)
    p.add_argument("--stop-rel-tol", type=float)
    p.add_argument("--trace-stride", type=_positive_int)
    p.add_argument("--output-dir")
    p.add_argument("--plots", action=argparse.BooleanOptionalAction)
    p.add_argument("--config", help="key = value file; command-line flags take precedence")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmdquant", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    q = sub.add_parser("quantize", help="run one quantization",
                       argument_default=argparse.SUPPRESS)
    q.add_argument("--target", type=_target, help="e.g. normal:0,1  uniform:0,1  exponential:1")
    q.add_argument("--ell", type=_positive_float, help="kernel bandwidth")
    q.add_argument("--nu", type=_positive_float, help="Matérn smoothness; inf for Gaussian")
    q.add_argument("--n", type=_positive_int, help="number of support points")
    _add_sgd_options(q)
    s = sub.add_parser("sweep", help="grid of quantizations", argument_default=argparse.SUPPRESS)
    s.add_argument("--targets", type=_list_of(_target),
                   help="semicolon-separated when targets carry parameters")
    s.add_argument("--ells", type=_list_of(_positive_float))
    s.add_argument("--nus", type=_list_of(_positive_float))
    s.add_argument("--ns", type=_list_of(_positive_int))
    s.add_argument("--workers", type=_positive_int)
    _add_sgd_options(s)
    c = sub.add_parser("check", help="run the invariant suite")
    c.add_argument("--seed", type=int, default=0)
    return parser


QUANTIZE_DEFAULTS = dict(target=Normal(), ell=0.5, nu=math.inf, n=5, method="sgd")
SWEEP_DEFAULTS = dict(targets=[Normal()], ells=[0.1, 0.5], nus=[0.5, 2.5, math.inf], ns=[5],
                      method="sgd", workers=1)
_SGD_KEYS = ("seed", "max_iters", "lr_offset", "lr_scale", "cost_variant", "stop_window",
             "stop_rel_tol", "trace_stride")
_BOOL_KEYS = {"plots"}


def _reject_duplicates(parser, argv):
    seen = set()
    for tok in argv:
        if tok.startswith("--"):
            name = tok[2:].split("=", 1)[0]
            name = name[3:] if name.startswith("no-") and name[3:] in _BOOL_KEYS else name
            if name in seen:
                parser.error(f"option --{name} given more than once")
            seen.add(name)


def _config_tokens(parser, path):
    tokens = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        parser.error(f"cannot read config file: {exc}")
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            parser.error(f"{path}:{lineno}: expected key = value")
        key = key.strip().replace("_", "-")
        value = value.strip()
        if key.replace("-", "_") in _BOOL_KEYS:
            tokens.append(f"--{key}" if value.lower() in ("1", "true", "yes") else f"--no-{key}")
        else:
            tokens += [f"--{key}", value]
    return tokens


def parse_args(argv):
    """Parse ``argv`` into ``(command, options)`` merging defaults, file and flags."""
    parser = build_parser()
    _reject_duplicates(parser, argv)
    cli = vars(parser.parse_args(argv))
    command = cli.pop("command")
    if command == "check":
        return command, cli
    opts = dict(QUANTIZE_DEFAULTS if command == "quantize" else SWEEP_DEFAULTS)
    if "config" in cli:
        from_file = vars(parser.parse_args([command] + _config_tokens(parser, cli.pop("config"))))
        from_file.pop("command")
        from_file.pop("config", None)
        opts.update(from_file)
    opts.update(cli)
    opts.setdefault("output_dir", os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))
    opts.setdefault("plots", command == "quantize")
    return command, opts


def _sgd_config(opts, n):
    kwargs = {k: opts[k] for k in _SGD_KEYS if k in opts}
    return SgdConfig(n_points=n, **kwargs)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        command, opts = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if command == "check":
            from .checks import run_invariant_suite

            results = run_invariant_suite(opts["seed"])
            for r in results:
                print(r.line())
            return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED
        if command == "quantize":
            cfg = ExperimentConfig(opts["target"], make_kernel(opts["ell"], opts["nu"]),
                                   opts["n"], opts["method"], _sgd_config(opts, opts["n"]),
                                   opts["output_dir"], opts["plots"])
            report = cmd_quantize(cfg)
            print(f"mmd {format_float(report.mmd)} ({report.mmd_source}), "
                  f"{report.negative_weight_count} negative weights, status {report.status}")
            print(f"wrote {cfg.output_dir}")
            return EXIT_OK
        rows = cmd_sweep(opts["targets"], opts["ells"], opts["nus"], opts["ns"], opts["method"],
                         _sgd_config(opts, 1), opts["output_dir"], opts["workers"], opts["plots"])
        failed = sum(r["status"] != "ok" for r in rows)
        print(f"{len(rows)} cells, {failed} failed; wrote {Path(opts['output_dir']) / 'sweep.csv'}")
        return EXIT_OK if failed == 0 else EXIT_FAILED
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, ValueError) as exc:
        print(f"mmdquant: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
