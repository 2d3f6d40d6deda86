"""Command-line interface.

::

    mice simulate --config run.cfg --out sim/
    mice estimate --config run.cfg --out est/      # exit 0 converged, 3 iteration-capped
    mice evaluate --config run.cfg --out eval/
    mice scenario --config study.cfg --out study/

Any command re-run with the same config, seed and inputs rewrites
byte-identical files, whatever ``--threads`` is.  Only ``timing.tsv``
(written by ``estimate --timing``) records wall-clock time.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .estimators import Mode, mice_estimate
from .evaluation import (
    UndefinedRate,
    auc,
    mae,
    method,
    per_layer_rmse,
    rmse,
    roc_curve,
    run_scenario,
    scenario,
    temporal_precision,
)
from .graphon import GRAPHON_VERSION, RNG_NAME, builtin_graphon, simulate
from .io import (
    FORMAT_VERSION,
    FormatError,
    atomic_write,
    format_key_values,
    read_edge_lists,
    read_tensor,
    sha256,
    write_latents,
    write_tensor,
    write_tsv,
)
from .tensors import AdjacencyTensor, MaskTensor, ProbabilityTensor, apply_mask

log = logging.getLogger("mice")

THREADS_ENV = "MICE_THREADS"
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 3

TRACE_COLUMNS = ["m", "delta_p"]
TIMING_COLUMNS = ["m", "wall_time_s"]
REPORT_COLUMNS = ["metric", "value"]
LAYER_COLUMNS = ["layer", "rmse", "mae"]
ROC_COLUMNS = ["tau", "fpr", "tpr"]
SCENARIO_COLUMNS = ["grid", "value", "method", "replications",
                    "rmse_mean", "rmse_se", "mae_mean", "mae_se"]
REPLICATION_COLUMNS = ["grid", "value", "replication", "seed", "method",
                       "rmse", "mae", "iterations", "converged"]

ADJACENCY_FILE = "adjacency.mlt"
P_TRUE_FILE = "p_true.mlt"
MASK_FILE = "mask.mlt"
ESTIMATE_FILE = "estimate.mlt"


class CliError(Exception):
    pass


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise CliError(f"{THREADS_ENV}={env!r} is not an integer") from None
        if value < 1:
            raise CliError(f"{THREADS_ENV} must be >= 1")
        return value
    return 1


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_overrides(mode=args.mode.upper() if args.mode else None, seed=args.seed)


def _out_dir(args, cfg: RunConfig) -> Path:
    if args.out:
        return Path(args.out)
    p = cfg.path("out")
    if p is None:
        raise CliError("no output directory: pass --out or set 'out' in the config")
    return p


def _require(cfg: RunConfig, key: str, why: str) -> Path:
    p = cfg.path(key)
    if p is None:
        raise CliError(f"missing input '{key}' ({why})")
    if not p.exists():
        raise CliError(f"input '{key}' not found: {p}")
    return p


def _echo(cfg: RunConfig, keys) -> list[tuple[str, object]]:
    return [(k, getattr(cfg, k)) for k in keys if getattr(cfg, k) is not None]


def _tuple_text(value) -> str:
    return ",".join(str(v) for v in value)


# ----------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    if cfg.graphon is None or cfg.n is None or cfg.K is None:
        raise CliError("simulate needs 'graphon', 'n' and 'K' in the config")
    model = builtin_graphon(cfg.graphon)
    latents, P, A = simulate(model, cfg.n, cfg.K, cfg.seed)
    write_tensor(out / P_TRUE_FILE, P)
    write_tensor(out / ADJACENCY_FILE, A)
    write_latents(out / "latents.tsv", latents)
    items = [("format_version", FORMAT_VERSION), ("graphon", model.label),
             ("n", cfg.n), ("K", cfg.K), ("seed", cfg.seed)]
    if cfg.rho is not None:
        from .evaluation import generate_mask

        mask_seed = cfg.seed if cfg.mask_seed is None else cfg.mask_seed
        write_tensor(out / MASK_FILE, generate_mask(cfg.n, cfg.K, cfg.rho, mask_seed))
        items += [("rho", cfg.rho), ("mask_seed", mask_seed)]
    header = (f"# simulate manifest; rng {RNG_NAME}; graphons {GRAPHON_VERSION}\n"
              f"# re-run with: mice simulate --config manifest.txt --out <dir>\n")
    atomic_write(out / "manifest.txt", header + format_key_values(items))
    log.info("simulated %s n=%d K=%d seed=%d -> %s", model.label, cfg.n, cfg.K, cfg.seed, out)
    return EXIT_OK


def _load_adjacency(cfg: RunConfig) -> AdjacencyTensor:
    if cfg.adjacency is not None:
        return read_tensor(_require(cfg, "adjacency", "observed network"), AdjacencyTensor)
    if cfg.edge_list is not None:
        return read_edge_lists(_require(cfg, "edge_list", "observed network"))
    raise CliError("missing input 'adjacency' or 'edge_list'")


def cmd_estimate(cfg: RunConfig, out: Path, threads: int = 1, timing: bool = False) -> int:
    A = _load_adjacency(cfg)
    observed = A
    if cfg.mask is not None:
        M = read_tensor(_require(cfg, "mask", "observation mask"), MaskTensor)
        observed = apply_mask(A, M)
    mode = Mode.parse(cfg.mode)
    ncfg = cfg.neighborhood(threads=threads)
    P_true = None
    if mode is Mode.ORACLE:
        P_true = read_tensor(_require(cfg, "p_true", "ORACLE mode needs the true tensor"),
                             ProbabilityTensor)
    P0 = None
    if cfg.p_init is not None:
        P0 = read_tensor(_require(cfg, "p_init", "initial estimate"), ProbabilityTensor)
    try:
        est, trace = mice_estimate(observed, P0, ncfg, P_true=P_true)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    write_tensor(out / ESTIMATE_FILE, est)
    write_tsv(out / "trace.tsv", TRACE_COLUMNS, [(r.m, r.delta) for r in trace.records])
    if timing:
        write_tsv(out / "timing.tsv", TIMING_COLUMNS, [(r.m, r.wall_time) for r in trace.records])
    inputs = [(f"sha256.{k}", sha256(cfg.path(k)))
              for k in ("adjacency", "edge_list", "mask", "p_true", "p_init")
              if cfg.path(k) is not None and cfg.path(k).is_file()]
    summary = [("mode", mode.value), ("n", A.n), ("K", A.K), ("s", trace.s), ("t", trace.t),
               ("D_i", cfg.D_i), ("G_k", cfg.G_k), ("delta_0", cfg.delta_0),
               ("max_iters", cfg.max_iters), ("mask_aware", cfg.mask_aware),
               ("exclude_self_pairs", cfg.exclude_self_pairs),
               ("iterations", trace.iterations), ("converged", trace.converged)]
    atomic_write(out / "estimate_manifest.txt",
                 f"# estimate run; format {FORMAT_VERSION}\n" + format_key_values(summary + inputs))
    if not trace.converged:
        log.warning("delta_P did not reach %g within %d iterations (last %.3e)",
                    cfg.delta_0, cfg.max_iters, trace.deltas[-1] if trace.deltas else float("nan"))
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    if cfg.n_grid or cfg.K_grid:
        return cmd_scenario(cfg, out, threads)
    est = read_tensor(_require(cfg, "estimate", "estimate to evaluate"), ProbabilityTensor)
    report: list[tuple[str, object]] = []
    did = False
    if cfg.p_true is not None:
        P = read_tensor(_require(cfg, "p_true", "ground truth"), ProbabilityTensor)
        _same_shape(est, P, "p_true")
        report += [("rmse", rmse(est, P)), ("rmse_x100", 100.0 * rmse(est, P)),
                   ("mae", mae(est, P))]
        layer_rmse = per_layer_rmse(est, P)
        layer_mae = [mae(est.data[k:k + 1], P.data[k:k + 1]) for k in range(P.K)]
        write_tsv(out / "per_layer.tsv", LAYER_COLUMNS,
                  [(k + 1, layer_rmse[k], layer_mae[k]) for k in range(P.K)])
        did = True
    if cfg.mask is not None:
        A = _load_adjacency(cfg)
        M = read_tensor(_require(cfg, "mask", "observation mask"), MaskTensor)
        _same_shape(est, A, "adjacency")
        _same_shape(est, M, "mask")
        taus = None
        if cfg.tau_grid != 201:
            taus = np.linspace(0.0, 1.0, cfg.tau_grid)
        try:
            pts = roc_curve(est, A, M, taus if taus is not None else None)
        except UndefinedRate as exc:
            report.append(("auc_diagnostic", str(exc).replace("\t", " ")))
        else:
            write_tsv(out / "roc.tsv", ROC_COLUMNS, [(p.tau, p.fpr, p.tpr) for p in pts])
            report.append(("auc", auc(pts)))
        did = True
    elif cfg.adjacency_next is not None:
        A0 = _load_adjacency(cfg)
        A1 = read_tensor(_require(cfg, "adjacency_next", "next-epoch network"), AdjacencyTensor)
        _same_shape(est, A0, "adjacency")
        _same_shape(est, A1, "adjacency_next")
        try:
            report.append(("precision", temporal_precision(est, A0, A1, cfg.tau)))
        except UndefinedRate as exc:
            report.append(("precision_diagnostic", str(exc)))
        report.append(("tau", cfg.tau))
        did = True
    if not did:
        raise CliError("nothing to evaluate: set 'p_true', or 'mask' (+ adjacency), "
                       "or 'adjacency_next' (+ adjacency)")
    write_tsv(out / "report.tsv", REPORT_COLUMNS, report)
    inputs = [(f"sha256.{k}", sha256(cfg.path(k)))
              for k in ("estimate", "p_true", "adjacency", "edge_list", "mask", "adjacency_next")
              if cfg.path(k) is not None and cfg.path(k).is_file()]
    echo = _echo(cfg, ("tau", "tau_grid"))
    atomic_write(out / "provenance.txt",
                 f"# evaluate run; format {FORMAT_VERSION}\n" + format_key_values(echo + inputs))
    return EXIT_OK


def _same_shape(a, b, what: str) -> None:
    if a.shape != b.shape:
        raise CliError(f"inconsistent dimensions: estimate {a.shape} vs {what} {b.shape}")


def cmd_scenario(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    if cfg.graphon is None:
        raise CliError("scenario needs 'graphon'")
    if cfg.n_grid:
        grid_name, grid, fixed = "n", cfg.n_grid, cfg.K
    elif cfg.K_grid:
        grid_name, grid, fixed = "K", cfg.K_grid, cfg.n
    else:
        raise CliError("scenario needs 'n_grid' or 'K_grid'")
    if fixed is None:
        raise CliError(f"scenario over {grid_name} needs the fixed dimension "
                       f"'{'K' if grid_name == 'n' else 'n'}'")
    ncfg = cfg.neighborhood()
    spec = scenario(cfg.graphon, grid_name, grid, fixed, replications=cfg.replications,
                    methods=tuple(method(m, ncfg) for m in cfg.methods),
                    base_seed=cfg.base_seed)
    report = run_scenario(spec, threads=threads)
    write_tsv(out / "scenario.tsv", SCENARIO_COLUMNS,
              [(r.grid_name, r.grid_value, r.method, r.replications,
                r.rmse_mean, r.rmse_se, r.mae_mean, r.mae_se) for r in report.rows])
    reps = sorted(report.replications, key=lambda r: (grid.index(r.grid_value), r.replication,
                                                      cfg.methods.index(r.method)))
    write_tsv(out / "replications.tsv", REPLICATION_COLUMNS,
              [(grid_name, r.grid_value, r.replication, r.seed, r.method, r.rmse, r.mae,
                "" if r.iterations is None else r.iterations,
                "" if r.converged is None else r.converged) for r in reps])
    atomic_write(out / "table.txt", _render_table(report))
    echo = _echo(cfg, ("graphon", "mode", "n", "K", "D_i", "G_k", "s", "t", "delta_0",
                       "max_iters", "replications", "base_seed"))
    echo += [(grid_name + "_grid", _tuple_text(grid)), ("methods", _tuple_text(cfg.methods))]
    atomic_write(out / "provenance.txt",
                 f"# scenario run; format {FORMAT_VERSION}; graphons {GRAPHON_VERSION}\n"
                 + format_key_values(echo))
    return EXIT_OK


def _render_table(report) -> str:
    """RMSE x100 with standard errors in parentheses, one row per grid value."""
    names = [m.name for m in report.spec.methods]
    head = f"{report.spec.grid_name:>6}  " + "  ".join(f"{n:>14}" for n in names)
    lines = [f"# RMSE (x100), {report.spec.graphon.label}, "
             f"{report.spec.replications} replications", head]
    for value in report.spec.grid:
        cells = []
        for name in names:
            row = next(r for r in report.rows if r.grid_value == value and r.method == name)
            cells.append(f"{100 * row.rmse_mean:7.2f} ({100 * row.rmse_se:.2f})".rjust(14))
        lines.append(f"{value:>6}  " + "  ".join(cells))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration")
    common.add_argument("--mode", choices=["MICE", "ICE", "ORACLE", "mice", "ice", "oracle"],
                        help="estimator mode (overrides config)")
    common.add_argument("--seed", type=int, help="random seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--threads", type=int,
                        help=f"worker threads; default ${THREADS_ENV} or 1. Never changes results")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mice", description=__doc__.split("\n")[0] if __doc__ else None)
    p.add_argument("--version", action="version", version=f"mice {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="sample a network from a graphon")
    est = sub.add_parser("estimate", parents=[common], help="estimate connection probabilities")
    est.add_argument("--timing", action="store_true", help="also write timing.tsv")
    sub.add_parser("evaluate", parents=[common], help="score an estimate")
    sub.add_parser("scenario", parents=[common], help="replicated simulation study")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = _threads(args)
        if threads < 1:
            raise CliError("--threads must be >= 1")
        cfg = _config(args)
        out = _out_dir(args, cfg)
        # BLAS stays single-threaded; parallelism is ours and result-neutral
        with threadpool_limits(limits=1):
            if args.command == "simulate":
                return cmd_simulate(cfg, out, threads)
            if args.command == "estimate":
                return cmd_estimate(cfg, out, threads, timing=args.timing)
            if args.command == "evaluate":
                return cmd_evaluate(cfg, out, threads)
            return cmd_scenario(cfg, out, threads)
    except (CliError, ConfigError, FormatError, OSError) as exc:
        print(f"mice {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
