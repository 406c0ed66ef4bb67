"""Command-line interface.

Subcommands
-----------

``figure1``
    Convergence traces for every (rank, stepsize) pair from a warm
    start; writes ``figure1.csv``.
``table1``
    Success-ratio grid over (stepsize, rank, perturbation size);
    writes ``table1.csv``.  Defaults to the reduced 20-trial mode;
    ``--full`` selects 100 trials per cell.
``decompose``
    Greedy rank-one deflation of a tensor file; writes the recovered
    factor matrix as CSV plus a key=value summary record.
``landscape``
    Closed-form critical-point table for a target with mutually
    orthogonal factors, read from a factors CSV; writes
    ``landscape.csv``.
``verify``
    Assumption, descent-inequality and residual/distance-sandwich
    reports per rank; writes one key=value record file per rank.

Every run also writes a ``*_manifest.txt`` recording the command,
package and library versions, and the full configuration.

Exit codes: 0 on success; 2 for configuration or input-file errors
(including argument parsing); 3 when the computation itself fails
numerically (divergent traces, incomplete decomposition).
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .deflation_decomposer import SospConfig, decompose
from .experiment_harness import (
    LANDSCAPE_COLUMNS,
    ExperimentConfig,
    landscape_rows,
    read_factors_csv,
    read_tensor_file,
    run_figure1,
    run_table1,
    verify_records,
    write_csv_rows,
    write_factors_csv,
    write_manifest,
    _fmt_number,
)
from .rank1_landscape import OrthogonalTarget

__all__ = ["main"]

_EXIT_OK = 0
_EXIT_CONFIG = 2
_EXIT_NUMERIC = 3

_REDUCED_TRIALS = 20
_FULL_TRIALS = 100


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symcp",
        description=("Factored gradient descent, landscape analysis and "
                     "deflation for symmetric third-order tensors."))
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="key=value config file (one pair per line)")
    common.add_argument("--seed", type=int, metavar="N",
                        help="master seed (overrides the config file)")
    common.add_argument("--out-dir", default=".", metavar="DIR",
                        help="directory for output files (default: .)")
    common.add_argument("--trials", type=int, metavar="N",
                        help="trials / Monte-Carlo samples per cell")
    common.add_argument("--iters", type=int, metavar="N",
                        help="gradient-descent iterations per run")

    sub.add_parser("figure1", parents=[common],
                   help="convergence traces per (rank, stepsize)")

    p_table = sub.add_parser("table1", parents=[common],
                             help="success-ratio grid")
    p_table.add_argument("--workers", type=int, default=1, metavar="N",
                         help="parallel worker processes (default: 1)")
    p_table.add_argument("--full", action="store_true",
                         help=f"run {_FULL_TRIALS} trials per cell instead "
                              f"of the reduced {_REDUCED_TRIALS}")

    p_dec = sub.add_parser("decompose", parents=[common],
                           help="greedy rank-one deflation of a tensor file")
    p_dec.add_argument("tensor", help="input tensor file (symtensor3 format)")
    p_dec.add_argument("--r-max", type=int, default=1, metavar="N",
                       help="maximum number of factors to extract "
                            "(default: 1)")
    p_dec.add_argument("--truth", metavar="PATH",
                       help="factors CSV with the planted factors; enables "
                            "per-factor error reporting")

    p_land = sub.add_parser("landscape", parents=[common],
                            help="critical points of the best rank-one "
                                 "approximation of an orthogonal target")
    p_land.add_argument("factors", help="factors CSV with mutually "
                                        "orthogonal columns")
    p_land.add_argument("--max-support", type=int, metavar="N",
                        help="only enumerate supports up to this size")

    sub.add_parser("verify", parents=[common],
                   help="assumption / descent / sandwich reports per rank")
    return parser


def _read_config_file(path: str) -> dict[str, str]:
    mapping: dict[str, str] = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ValueError(
                    f"{path}: line {line_no} is not a key=value pair: "
                    f"{text!r}")
            key, _, value = text.partition("=")
            mapping[key.strip()] = value.strip()
    return mapping


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge the config file with flag overrides into one config."""
    mapping: dict[str, str] = {}
    if args.config is not None:
        mapping = _read_config_file(args.config)
    cfg = ExperimentConfig.from_mapping(mapping)
    overrides: dict[str, object] = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.iters is not None:
        overrides["iters"] = args.iters
    if overrides:
        merged = cfg.as_mapping()
        merged.update({k: _fmt_number(v) for k, v in overrides.items()})
        cfg = ExperimentConfig.from_mapping(merged)
    return cfg


def _out_path(args: argparse.Namespace, name: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _write_record(path: str, record: dict) -> None:
    with open(path, "w") as fh:
        for key, value in record.items():
            fh.write(f"{key}={_fmt_number(value)}\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_figure1(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    rows = run_figure1(cfg, out_path=_out_path(args, "figure1.csv"))
    write_manifest(_out_path(args, "figure1_manifest.txt"), "figure1", cfg,
                   extra={"rows": len(rows)})
    metrics = np.asarray([row[3:] for row in rows], dtype=np.float64)
    if not np.all(np.isfinite(metrics)):
        print("figure1: non-finite metric in trace (divergent run)",
              file=sys.stderr)
        return _EXIT_NUMERIC
    return _EXIT_OK


def _cmd_table1(args: argparse.Namespace) -> int:
    if args.trials is None:
        args.trials = _FULL_TRIALS if args.full else _REDUCED_TRIALS
    cfg = _load_config(args)
    if args.workers < 1:
        raise ValueError("workers must be >= 1")
    run_table1(cfg, workers=args.workers,
               out_path=_out_path(args, "table1.csv"))
    write_manifest(_out_path(args, "table1_manifest.txt"), "table1", cfg,
                   extra={"workers": args.workers})
    return _EXIT_OK


def _cmd_decompose(args: argparse.Namespace) -> int:
    T = read_tensor_file(args.tensor)
    truth = read_factors_csv(args.truth) if args.truth is not None else None
    if truth is not None and truth.shape[0] != T.n:
        raise ValueError(
            f"truth factors have {truth.shape[0]} rows, tensor has "
            f"dimension {T.n}")
    sosp_cfg = SospConfig(seed=args.seed if args.seed is not None else 0)
    result = decompose(T, sosp_cfg, r_max=args.r_max, ground_truth=truth)
    write_factors_csv(_out_path(args, "decompose_factors.csv"),
                      result.factors)
    summary: dict = {
        "input": args.tensor,
        "n": T.n,
        "r_max": args.r_max,
        "status": result.status,
        "num_factors": result.num_factors,
        "residual_norm": result.residual_norm,
        "residual_history": ",".join(
            _fmt_number(float(v)) for v in result.residual_history),
    }
    if result.factor_errors is not None:
        summary["factor_errors"] = ",".join(
            _fmt_number(float(v)) for v in result.factor_errors)
        summary["max_factor_error"] = (
            float(np.max(result.factor_errors))
            if result.factor_errors.size else 0.0)
    _write_record(_out_path(args, "decompose_summary.txt"), summary)
    write_manifest(_out_path(args, "decompose_manifest.txt"), "decompose",
                   extra={"input": args.tensor, "r_max": args.r_max,
                          "seed": sosp_cfg.seed, "status": result.status})
    if result.status != "complete":
        print(f"decompose: stopped {result.status} with "
              f"{result.num_factors} factors, residual "
              f"{result.residual_norm:.3e}", file=sys.stderr)
        return _EXIT_NUMERIC
    return _EXIT_OK


def _cmd_landscape(args: argparse.Namespace) -> int:
    factors = read_factors_csv(args.factors)
    target = OrthogonalTarget.from_factors(factors)
    rows = landscape_rows(target, max_support=args.max_support)
    write_csv_rows(_out_path(args, "landscape.csv"), LANDSCAPE_COLUMNS, rows)
    write_manifest(_out_path(args, "landscape_manifest.txt"), "landscape",
                   extra={"input": args.factors, "n": target.n,
                          "r": target.r, "critical_points": len(rows)})
    return _EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    for record in verify_records(cfg):
        _write_record(_out_path(args, f"verify_r{record['r']}.txt"), record)
    write_manifest(_out_path(args, "verify_manifest.txt"), "verify", cfg)
    return _EXIT_OK


_COMMANDS = {
    "figure1": _cmd_figure1,
    "table1": _cmd_table1,
    "decompose": _cmd_decompose,
    "landscape": _cmd_landscape,
    "verify": _cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"symcp {args.command}: {exc}", file=sys.stderr)
        return _EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
