"""Command-line entry points.

Two scripts, each taking an input CSV path and an output image path
(PNG or SVG, chosen by extension).  Exit code 0 on success, 2 when the
input does not conform to its schema or cannot be read.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from . import __version__
from .plots import plot_convergence, plot_success_grid


def _run(kind: str, plot, description: str,
         argv: Optional[Sequence[str]]) -> int:
    parser = argparse.ArgumentParser(prog=f"figplots-{kind}",
                                     description=description)
    parser.add_argument("csv", help="input CSV path")
    parser.add_argument("output", help="output image path (.png or .svg)")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    args = parser.parse_args(argv)
    try:
        plot(args.csv, args.output)
    except (ValueError, OSError) as exc:
        print(f"figplots-{kind}: {exc}", file=sys.stderr)
        return 2
    return 0


def main_convergence(argv: Optional[Sequence[str]] = None) -> int:
    return _run("convergence", plot_convergence,
                "Render log-scale convergence panels from a trace CSV.",
                argv)


def main_success_grid(argv: Optional[Sequence[str]] = None) -> int:
    return _run("success-grid", plot_success_grid,
                "Render annotated success-rate tables from a grid CSV.",
                argv)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main_convergence())
