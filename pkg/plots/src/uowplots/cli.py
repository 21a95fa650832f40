"""Command line for rendering sweep CSVs into figures.

Exit codes: 0 success, 1 bad arguments (unknown figure id), 2 runtime
failure (unreadable/invalid CSV).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import FIGURE_IDS, FigureDataError, render_directory


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="uowplots", description="Render uowlab sweep CSVs into SVG figures")
    sub = parser.add_subparsers(dest="command", required=True)

    p_render = sub.add_parser("render", help="render one or more figures")
    p_render.add_argument("--csv", type=Path, required=True,
                          help="directory holding the sweep CSV files")
    p_render.add_argument("--out", type=Path, required=True,
                          help="directory for the rendered images")
    p_render.add_argument("--figure", action="append", default=None,
                          help=f"figure id (repeatable); one of: {', '.join(FIGURE_IDS)}")

    args = parser.parse_args(argv)

    if args.figure:
        unknown = [fid for fid in args.figure if fid not in FIGURE_IDS]
        if unknown:
            print(f"unknown figure ids: {', '.join(unknown)}", file=sys.stderr)
            return 1
    try:
        written = render_directory(args.csv, args.out, figures=args.figure)
    except (FigureDataError, OSError) as exc:
        print(f"render failed: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
