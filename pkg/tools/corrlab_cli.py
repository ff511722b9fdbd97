#!/usr/bin/env python3
"""CLI helper: run a corrlab experiment from the repo root.
Usage: python tools/corrlab_cli.py <subcommand> [--preset NAME | --config FILE] [--out DIR]
Writes CSV + manifest under runs/ (or $CORRLAB_OUT_DIR) and prints the paths.
"""
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from corrlab.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
