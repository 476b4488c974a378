#!/usr/bin/env python3
"""
Submodular Adaptivity Harness
=============================

Runs the property suites, the low-adaptivity double greedy, adaptivity
curves and bound tables on the hard instance constructions.

Usage:
    python adaptivity-cli.py verify --instance instance.json
    python adaptivity-cli.py run-dg --instance '{"family": "directed_cut"}' --exact
    python adaptivity-cli.py adaptivity-curve --rounds-max 6 --trials 100 --out curve.csv
    python adaptivity-cli.py bounds --rounds-max 16

Logs go to stderr; results go to --out or stdout.
"""

import sys
from pathlib import Path

# Make the backend and shared packages importable from a checkout
sys.path.insert(0, str(Path(__file__).parent))

from backend.cli import main  # noqa: E402

if __name__ == '__main__':
    sys.exit(main())
