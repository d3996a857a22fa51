#!/usr/bin/env python3
"""
gespfactor: coloring and whitening of generalized stochastic processes.
Entry point for the batch CLI; see gespfactor/cli.py for the subcommands.

    python run.py roundtrip --preset gaussian --out out/gaussian
"""

import sys

from gespfactor.cli import main

if __name__ == '__main__':
    sys.exit(main())
