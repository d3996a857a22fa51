"""python -m gespfactor <subcommand> ..."""

import sys

from gespfactor.cli import main

sys.exit(main())
