#!/usr/bin/env python3
"""Run the bundled scenario suite plus a randomized-walk batch.

Thin launcher around ``uvcguard reference-suite`` so the whole safety
story (coverage map, scenarios A-D, the two-midnight schedule run and the
fuzz batch) can be reproduced with one command:

    python3 scripts/run_reference_suite.py --out runs/suite --fuzz 200

Any extra arguments are passed straight through to the subcommand.
"""

import sys

from uvcguard.cli import main

if __name__ == "__main__":
    sys.exit(main(["reference-suite", *sys.argv[1:]]))
