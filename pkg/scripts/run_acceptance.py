#!/usr/bin/env python3
"""Run the release gates outside pytest, one printed line per gate.

Exit code 0 when every gate passes, 1 otherwise.  The full run takes
roughly twenty minutes on one core.
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from test_acceptance import main

if __name__ == "__main__":
    sys.exit(main())
