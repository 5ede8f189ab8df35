#!/usr/bin/env python3
"""
annograph entry point.

Thin wrapper that ensures the annograph package is importable
(adds project root to sys.path) and delegates to annograph.cli.
"""

import sys
from pathlib import Path

# Add project root so `annograph` package is importable even without pip install
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from annograph.cli import main  # noqa: E402

if __name__ == "__main__":
    main()
