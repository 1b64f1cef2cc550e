#!/usr/bin/env python3

import sys
from pathlib import Path

# Add the src directory to the Python path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from instrument_selection.main import main

if __name__ == "__main__":
    sys.exit(main())
