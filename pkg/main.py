#!/usr/bin/env python3
"""
Root entry point: python main.py run|sweep|converge <config> ...
"""

import sys

from src.main import main

if __name__ == "__main__":
    sys.exit(main())
