# conftest.py
# -*- coding: utf-8 -*-
"""
Keep the project root (next to app/) on sys.path so `import app.*`
works from the tests, and register the markers the suite uses.
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale reproduction runs (minutes)")
