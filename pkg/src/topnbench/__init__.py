"""Top-N recommendation benchmark: corpus handling, recommenders, metrics and an experiment harness."""
from __future__ import annotations

__version__ = "0.1.0"
