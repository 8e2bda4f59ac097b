"""Micro-fuzzing of typed targets for algorithmic-complexity slowdowns."""

__version__ = "0.1.0"
