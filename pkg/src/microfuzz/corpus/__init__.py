"""Bundled target library: planted slow paths, benign controls, a sleep trap
and calibration targets.

Importing this package populates :data:`REGISTRY`. Ground-truth labels are
kept with the tests, not here, so nothing the engine loads can see them.
"""
from .base import REGISTRY
from . import bench, controls, decimal, regex, table, traps, xml  # noqa: F401  (registration)

REGISTRY.check()

__all__ = ["REGISTRY"]
