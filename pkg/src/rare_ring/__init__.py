"""Rare-event probability estimation by sequential nearest-neighbour design."""

from .driver import AnalysisResult, RunConfig, run

__all__ = ["AnalysisResult", "RunConfig", "run"]
__version__ = "0.1.0"
