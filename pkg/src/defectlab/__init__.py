"""Verification and simulation tools for Liouville and N=1 super-Liouville theories with type-II defects."""
from .defect_sim import SimConfig, drift_report, run
from .grassmann import GrassmannContext, GrassmannElement
from .liouville import DefectParams

__all__ = ["DefectParams", "GrassmannContext", "GrassmannElement", "SimConfig", "drift_report", "run"]
__version__ = "0.1.0"
