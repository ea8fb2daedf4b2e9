"""Estimators for loss probability and conditional excess."""

from .basic import is_estimate, naive_estimate
from .calibrate import ISParams, calibrate_is, is_weight
from .report import EstimateReport, Moments
from .rqmc import rqmc_driver
from .sis import (
    DEFAULT_SCHEDULE,
    DEFAULT_STRATA,
    AllocationState,
    StratificationGrid,
    build_grid,
    rqmc_sis_estimate,
    sis_estimate,
    strata_for_budget,
)
from .tau import find_tau

__all__ = [
    "AllocationState",
    "DEFAULT_SCHEDULE",
    "DEFAULT_STRATA",
    "EstimateReport",
    "ISParams",
    "Moments",
    "StratificationGrid",
    "build_grid",
    "calibrate_is",
    "find_tau",
    "is_estimate",
    "is_weight",
    "naive_estimate",
    "rqmc_driver",
    "rqmc_sis_estimate",
    "sis_estimate",
    "strata_for_budget",
]
