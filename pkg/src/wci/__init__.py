"""Wasserstein-smooth conditional independence testing.

Exact discrete optimal transport, multiresolution grid functionals, the
binned U-statistic test of X independent of Y given Z, generative models
for null and alternative laws, and a Monte Carlo harness.
"""

__version__ = "0.1.0"

from .citest import TestConfig, TestReport, calibrate_zeta, run_test, statistic_T  # noqa: E402
from .measures import Dataset, DiscreteMeasure, make_measure, read_csv  # noqa: E402
from .ot import w1, w2, wasserstein  # noqa: E402

__all__ = [
    "Dataset", "DiscreteMeasure", "TestConfig", "TestReport", "calibrate_zeta", "make_measure",
    "read_csv", "run_test", "statistic_T", "w1", "w2", "wasserstein",
]
