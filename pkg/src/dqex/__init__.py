"""Diversification quotients based on expectiles."""
from .dq import (
    DqReport,
    adjusted_level,
    dq_es,
    dq_ex,
    dq_ex_tilted,
    dq_ex_upper_half,
    dq_report,
    dq_var,
    dr,
    marginal_risks,
)
from .risk_core import (
    LevelError,
    LossSample,
    RiskLevel,
    SampleError,
    ScalarSample,
    es_empirical,
    expectile,
    lower_partial_expectation,
    omega_ratio,
    tilted_cdf,
    upper_partial_expectation,
    var_empirical,
)

__version__ = "0.1.0"
