"""
Exception types shared by the oracle, estimator and harness layers.
"""


class SpecError(ValueError):
    """Instance specification is malformed or a parameter is out of range."""


class EstimatorBudgetError(RuntimeError):
    """An exact estimator mode was requested beyond the enumeration budget."""


class ClassificationError(RuntimeError):
    """Layer discovery could not separate the marginal values into two levels."""


class OptEstimateError(RuntimeError):
    """Random-set estimate of OPT stayed at zero after all escalations."""
