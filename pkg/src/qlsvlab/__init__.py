"""Cross-validating solver laboratory for quadratic local stochastic vol pricing."""

from qlsvlab.model import (
    MarketParams,
    QlsvModel,
    TransformedProblem,
    classify,
    normalize,
    transformed_call_problem,
    transformed_dnt_problem,
)

__all__ = [
    "MarketParams",
    "QlsvModel",
    "TransformedProblem",
    "classify",
    "normalize",
    "transformed_call_problem",
    "transformed_dnt_problem",
]

__version__ = "0.1.0"
