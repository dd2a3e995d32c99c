"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: ``DataError`` -> 2,
``NumericError`` -> 3, anything argparse-level -> 1.
"""


class FGrayError(Exception):
    """Base class for all errors raised by this package."""


class DataError(FGrayError):
    """Invalid input data: bad schema, bad status codes, malformed CSV."""


class NumericError(FGrayError):
    """Numerical failure: overflow, degenerate weights, non-convergence."""
