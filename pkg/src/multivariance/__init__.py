"""Distance multivariance: dependence measures and independence tests for n random vectors."""
from importlib import resources

from .centering import BlockSample, CenteredDistanceMatrix, centered_matrices, double_center
from .cndf import CndfSpec, parse_spec, suggest_gamma
from .errors import (
    ConfigError,
    EnumerationLimitError,
    InputError,
    MultivarianceError,
    NumericalError,
    ParameterError,
)
from .inference import (
    Method,
    Statistic,
    TestReport,
    montecarlo_test,
    permutation_test,
    test_multivariance_conservative,
    test_total_conservative,
)
from .multivariance import MultivarianceEstimates, compute, compute_batch
from .oracle import FiniteDistribution

__version__ = "0.1.0"


def data_path(name: str):
    """Path of a bundled fixture file, e.g. ``data_path("bernstein_10000.csv")``."""
    return resources.files(__name__).joinpath("data", name)
