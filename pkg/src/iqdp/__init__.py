"""Interactive scalar quantization for distributed extremum computation."""

from iqdp.errors import (
    CapacityError,
    ConfigurationError,
    DomainError,
    InvalidQuantizerError,
    PolicyIncompleteError,
)
from iqdp.model import (
    Pmf,
    State,
    Target,
    induced_pmf,
    make_binomial,
    make_truncated_geometric,
    make_uniform,
    stage_cost,
    terminal,
    transitions,
)
from iqdp.solver import (
    SolveConfig,
    Solution,
    solve,
    solve_many,
    solve_with_feedback,
    sweep_lambda,
)
from iqdp.spaces import SearchSpace

__version__ = "0.1.0"
