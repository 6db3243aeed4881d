"""Random invariant foliations for systems driven by multiplicative Levy noise.

The pipeline is: sample a two-sided stable path (:mod:`.levy_path`), build
the stationary OU realization (:mod:`.ou`), conjugate the system to a random
ODE (:mod:`.rds`), and compute fibers and manifolds with the Lyapunov-Perron
fixed point (:mod:`.lyapunov_perron`).  :mod:`.analysis` holds the checks.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DivergenceError,
    GridRangeError,
    LevyFoliationError,
    NonConvergenceError,
    ParameterDomainError,
)
from .levy_path import (
    SamplePath,
    StableParams,
    TimeGrid,
    generate_two_sided_path,
    sample_stable_increment,
    shift_path,
)
from .ou import OuRealization, stationary_z, sublinear_growth_report
from .rds import (
    State,
    SystemSpec,
    example5_system,
    integrate_rde,
    marcus_linear_solution,
    solve_original,
)
from .lyapunov_perron import (
    LPParams,
    fiber_lipschitz_bound,
    gap_condition,
    stable_fiber,
    transform_fiber_to_original,
    unstable_fiber,
    unstable_manifold,
)
from .analysis import (
    backward_decay_check,
    contraction_ratios,
    example5_oracle,
    forward_decay_check,
    invariance_residual,
    parallelism_check,
)
