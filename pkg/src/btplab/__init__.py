"""Numerical laboratory for Brownian-time processes.

Builds discretized processes run on the random clock |B(t)|, their
excursion-based variants, and the quadrature, finite-difference, and Monte
Carlo instruments that verify their quantitative behaviour: the marginal
half-line representation, fourth-order parabolic residuals, exit-problem
identities, the half-derivative generator, and excursion-variant
convergence statistics.
"""

__version__ = "0.1.0"

from .compose import (
    ComposedPath,
    ExcursionDecomposition,
    bm_outer_factory,
    compose_btp,
    compose_ebtp,
    compose_kebtp,
    excursions,
    reflect,
)
from .convergence import (
    ScalingReport,
    ebtp_self_distance,
    holder_scaling,
    joint_law_distance,
    marginal_match_test,
)
from .errors import (
    AccuracyError,
    BudgetExceededError,
    CoverageError,
    DegenerateStatisticsError,
    InsufficientDataError,
    InvalidInputError,
    NumericalDomainError,
    OutOfRangeError,
)
from .exitlab import (
    ExitSample,
    ito_truncation_check,
    sample_iterated_exit,
    sample_iterated_exits,
    verify_thm2,
    verify_thm3,
    verify_thm4,
)
from .halfgen import HalfGenQuery, halfgen_mc, halfgen_quadrature, reversed_generator
from .kernels import (
    QuadratureSettings,
    btp_marginal,
    btp_marginal_dt,
    gauss_semigroup,
    heat_kernel,
    marginal_grid,
    reflected_kernel,
)
from .paths import (
    HALF_LAPLACIAN,
    GeneratorSpec,
    Path,
    TimeGrid,
    evaluate,
    refine_bridge,
    sample_bm,
    sample_diffusion,
)
from .pde import (
    Ball,
    ExitMoments,
    Interval,
    SpaceTimeGrid,
    bilaplacian_fd,
    dirichlet_solution,
    parabolic_residual,
    solve_exit_moments,
)
from .reporting import Estimate, VerificationReport, estimate_from_samples, summarize
from .seeding import Seed, as_seed
