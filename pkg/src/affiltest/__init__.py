"""Testing affiliation of bidders' private signals in first-price auctions.

The workflow: homogenize bids against observed auction heterogeneity
(:mod:`affiltest.hetero`), bin the normalized residuals on a grid
(:mod:`affiltest.grid`), fit the grid distribution with and without the
log-supermodularity constraints (:mod:`affiltest.estimate`), and compare
the two fits with a likelihood ratio whose null distribution is a mixture
of chi-squares (:mod:`affiltest.inference`).  :mod:`affiltest.simulate`
replicates the whole pipeline on known data generating processes.
"""

from .affiliation import (ConstraintSet, Tp2Constraint, check_tp2,
                          generate_constraints, tp2_residuals)
from .errors import (AffiltestError, DataFormatError,
                     DegenerateCovarianceError, DegenerateSampleError,
                     EmptySampleError, InvalidDensityError, SolverError)
from .estimate import (EstimateResult, SolverOptions, loglik, mle_affiliated,
                       mle_independent_symmetric, mle_symmetric,
                       mle_unconstrained)
from .grid import (CellArray, GridSpec, bin_many, bin_value, count_cells,
                   discretize_density, height_from_mass, mass_from_height,
                   normalize)
from .hetero import (AuctionRecord, BidTable, RegressionFit, fit_kernel,
                     fit_lad, fit_ls, read_bid_csv, residual_tuples,
                     scatter_points)
from .inference import (ChibarWeights, TestOptions, TestReport,
                        chibar_pvalue, chibar_weights, constraint_covariance,
                        decide, kodde_palm_bounds, lr_statistic, run_test)
from .simulate import (Dgp, McResult, affiliated_2x2_dgp, affiliated_3x3_dgp,
                       builtin_dgps, independent_skewed_dgp, mc_study,
                       sample_tuples, splitmix64, uniform_dgp,
                       violating_2x2_dgp)
from .symmetry import (OrbitModel, canonicalize, enumerate_orbits, lex_rank,
                       lex_unrank, num_orbits, orbit_size)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # grid
    "GridSpec", "CellArray", "normalize", "bin_value", "bin_many",
    "count_cells", "mass_from_height", "height_from_mass", "discretize_density",
    # symmetry
    "canonicalize", "orbit_size", "num_orbits", "lex_rank", "lex_unrank",
    "OrbitModel", "enumerate_orbits",
    # affiliation
    "Tp2Constraint", "ConstraintSet", "generate_constraints",
    "tp2_residuals", "check_tp2",
    # estimation
    "SolverOptions", "EstimateResult", "loglik", "mle_unconstrained",
    "mle_symmetric", "mle_independent_symmetric", "mle_affiliated",
    # inference
    "lr_statistic", "constraint_covariance", "ChibarWeights",
    "chibar_weights", "chibar_pvalue", "kodde_palm_bounds", "decide",
    "TestOptions", "TestReport", "run_test",
    # heterogeneity
    "AuctionRecord", "BidTable", "read_bid_csv", "scatter_points",
    "RegressionFit", "fit_ls", "fit_lad", "fit_kernel", "residual_tuples",
    # simulation
    "Dgp", "sample_tuples", "splitmix64", "uniform_dgp",
    "independent_skewed_dgp", "affiliated_2x2_dgp", "violating_2x2_dgp",
    "affiliated_3x3_dgp", "builtin_dgps", "McResult", "mc_study",
    # errors
    "AffiltestError", "EmptySampleError", "DegenerateSampleError",
    "DataFormatError", "InvalidDensityError", "SolverError",
    "DegenerateCovarianceError",
]
