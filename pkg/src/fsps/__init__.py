"""Pseudospectral laboratory for fractional scalar-field ground states and
fractional Schrodinger-Poisson solution branches."""

__version__ = "0.1.0"

from .grid import (Field, Grid, SpectralField, boundary_mass_fraction,
                   gaussian_field, load_field, make_grid, radial_deviation,
                   radial_profile, save_field)
from .nonlinearity import (CRITICAL, SUBCRITICAL, NonlinearitySpec,
                           critical_exponent, eval_g, split, truncated,
                           verify_hypotheses)
from .poisson import (PoissonSolution, RieszKernelSpec, coupling_energy,
                      coupling_energy_spectral, poisson_direct_oracle,
                      riesz_constant, solve_poisson)
from .functionals import (EnergyBreakdown, PohozaevReport, ProblemSpec,
                          dilation_profile, full_energy, gradient,
                          limit_energy, pohozaev_residual)
from .spectral import (dilate, fractional_laplacian, gagliardo_seminorm,
                       hs_norm, lp_norm, radial_anisotropy,
                       singular_integral_oracle)
from .solvers import (Branch, BranchRecord, GroundStateResult, SolverConfig,
                      SolverError, branch_report, continue_branch,
                      ground_state_critical, ground_state_subcritical,
                      mountain_pass_level)
from .critical import (CutoffFamilyRecord, SobolevEstimate, TalentiSpec,
                       cutoff_family, gamma_eps_divergence, sobolev_constant,
                       strict_gap, talenti_field)
from .config import ConfigError, RunConfig, parse_config
from .runner import RunManifest, run_experiment
