"""Time-dependent Poisson random field model for polymorphism and divergence.

Modules
-------
types       parameter, grid, measure and count-table value types
moran       exact finite-population oracle and Monte Carlo
diffusion   Crank-Nicolson killed semigroup, absorption and dual quantities
spectral    neutral eigenfunction reference
prf         population PRF densities and fixation means
sampling    sample fates and expected DOHRS / DPRS tables
inference   Poisson likelihood and maximum-likelihood fitting
ingest      count tables from aligned coding sequences
"""

__version__ = "0.1.0"

from .types import (  # noqa: E402
    DOHRS, DPRS, CountTable, FiniteParams, Grid, InitialMeasure, ScaledParams,
    default_grid, scale_map,
)
from .diffusion import (  # noqa: E402
    KilledSemigroup, absorption_cdf, dual_entrance_cdf, dual_semigroup, green_kernel,
    heat_apply, scale_fn, speed_density, ultimate_fixation,
)
from .moran import (  # noqa: E402
    absorption_profile, chain_green, expected_site_counts, moran_step_matrix,
    simulate_divergence, simulate_field, stationary_omega,
)
from .spectral import spectral_reference  # noqa: E402
from .prf import (  # noqa: E402
    FixationMean, PrfDensity, equilibrium_density, fixation_mean, fixation_mean_alt,
    prf_density, prf_functional,
)
from .sampling import (  # noqa: E402
    ExpectedTable, SampleFate, legacy_means, new_spectrum, sample_fate, table_means,
)
from .inference import (  # noqa: E402
    FitConfig, FitResult, fit_mle, poisson_loglik, poisson_loglik_from_means, profile_ci,
)
from .ingest import Alignment, SiteClassification, classify_sites, count_tables, parse_alignment  # noqa: E402

__all__ = [name for name in dir() if not name.startswith("_")]
