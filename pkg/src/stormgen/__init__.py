"""stormgen: spatio-temporal stochastic generator for extreme rainfall.

EGPD marginals for rainfall intensity, an r-Pareto dependence model with a
non-separable advection-aware variogram, composite-likelihood inference from
joint exceedances, and exact conditional simulation of moving episodes on
regular grids.
"""

from .dependence import (AdvectionTransform, VariogramParams, Velocity, cap_speed,
                         chi_r, inverse_chi, transform_advection, variogram)
from .episodes import (Episode, EpisodeCatalog, EpisodeConfig, LagClasses,
                       count_joint_exceedances, lag_classes_for, select_episodes,
                       threshold_from_quantile)
from .inference import (ExtendedParams, FitResult, composite_loglik, fit_variogram,
                        jackknife_months, wls_initialize)
from .marginals import (CensoringSpec, EgpdParams, MarginalModel, egpd_cdf, egpd_pdf,
                        egpd_quantile, fit_egpd_censored, fit_marginal_model, gpd_sf,
                        mixed_cdf, mixed_quantile)
from .simulation import (GridSpec, SimulationDomain, build_covariance, generate_episode,
                         simulate_grid_ensemble, simulate_rpareto, standardize_G)

__all__ = [
    "AdvectionTransform", "CensoringSpec", "EgpdParams", "Episode", "EpisodeCatalog",
    "EpisodeConfig", "ExtendedParams", "FitResult", "GridSpec", "LagClasses",
    "MarginalModel", "SimulationDomain", "VariogramParams", "Velocity",
    "build_covariance", "cap_speed", "chi_r", "composite_loglik",
    "count_joint_exceedances", "egpd_cdf", "egpd_pdf", "egpd_quantile",
    "fit_egpd_censored", "fit_marginal_model", "fit_variogram", "generate_episode",
    "gpd_sf", "inverse_chi", "jackknife_months", "lag_classes_for", "mixed_cdf",
    "mixed_quantile", "select_episodes", "simulate_grid_ensemble", "simulate_rpareto",
    "standardize_G", "threshold_from_quantile", "transform_advection", "variogram",
    "wls_initialize",
]
