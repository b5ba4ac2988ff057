"""Empirical dependence and marginal diagnostics.

Everything here is a pure function of its inputs, and observed and simulated
data flow through identical code paths, so model checks compare like with
like. Outputs are plot-ready tables (lists of rows / arrays); rendering is
left to external tools.
"""

from __future__ import annotations

import numpy as np

from .dependence import inverse_chi
from .episodes import EpisodeCatalog, ExceedanceCounts, LagClasses, count_joint_exceedances
from .errors import DataError
from .marginals import CensoringSpec, EgpdParams, egpd_quantile


def empirical_extremogram(catalog: EpisodeCatalog, u: float,
                          lag_classes: LagClasses) -> list:
    """Per-class empirical extremogram chi_hat = K/N with pair counts.

    Returns rows (distance, temporal_lag, chi_hat, K, N); classes without
    trials carry chi_hat = NaN.
    """
    counts = count_joint_exceedances(catalog, u, lag_classes)
    chi = counts.chi_hat()
    rows = []
    for si in range(lag_classes.n_spatial):
        for ti, tau in enumerate(lag_classes.temporal_lags):
            rows.append((float(lag_classes.representative[si]), int(tau),
                         float(chi[si, ti]), int(counts.K[si, ti]), int(counts.N[si, ti])))
    return rows


def empirical_variogram(chi_rows) -> list:
    """Invert the extremogram table to empirical variogram values.

    Accepts the rows of :func:`empirical_extremogram` (or an
    ExceedanceCounts) and returns (distance, temporal_lag, gamma_hat, N)
    rows grouped so that one spatial curve per temporal lag can be plotted;
    classes with chi_hat of 0 or NaN are dropped.
    """
    if isinstance(chi_rows, ExceedanceCounts):
        lc = chi_rows.lag_classes
        chi = chi_rows.chi_hat()
        chi_rows = [(float(lc.representative[s]), int(t), float(chi[s, i]),
                     int(chi_rows.K[s, i]), int(chi_rows.N[s, i]))
                    for s in range(lc.n_spatial)
                    for i, t in enumerate(lc.temporal_lags)]
    out = []
    for dist, tau, chi_hat, _k, n in chi_rows:
        if not np.isfinite(chi_hat) or chi_hat <= 0:
            continue
        out.append((dist, tau, float(inverse_chi(chi_hat)), n))
    return sorted(out, key=lambda r: (r[1], r[0]))


def qq_egpd(values, params: EgpdParams, censoring: CensoringSpec | None = None,
            n_bootstrap: int = 500, n_levels: int = 200, rng=None) -> dict:
    """Model-vs-empirical quantiles with nonparametric bootstrap bands.

    Bootstrap resamples the positive values and recomputes the empirical
    quantiles only (no refitting); bands are the 2.5/97.5 percentiles.
    Degenerate (constant) samples are flagged instead of plotted.
    """
    values = np.asarray(values, dtype=float)
    pos = values[np.isfinite(values) & (values > 0)]
    if pos.size == 0:
        raise DataError("no positive values")
    if np.ptp(pos) == 0:
        return {"degenerate": True, "n": int(pos.size)}
    rng = rng or np.random.default_rng(0)
    m = min(n_levels, pos.size)
    levels = np.arange(1, m + 1) / (m + 1)
    emp = np.quantile(pos, levels)
    model = egpd_quantile(levels, params)
    out = {"degenerate": False, "levels": levels, "model": model, "empirical": emp,
           "n": int(pos.size),
           "censor_threshold": 0.0 if censoring is None else censoring.threshold}
    if n_bootstrap > 0:
        boot = np.empty((n_bootstrap, m))
        for b in range(n_bootstrap):
            boot[b] = np.quantile(rng.choice(pos, size=pos.size, replace=True), levels)
        out["band_lo"] = np.percentile(boot, 2.5, axis=0)
        out["band_hi"] = np.percentile(boot, 97.5, axis=0)
    return out


def trivariate_conditional(values, u: float, conditioning_site: int) -> np.ndarray:
    """P(X_s1 > u, X_s2 > u | X_cond > u) for every site pair, empirically.

    ``values`` is any (n_steps, n_sites) matrix: observed series or
    simulated episodes stacked along the time axis. Raises when the
    conditioning site never exceeds.
    """
    values = np.asarray(values, dtype=float)
    exceed = np.isfinite(values) & (values > u)
    cond = exceed[:, conditioning_site]
    n_cond = int(cond.sum())
    if n_cond == 0:
        raise DataError("conditioning site has no exceedances")
    sub = exceed[cond].astype(np.float64)
    return (sub.T @ sub) / n_cond


def cumulative_rain_distribution(episodes) -> np.ndarray:
    """Per-episode rainfall totals over all sites and steps (missing excluded).

    Accepts an EpisodeCatalog, an iterable of Episode objects, or an
    iterable of 2-D value arrays.
    """
    totals = []
    for ep in episodes:
        w = ep.window if hasattr(ep, "window") else np.asarray(ep, dtype=float)
        totals.append(float(np.nansum(w)) if np.isfinite(w).any() else 0.0)
    return np.asarray(totals)
