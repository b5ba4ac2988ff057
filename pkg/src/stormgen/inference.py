"""Composite-likelihood estimation of the dependence parameters.

Each non-missing observation inside an episode window is a Bernoulli trial:
it exceeds the threshold with probability given by the extremogram at its
exact space-time lag from the conditioning point, sheared by the episode's
(transformed) advection. Summing Bernoulli log-contributions over all
locations and episodes gives the composite log-likelihood, maximized over
the variogram parameters and, optionally, the two advection-transform
parameters.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .dependence import (AdvectionTransform, VariogramParams, Velocity,
                         chi_from_gamma, inverse_chi, transform_advection)
from .episodes import EpisodeCatalog, ExceedanceCounts, LagClasses, count_joint_exceedances
from .errors import ConvergenceError, DataError

_CHI_EPS = 1e-10          # clamp for chi inside logs
_Z975 = 1.959963984540054


@dataclass(frozen=True)
class ExtendedParams:
    theta: VariogramParams
    adv: AdvectionTransform

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.theta.as_array(), self.adv.as_array()])


@dataclass
class FitResult:
    params: ExtendedParams
    loglik: float
    n_episodes: int
    converged: bool
    n_iter: int
    message: str = ""
    eta_fixed: bool = False
    jackknife: dict | None = None


@dataclass
class _Trials:
    """Flattened per-location trial arrays for fast likelihood evaluation."""

    dx: np.ndarray
    dy: np.ndarray
    tau: np.ndarray
    k: np.ndarray             # float 0/1
    speed: np.ndarray         # empirical speed per location's episode
    ux: np.ndarray            # empirical unit direction (0 where speed = 0)
    uy: np.ndarray
    episode_index: np.ndarray
    n_episodes: int


def _build_trials(catalog: EpisodeCatalog, lag_classes: LagClasses, u: float) -> _Trials:
    dx, dy, tau, k, sp, ux, uy, ei = [], [], [], [], [], [], [], []
    tl = set(int(t) for t in lag_classes.temporal_lags)
    n_used = 0
    for ep in catalog:
        if ep.v_emp is None:
            continue
        rel = catalog.coords - ep.s0
        sbin = lag_classes.assign(np.hypot(rel[:, 0], rel[:, 1]))
        speed = ep.v_emp.speed
        uxe = ep.v_emp.vx / speed if speed > 0 else 0.0
        uye = ep.v_emp.vy / speed if speed > 0 else 0.0
        for t in range(ep.window.shape[0]):
            if t not in tl:
                continue
            row = ep.window[t]
            valid = np.isfinite(row) & (sbin >= 0)
            if t == 0:
                valid[ep.point_index] = False
            if not valid.any():
                continue
            m = int(valid.sum())
            dx.append(rel[valid, 0])
            dy.append(rel[valid, 1])
            tau.append(np.full(m, float(t)))
            k.append((row[valid] > u).astype(float))
            sp.append(np.full(m, speed))
            ux.append(np.full(m, uxe))
            uy.append(np.full(m, uye))
            ei.append(np.full(m, n_used, dtype=np.int32))
        n_used += 1
    if n_used == 0:
        raise DataError("no episodes with assigned velocities")
    cat = lambda xs: np.concatenate(xs) if xs else np.empty(0)
    return _Trials(dx=cat(dx), dy=cat(dy), tau=cat(tau), k=cat(k), speed=cat(sp),
                   ux=cat(ux), uy=cat(uy), episode_index=cat(ei), n_episodes=n_used)


def _loglik_trials(trials: _Trials, b1, b2, a1, a2, e1, e2, per_episode=False):
    mag = np.where(trials.speed > 0, e1 * trials.speed**e2, 0.0)
    hx = trials.dx - trials.tau * mag * trials.ux
    hy = trials.dy - trials.tau * mag * trials.uy
    h2 = hx * hx + hy * hy
    gamma = 2.0 * (b1 * h2**(0.5 * a1) + b2 * trials.tau**a2)
    chi = np.clip(chi_from_gamma(gamma), _CHI_EPS, 1.0 - _CHI_EPS)
    contrib = trials.k * np.log(chi) + (1.0 - trials.k) * np.log1p(-chi)
    if per_episode:
        out = np.zeros(trials.n_episodes)
        np.add.at(out, trials.episode_index, contrib)
        return out
    return float(contrib.sum())


def composite_loglik(params: ExtendedParams, catalog: EpisodeCatalog,
                     lag_classes: LagClasses, u: float) -> float:
    """Composite Bernoulli log-likelihood of the catalog's exceedance field.

    The success probability at each in-window location is the extremogram
    at that location's exact vector lag from the conditioning point, with
    the episode velocity mapped through the advection transform. chi is
    clamped to [1e-10, 1 - 1e-10] inside the logs.
    """
    trials = _build_trials(catalog, lag_classes, u)
    t = params.theta
    return _loglik_trials(trials, t.beta1, t.beta2, t.alpha1, t.alpha2,
                          params.adv.eta1, params.adv.eta2)


def composite_loglik_by_episode(params: ExtendedParams, catalog, lag_classes, u):
    trials = _build_trials(catalog, lag_classes, u)
    t = params.theta
    return _loglik_trials(trials, t.beta1, t.beta2, t.alpha1, t.alpha2,
                          params.adv.eta1, params.adv.eta2, per_episode=True)


def model_chi_by_class(params: ExtendedParams, catalog: EpisodeCatalog,
                       lag_classes: LagClasses, u: float) -> np.ndarray:
    """Model-implied expected exceedance rate per lag class.

    The model analog of the empirical K/N: the mean of per-trial chi values
    over the trials falling in each class (velocities differ across
    episodes, so classes mix several chi levels). NaN where a class has no
    trials.
    """
    trials = _build_trials(catalog, lag_classes, u)
    t, a = params.theta, params.adv
    mag = np.where(trials.speed > 0, a.eta1 * trials.speed**a.eta2, 0.0)
    hx = trials.dx - trials.tau * mag * trials.ux
    hy = trials.dy - trials.tau * mag * trials.uy
    gamma = 2.0 * (t.beta1 * (hx * hx + hy * hy)**(0.5 * t.alpha1)
                   + t.beta2 * trials.tau**t.alpha2)
    chi = chi_from_gamma(gamma)
    dist = np.hypot(trials.dx, trials.dy)
    sbin = lag_classes.assign(dist)
    ti = np.searchsorted(lag_classes.temporal_lags, trials.tau.astype(int))
    n_s, n_t = lag_classes.n_spatial, lag_classes.temporal_lags.size
    tot = np.zeros((n_s, n_t))
    cnt = np.zeros((n_s, n_t))
    np.add.at(tot, (sbin, ti), chi)
    np.add.at(cnt, (sbin, ti), 1.0)
    with np.errstate(invalid="ignore"):
        return np.where(cnt > 0, tot / cnt, np.nan)


def bernoulli_chi_mle(k_successes: int, n_trials: int) -> float:
    """Numerically maximize the single-class Bernoulli likelihood in chi.

    Sanity reduction of the composite likelihood: with one lag class and a
    free scalar chi, the optimum is K/N.
    """
    if n_trials <= 0:
        raise DataError("no trials")

    def nll(chi):
        return -(k_successes * np.log(chi) + (n_trials - k_successes) * np.log1p(-chi))

    res = minimize_scalar(nll, bounds=(1e-12, 1 - 1e-12), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x)


def wls_initialize(counts: ExceedanceCounts) -> VariogramParams:
    """Weighted least-squares starting values from empirical extremograms.

    Converts per-class empirical chi to empirical variogram values, then
    fits the log-linear spatial slope on zero-lag classes and the temporal
    slope on same-site (smallest distance bin) classes, weighting by pair
    counts. Classes with chi of 0 or 1 are excluded (the log-linearization
    breaks there).
    """
    lc = counts.lag_classes
    chi = counts.chi_hat()
    usable = (counts.N > 0) & (chi > 0) & (chi < 1)
    if usable.sum() < 4:
        raise DataError("fewer than 4 usable lag classes; pass an explicit initial value")
    gamma = np.full_like(chi, np.nan)
    gamma[usable] = inverse_chi(chi[usable])

    tau0 = int(np.argmin(np.abs(lc.temporal_lags - 0))) if 0 in lc.temporal_lags else None
    if tau0 is None or lc.temporal_lags[tau0] != 0:
        raise DataError("WLS initialization needs the zero temporal lag")
    d = lc.representative
    spatial = usable[:, tau0] & (d > 0) & (gamma[:, tau0] > 0)
    if spatial.sum() < 2:
        raise DataError("fewer than 2 spatial classes at zero lag; pass an explicit initial value")
    coef_s = np.polyfit(np.log(d[spatial]), np.log(gamma[spatial, tau0]), 1,
                        w=np.sqrt(counts.N[spatial, tau0]))
    alpha1, beta1 = coef_s[0], np.exp(coef_s[1]) / 2.0

    s0 = int(np.argmin(d))   # smallest distance bin stands in for h ~ 0
    taus = np.asarray(lc.temporal_lags, dtype=float)
    temporal = usable[s0, :] & (taus > 0) & (gamma[s0, :] > 0)
    if temporal.sum() < 2:
        raise DataError("fewer than 2 temporal classes; pass an explicit initial value")
    coef_t = np.polyfit(np.log(taus[temporal]), np.log(gamma[s0, temporal]), 1,
                        w=np.sqrt(counts.N[s0, temporal]))
    alpha2, beta2 = coef_t[0], np.exp(coef_t[1]) / 2.0

    return VariogramParams(beta1=float(np.clip(beta1, 1e-8, 1e8)),
                           beta2=float(np.clip(beta2, 1e-8, 1e8)),
                           alpha1=float(np.clip(alpha1, 0.05, 2.0)),
                           alpha2=float(np.clip(alpha2, 0.05, 2.0)))


def _logit(p):
    return np.log(p / (1.0 - p))


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


_ETA2_BOUNDS = (0.1, 10.0)


def _pack(theta: VariogramParams, adv: AdvectionTransform | None):
    z = [np.log(theta.beta1), np.log(theta.beta2),
         _logit(np.clip(theta.alpha1 / 2.0, 1e-6, 1 - 1e-6)),
         _logit(np.clip(theta.alpha2 / 2.0, 1e-6, 1 - 1e-6))]
    if adv is not None:
        z += [np.log(adv.eta1), np.log(adv.eta2)]
    return np.array(z)


def _unpack(z, fixed_adv: AdvectionTransform | None):
    b1, b2 = np.exp(z[0]), np.exp(z[1])
    a1, a2 = 2.0 * _sigmoid(z[2]), 2.0 * _sigmoid(z[3])
    if fixed_adv is not None:
        return b1, b2, a1, a2, fixed_adv.eta1, fixed_adv.eta2
    return b1, b2, a1, a2, np.exp(z[4]), np.exp(z[5])


def fit_variogram(catalog: EpisodeCatalog, lag_classes: LagClasses, u: float,
                  init: ExtendedParams | VariogramParams | None = None,
                  fixed_adv: AdvectionTransform | None = None,
                  transformed_cap: float | None = None,
                  method: str = "simplex", maxiter: int = 4000) -> FitResult:
    """Maximize the composite log-likelihood over the dependence parameters.

    With ``fixed_adv`` the advection-transform parameters are held and only
    the four variogram parameters move. ``transformed_cap`` (internal speed
    units) excludes episodes whose transformed speed exceeds the bound,
    evaluated with the fixed or initial transform before optimization.
    Episodes without a velocity are always dropped.

    Optimization runs in an unconstrained chart (log for the betas and
    eta1, scaled logit onto (0, 2) for the alphas, log for eta2 with bounds
    (0.1, 10)); non-convergence returns a flagged result rather than
    raising.
    """
    have_v = [ep for ep in catalog if ep.v_emp is not None]
    if not have_v:
        raise DataError("no episodes with assigned velocities")

    if init is None:
        counts = count_joint_exceedances(catalog, u, lag_classes)
        theta0 = wls_initialize(counts)
        adv0 = fixed_adv or AdvectionTransform(1.0, 1.0)
    elif isinstance(init, ExtendedParams):
        theta0, adv0 = init.theta, fixed_adv or init.adv
    else:
        theta0, adv0 = init, fixed_adv or AdvectionTransform(1.0, 1.0)

    cap_adv = fixed_adv if fixed_adv is not None else adv0
    kept = have_v
    if transformed_cap is not None:
        kept = [ep for ep in have_v
                if transform_advection(ep.v_emp, cap_adv).speed <= transformed_cap]
        if not kept:
            raise DataError("transformed-speed cap removed every episode")
    work = catalog.with_episodes(kept)

    trials = _build_trials(work, lag_classes, u)
    if trials.k.size == 0 or not np.isfinite(trials.k).all():
        raise DataError("zero-information catalog: no usable trials")

    free_eta = fixed_adv is None

    def neg_ll(z):
        vals = _unpack(z, fixed_adv)
        e2 = vals[5]
        if free_eta and not (_ETA2_BOUNDS[0] <= e2 <= _ETA2_BOUNDS[1]):
            return np.inf
        ll = _loglik_trials(trials, *vals)
        return -ll if np.isfinite(ll) else np.inf

    if free_eta:
        # short pilot runs over a deterministic eta grid; the speed transform
        # is weakly identified, so a single start can strand the simplex
        pilots = [adv0, AdvectionTransform(adv0.eta1, min(3.0, _ETA2_BOUNDS[1])),
                  AdvectionTransform(adv0.eta1 * 2.0, min(5.0, _ETA2_BOUNDS[1]))]
        best_z, best_f = None, np.inf
        for adv in pilots:
            z0 = _pack(theta0, adv)
            res = minimize(neg_ll, z0, method="Nelder-Mead",
                           options={"maxiter": 400, "xatol": 1e-4, "fatol": 1e-6})
            if res.fun < best_f:
                best_z, best_f = res.x, res.fun
        z0 = best_z
    else:
        z0 = _pack(theta0, None)

    if method == "quasi-newton":
        res = minimize(neg_ll, z0, method="L-BFGS-B", jac="3-point",
                       options={"maxiter": maxiter})
    else:
        res = minimize(neg_ll, z0, method="Nelder-Mead",
                       options={"maxiter": maxiter, "xatol": 1e-7, "fatol": 1e-9,
                                "adaptive": free_eta})

    b1, b2, a1, a2, e1, e2 = _unpack(res.x, fixed_adv)
    params = ExtendedParams(theta=VariogramParams(float(b1), float(b2),
                                                  float(min(a1, 2.0)), float(min(a2, 2.0))),
                            adv=AdvectionTransform(float(e1), float(e2)))
    return FitResult(params=params, loglik=float(-res.fun), n_episodes=len(kept),
                     converged=bool(res.success and np.isfinite(res.fun)),
                     n_iter=int(res.nit), message=str(res.message),
                     eta_fixed=not free_eta)


_PARAM_NAMES = ("beta1", "beta2", "alpha1", "alpha2", "eta1", "eta2")


def _month_key(ep):
    if ep.t0_time is None:
        raise DataError("episodes carry no calendar timestamps")
    return str(np.datetime64(ep.t0_time, "M"))


def _jackknife_refit(args):
    catalog, lag_classes, u, kwargs, drop = args
    sub = catalog.with_episodes([ep for ep in catalog if _month_key(ep) != drop])
    return fit_variogram(sub, lag_classes, u, **kwargs).params.as_array()


def jackknife_months(catalog: EpisodeCatalog, lag_classes: LagClasses, u: float,
                     threads: int = 1, **fit_kwargs) -> dict:
    """Month-leave-one-out jackknife confidence intervals for the fit.

    Refits after deleting each calendar month's episodes; the jackknife
    variance is (m-1)/m times the spread of the leave-one-out estimates and
    the CI is the full-catalog estimate +/- z_0.975 standard errors.
    """
    months = sorted({_month_key(ep) for ep in catalog})
    if len(months) < 3:
        raise DataError(f"need >= 3 distinct months, got {len(months)}")
    full = fit_variogram(catalog, lag_classes, u, **fit_kwargs)
    jobs = [(catalog, lag_classes, u, fit_kwargs, m) for m in months]
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            reps = list(pool.map(_jackknife_refit, jobs))
    else:
        reps = [_jackknife_refit(j) for j in jobs]
    reps = np.array(reps)
    m = len(months)
    center = reps.mean(axis=0)
    var = (m - 1) / m * np.sum((reps - center) ** 2, axis=0)
    se = np.sqrt(var)
    est = full.params.as_array()
    out = {"months": months, "replicates": reps, "fit": full}
    for i, name in enumerate(_PARAM_NAMES):
        out[name] = {"estimate": float(est[i]), "se": float(se[i]),
                     "lo": float(est[i] - _Z975 * se[i]),
                     "hi": float(est[i] + _Z975 * se[i])}
    return out
