"""Command-line pipeline: ingest, fit, simulate, diagnose, validate.

Stages communicate through files in the output directory, so each command
can run (and rerun, byte-identically for a fixed config and seed) on its
own once its upstream artifacts exist:

    fit-margins         margins.txt, margins_by_site.csv
    select-episodes     episodes.csv(.meta.json) [, grid_episodes.csv]
    estimate-advection  episodes.csv with velocities, advection.meta.json
    fit-variogram       variogram.txt(.meta.json)
    simulate            sim/episode_NNNN.csv + sidecars
    diagnose            diagnostics/*.csv
    validate-recovery   recovery_estimates.csv, recovery_summary.csv

Exit codes: 0 success, 2 config error, 3 data error, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .advection import assign_velocities_from_field, filter_speed_range, match_and_assign
from .config import (PipelineConfig, apply_overrides, eta1_in_units, kmh_to_m_per_step,
                     load_config, m_per_step_to_kmh, save_config, theta_in_units)
from .data import read_gauge_csv, read_grid_binary, read_grid_csv, read_sites_csv
from .dependence import AdvectionTransform, VariogramParams, Velocity, transform_advection
from .diagnostics import (cumulative_rain_distribution, empirical_extremogram,
                          empirical_variogram, qq_egpd, trivariate_conditional)
from .episodes import (EpisodeConfig, episode_tradeoff, exceedance_count_profile,
                       lag_classes_for, read_catalog_csv, select_episodes,
                       threshold_from_quantile, write_catalog_csv)
from .errors import ConfigError, ConvergenceError, DataError, StormgenError
from .inference import (ExtendedParams, fit_variogram, jackknife_months, model_chi_by_class)
from .marginals import (CensoringSpec, EgpdParams, MarginalModel, fit_marginal_model,
                        select_censoring_multiplier)
from .recovery import RecoverySetting, run_recovery, summarize_recovery
from .seeds import child_rng, child_seed
from .simulation import (GridSpec, SimulationDomain, catalog_velocity_sampler,
                         fixed_velocity_sampler, generate_episode, simulate_grid_ensemble)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NONCONV = 0, 2, 3, 4


# ---------------------------------------------------------------- artifacts

def _write_flat(path, mapping):
    with open(path, "w") as fh:
        for key, val in mapping.items():
            if isinstance(val, float):
                fh.write(f"{key} {val:.12g}\n")
            else:
                fh.write(f"{key} {val}\n")


def _read_flat(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            key, val = line.split(None, 1)
            val = val.strip()
            try:
                out[key] = float(val)
            except ValueError:
                out[key] = val
    return out


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise DataError(f"missing artifact {path.name}; run `stormgen {producer}` first")
    return path


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(c) for c in row])


def _fmt_cell(c):
    if isinstance(c, float):
        return f"{c:.10g}"
    return c


# ---------------------------------------------------------------- data loading

def _load_grid(cfg: PipelineConfig):
    if cfg.paths.grid_binary:
        field = read_grid_binary(cfg.paths.grid_binary)
        field.step_seconds = cfg.units.grid_step_seconds
        return field
    if cfg.paths.grid_csv:
        return read_grid_csv(cfg.paths.grid_csv, step_seconds=cfg.units.grid_step_seconds)
    return None


def _load_fine(cfg: PipelineConfig):
    """The dataset the model is fitted on: gauges when configured, else grid."""
    if cfg.paths.gauge_csv:
        sites = read_sites_csv(cfg.paths.sites_csv) if cfg.paths.sites_csv else None
        data = read_gauge_csv(cfg.paths.gauge_csv, sites)
        return data, cfg.units.gauge_step_seconds, "gauge"
    grid = _load_grid(cfg)
    if grid is None:
        raise ConfigError("no dataset configured: set paths.gauge_csv or paths.grid_csv")
    return grid, cfg.units.grid_step_seconds, "grid"


def _fine_lag_classes(cfg: PipelineConfig, data, kind: str):
    max_tau = cfg.lags.max_temporal_lag
    if max_tau < 0:
        max_tau = cfg.episodes.delta - 1
    exact = {"auto": None, "yes": True, "no": False}.get(cfg.lags.exact)
    if exact is None and kind == "grid":
        exact = True
    return lag_classes_for(data.point_coords(), range(max_tau + 1),
                           n_spatial_bins=cfg.lags.n_spatial_bins, exact=exact,
                           max_distance=cfg.lags.max_distance or None)


def _load_catalog(cfg: PipelineConfig, out: Path):
    data, step_seconds, kind = _load_fine(cfg)
    meta = json.loads(_require(out / "episodes.meta.json", "select-episodes").read_text())
    catalog = read_catalog_csv(_require(out / "episodes.csv", "select-episodes"),
                               data, meta["u"])
    return data, step_seconds, kind, catalog, meta


def _load_margins(out: Path) -> MarginalModel:
    flat = _read_flat(_require(out / "margins.txt", "fit-margins"))
    return MarginalModel(p0=flat["p0"], egpd=EgpdParams(
        xi=flat["xi"], sigma=flat["sigma"], kappa=flat["kappa"]))


VARIOGRAM_COLUMNS = ["parameter", "estimate", "ci_low", "ci_high", "units"]


def _write_variogram_txt(path, params: ExtendedParams, cis: dict | None):
    names = ["beta1", "beta2", "alpha1", "alpha2", "eta1", "eta2"]
    units = {"beta1": "per_m^alpha1", "beta2": "per_step^alpha2",
             "alpha1": "dimensionless", "alpha2": "dimensionless",
             "eta1": "speed_m_per_step^(1-eta2)", "eta2": "dimensionless"}
    est = dict(zip(names, params.as_array()))
    with open(path, "w") as fh:
        fh.write(" ".join(VARIOGRAM_COLUMNS) + "\n")
        for name in names:
            lo = hi = "nan"
            if cis and name in cis:
                lo, hi = f"{cis[name]['lo']:.12g}", f"{cis[name]['hi']:.12g}"
            fh.write(f"{name} {est[name]:.12g} {lo} {hi} {units[name]}\n")


def _read_variogram_txt(path) -> ExtendedParams:
    vals = {}
    with open(path) as fh:
        for i, line in enumerate(fh):
            if i == 0 or not line.strip():
                continue
            parts = line.split()
            vals[parts[0]] = float(parts[1])
    return ExtendedParams(theta=VariogramParams(vals["beta1"], vals["beta2"],
                                                vals["alpha1"], vals["alpha2"]),
                          adv=AdvectionTransform(vals["eta1"], vals["eta2"]))


def _print_dual_units(params: ExtendedParams, step_seconds: float):
    steps_per_hour = 3600.0 / step_seconds
    t = params.theta
    km = theta_in_units(t.beta1, t.beta2, t.alpha1, t.alpha2, 1000.0, steps_per_hour)
    speed_scale = m_per_step_to_kmh(1.0, step_seconds)
    eta1_kmh = eta1_in_units(params.adv.eta1, params.adv.eta2, speed_scale)
    print(f"{'parameter':<8} {'m per step':>14} {'km per h':>14}")
    for name, a, b in (("beta1", t.beta1, km[0]), ("beta2", t.beta2, km[1]),
                       ("alpha1", t.alpha1, km[2]), ("alpha2", t.alpha2, km[3]),
                       ("eta1", params.adv.eta1, eta1_kmh),
                       ("eta2", params.adv.eta2, params.adv.eta2)):
        print(f"{name:<8} {a:>14.4g} {b:>14.4g}")


# ---------------------------------------------------------------- commands

def cmd_fit_margins(cfg: PipelineConfig, out: Path, args) -> int:
    data, _, kind = _load_fine(cfg)
    values = data.point_values()
    ids = data.point_ids()
    cens = cfg.censoring
    if kind == "grid" and not cens.precision:
        censoring = None
    elif cens.select_multiplier:
        censoring = {}
        for j, sid in enumerate(ids):
            col = values[:, j]
            try:
                spec, _scores = select_censoring_multiplier(
                    col, cens.precision, min_positive=cens.min_positive)
            except StormgenError:
                spec = CensoringSpec(cens.precision, cens.multiplier)
            censoring[sid] = spec
    else:
        censoring = CensoringSpec(cens.precision, cens.multiplier)

    result = fit_marginal_model(values, ids, pool=cens.pool, censoring=censoring,
                                min_positive=cens.min_positive)
    model = result.model
    pooled = next(s.fit for s in result.per_site if s.fit is not None)
    _write_flat(out / "margins.txt", {
        "p0": model.p0, "xi": model.egpd.xi, "sigma": model.egpd.sigma,
        "kappa": model.egpd.kappa, "loglik": pooled.loglik, "mode": result.mode,
        "n_sites": len(result.per_site),
    })
    rows = []
    for s in result.per_site:
        f = s.fit
        rows.append([s.site_id, s.n_obs, s.n_positive, s.p0,
                     f.params.xi if f else "", f.params.sigma if f else "",
                     f.params.kappa if f else "", f.loglik if f else "",
                     s.censor_threshold])
    _write_rows(out / "margins_by_site.csv",
                ["site_id", "n_obs", "n_positive", "p0", "xi", "sigma", "kappa",
                 "loglik", "censor_threshold"], rows)
    print(f"fitted marginal model ({result.mode}): p0={model.p0:.4g} "
          f"xi={model.egpd.xi:.4g} sigma={model.egpd.sigma:.4g} kappa={model.egpd.kappa:.4g}")
    return EXIT_OK


def cmd_select_episodes(cfg: PipelineConfig, out: Path, args) -> int:
    data, _, kind = _load_fine(cfg)
    ec = cfg.episodes
    u = threshold_from_quantile(data, ec.q, positive_only=ec.quantile_positive_only)
    config = EpisodeConfig(q=ec.q, delta=ec.delta, d_min=ec.d_min,
                           max_episodes=ec.max_episodes or None)
    catalog = select_episodes(data, u, config)
    write_catalog_csv(out / "episodes.csv", catalog)
    (out / "episodes.meta.json").write_text(json.dumps({
        "u": u, "q": ec.q, "delta": ec.delta, "d_min": ec.d_min,
        "n_episodes": len(catalog), "kind": kind}, indent=2, sort_keys=True))
    print(f"selected {len(catalog)} episodes (u={u:.4g} at q={ec.q})")

    if kind == "gauge" and (cfg.paths.grid_csv or cfg.paths.grid_binary):
        grid = _load_grid(cfg)
        gu = threshold_from_quantile(grid, ec.q,
                                     positive_only=ec.quantile_positive_only)
        gcfg = EpisodeConfig(q=ec.q, delta=cfg.grid_episodes.delta,
                             d_min=cfg.grid_episodes.d_min)
        gcat = select_episodes(grid, gu, gcfg)
        write_catalog_csv(out / "grid_episodes.csv", gcat)
        (out / "grid_episodes.meta.json").write_text(json.dumps({
            "u": gu, "q": ec.q, "delta": gcfg.delta, "d_min": gcfg.d_min,
            "n_episodes": len(gcat), "kind": "grid"}, indent=2, sort_keys=True))
        print(f"selected {len(gcat)} gridded episodes (u={gu:.4g})")
    return EXIT_OK


def cmd_estimate_advection(cfg: PipelineConfig, out: Path, args) -> int:
    data, step_seconds, kind, catalog, meta = _load_catalog(cfg, out)
    if kind == "gauge" and (cfg.paths.grid_csv or cfg.paths.grid_binary):
        grid = _load_grid(cfg)
        gmeta = json.loads(_require(out / "grid_episodes.meta.json",
                                    "select-episodes").read_text())
        gcat = read_catalog_csv(_require(out / "grid_episodes.csv", "select-episodes"),
                                grid, gmeta["u"])
        catalog = match_and_assign(catalog, gcat, grid,
                                   pad_seconds=cfg.advection.pad_hours * 3600.0,
                                   fine_step_seconds=step_seconds,
                                   grid_step_seconds=cfg.units.grid_step_seconds)
    else:
        catalog = assign_velocities_from_field(catalog, data)
    bound = kmh_to_m_per_step(cfg.advection.max_emp_speed_kmh, step_seconds)
    catalog, removed = filter_speed_range(catalog, bound)
    write_catalog_csv(out / "episodes.csv", catalog)
    sources = [ep.v_source for ep in catalog]
    summary = {"n_episodes": len(catalog),
               "n_gridded": sources.count("gridded"),
               "n_fallback": sources.count("gauge-fallback"),
               "n_missing": sources.count("missing"),
               "fraction_removed_by_speed": removed,
               "max_emp_speed_m_per_step": bound}
    (out / "advection.meta.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    print(f"velocities: {summary['n_gridded']} gridded, {summary['n_fallback']} fallback, "
          f"{summary['n_missing']} missing; speed filter removed {removed:.1%}")
    return EXIT_OK


def cmd_fit_variogram(cfg: PipelineConfig, out: Path, args) -> int:
    data, step_seconds, kind, catalog, meta = _load_catalog(cfg, out)
    if all(ep.v_emp is None for ep in catalog):
        raise DataError("catalog has no velocities; run `stormgen estimate-advection` first")
    lag_classes = _fine_lag_classes(cfg, data, kind)
    opt = cfg.optimizer
    fixed_adv = None
    if np.isfinite(opt.eta1_fixed) and np.isfinite(opt.eta2_fixed):
        fixed_adv = AdvectionTransform(opt.eta1_fixed, opt.eta2_fixed)
    cap = kmh_to_m_per_step(cfg.advection.transformed_cap_kmh, step_seconds) \
        if cfg.advection.transformed_cap_kmh > 0 else None

    fit = fit_variogram(catalog, lag_classes, meta["u"], fixed_adv=fixed_adv,
                        transformed_cap=cap, method=opt.method, maxiter=opt.maxiter)
    cis = None
    if opt.jackknife:
        jk = jackknife_months(catalog, lag_classes, meta["u"], threads=args.threads,
                              fixed_adv=fixed_adv, transformed_cap=cap,
                              method=opt.method, maxiter=opt.maxiter)
        cis = {name: jk[name] for name in ("beta1", "beta2", "alpha1", "alpha2",
                                           "eta1", "eta2")}
    _write_variogram_txt(out / "variogram.txt", fit.params, cis)
    (out / "variogram.meta.json").write_text(json.dumps({
        "loglik": fit.loglik, "n_episodes": fit.n_episodes,
        "converged": fit.converged, "n_iter": fit.n_iter,
        "eta_fixed": fit.eta_fixed, "message": fit.message}, indent=2, sort_keys=True))
    _print_dual_units(fit.params, step_seconds)
    print(f"composite log-likelihood {fit.loglik:.6g} on {fit.n_episodes} episodes")
    if not fit.converged:
        raise ConvergenceError("variogram fit did not converge; best iterate written "
                               "to variogram.txt", best=fit)
    return EXIT_OK


def cmd_simulate(cfg: PipelineConfig, out: Path, args) -> int:
    data, step_seconds, kind, catalog, meta = _load_catalog(cfg, out)
    params = _read_variogram_txt(_require(out / "variogram.txt", "fit-variogram"))
    marginal = _load_margins(out)
    sim = cfg.simulation
    grid = GridSpec(x0=sim.x0, y0=sim.y0, nx=sim.grid_nx, ny=sim.grid_ny,
                    pixel_m=sim.pixel_m, n_steps=sim.n_steps)
    if sim.velocity_kmh:
        try:
            vx_kmh, vy_kmh = (float(tok) for tok in sim.velocity_kmh.split(","))
        except ValueError:
            raise ConfigError(f"simulation.velocity_kmh must be 'vx,vy', "
                              f"got {sim.velocity_kmh!r}") from None
        v = Velocity(kmh_to_m_per_step(vx_kmh, step_seconds),
                     kmh_to_m_per_step(vy_kmh, step_seconds))
        sampler = fixed_velocity_sampler(v)
    else:
        sampler = catalog_velocity_sampler(catalog, params.adv)
    written = simulate_grid_ensemble(
        grid, params.theta, meta["u"], marginal, sim.n_episodes, sampler,
        cfg.seeds.master, out / "sim", n_replicates=sim.n_replicates,
        conditioning_pixel=None if sim.conditioning_pixel < 0 else sim.conditioning_pixel,
        discretization=cfg.censoring.precision if sim.discretization_correction else None,
        write_binary=sim.write_binary)
    print(f"wrote {len(written)} simulated episodes to {out / 'sim'}")
    return EXIT_OK


def _diagnose_simulations(cfg, catalog, params, marginal, u, n_reps, master_seed):
    """Conditional re-simulation of observed episodes on the observation points."""
    points = catalog.coords
    sims = []
    for i, ep in enumerate(catalog):
        if ep.v_emp is None:
            continue
        domain = SimulationDomain(points=points, n_steps=ep.delta,
                                  conditioning_point=ep.point_index)
        for r in range(n_reps):
            rng = child_rng(master_seed, "diagnose-sim", i * n_reps + r)
            sims.append(generate_episode(domain, params.theta, ep.v_emp, params.adv,
                                         u, marginal, rng,
                                         discretization=cfg.censoring.precision or None))
    return sims


def cmd_diagnose(cfg: PipelineConfig, out: Path, args) -> int:
    data, step_seconds, kind, catalog, meta = _load_catalog(cfg, out)
    dg = out / "diagnostics"
    dg.mkdir(parents=True, exist_ok=True)
    u = meta["u"]
    lag_classes = _fine_lag_classes(cfg, data, kind)

    q_list = [float(tok) for tok in cfg.diagnose.quantile_grid.split(",")]
    profile = exceedance_count_profile(data, q_list,
                                       max_temporal_lag=cfg.diagnose.max_temporal_lag_profile,
                                       positive_only=cfg.episodes.quantile_positive_only)
    _write_rows(dg / "exceedance_profile.csv", ["q", "kind", "lag", "count"], profile)

    delta = cfg.episodes.delta
    d_min = cfg.episodes.d_min
    tradeoff = episode_tradeoff(data, u,
                                sorted({1, max(1, delta // 2), delta, 2 * delta}),
                                sorted({0.0, d_min / 2, d_min, 2 * d_min}))
    _write_rows(dg / "episode_tradeoff.csv", ["delta", "d_min", "n_episodes"], tradeoff)

    chi_rows = empirical_extremogram(catalog, u, lag_classes)
    params = None
    if (out / "variogram.txt").exists():
        params = _read_variogram_txt(out / "variogram.txt")
    if params is not None and any(ep.v_emp is not None for ep in catalog):
        model_chi = model_chi_by_class(params, catalog, lag_classes, u)
        n_t = lag_classes.temporal_lags.size
        rows = [chi_rows[si * n_t + ti] + (float(model_chi[si, ti]),)
                for si in range(lag_classes.n_spatial) for ti in range(n_t)]
        _write_rows(dg / "extremogram.csv",
                    ["distance_m", "temporal_lag", "chi_hat", "K", "N", "chi_model"], rows)
    else:
        _write_rows(dg / "extremogram.csv",
                    ["distance_m", "temporal_lag", "chi_hat", "K", "N"], chi_rows)

    vario_rows = empirical_variogram(chi_rows)
    _write_rows(dg / "empirical_variogram.csv",
                ["distance_m", "temporal_lag", "gamma_hat", "N"], vario_rows)

    if (out / "margins.txt").exists():
        marginal = _load_margins(out)
        qq = qq_egpd(data.point_values(), marginal.egpd,
                     CensoringSpec(cfg.censoring.precision, cfg.censoring.multiplier)
                     if cfg.censoring.precision else None,
                     rng=child_rng(cfg.seeds.master, "diagnose-qq"))
        if not qq["degenerate"]:
            rows = zip(qq["levels"], qq["model"], qq["empirical"],
                       qq.get("band_lo", np.full_like(qq["levels"], np.nan)),
                       qq.get("band_hi", np.full_like(qq["levels"], np.nan)))
            _write_rows(dg / "qq_egpd.csv",
                        ["level", "model_mm", "empirical_mm", "band_lo", "band_hi"],
                        [list(map(float, r)) for r in rows])

    obs_windows = [ep.window for ep in catalog]
    totals = cumulative_rain_distribution(catalog)
    cum_rows = [["obs", i, float(t)] for i, t in enumerate(totals)]

    can_simulate = (params is not None and (out / "margins.txt").exists()
                    and any(ep.v_emp is not None for ep in catalog)
                    and cfg.diagnose.n_sim_replicates > 0)
    if can_simulate:
        marginal = _load_margins(out)
        sims = _diagnose_simulations(cfg, catalog, params, marginal, u,
                                     cfg.diagnose.n_sim_replicates, cfg.seeds.master)
        cum_rows += [["sim", i, float(ep.rain.sum())] for i, ep in enumerate(sims)]
    _write_rows(dg / "cumulative_rain.csv", ["kind", "episode", "total_mm"], cum_rows)

    stacked_obs = np.vstack(obs_windows)
    cond_counts = np.bincount([ep.point_index for ep in catalog],
                              minlength=len(catalog.point_ids))
    top_sites = np.argsort(cond_counts)[::-1][:2]
    tri_rows = []
    for s in top_sites:
        if cond_counts[s] == 0:
            continue
        p_obs = trivariate_conditional(stacked_obs, u, int(s))
        p_sim = None
        if can_simulate:
            stacked_sim = np.vstack([ep.rain for ep in sims])
            p_sim = trivariate_conditional(stacked_sim, u, int(s))
        ids = catalog.point_ids
        for i in range(p_obs.shape[0]):
            for j in range(i, p_obs.shape[1]):
                row = [ids[int(s)], ids[i], ids[j], float(p_obs[i, j])]
                row.append(float(p_sim[i, j]) if p_sim is not None else "")
                tri_rows.append(row)
    _write_rows(dg / "trivariate_conditional.csv",
                ["cond_site", "site1", "site2", "p_obs", "p_sim"], tri_rows)

    if can_simulate:
        val_rows = []
        for s in top_sites:
            col = int(s)
            for w in obs_windows:
                for v in w[np.isfinite(w[:, col]) & (w[:, col] > 0), col]:
                    val_rows.append(["obs", catalog.point_ids[col], float(v)])
            for ep in sims:
                for v in ep.rain[ep.rain[:, col] > 0, col]:
                    val_rows.append(["sim", catalog.point_ids[col], float(v)])
        _write_rows(dg / "positive_values.csv", ["kind", "site_id", "value_mm"], val_rows)

    print(f"wrote diagnostics to {dg}")
    return EXIT_OK


def cmd_validate_recovery(cfg: PipelineConfig, out: Path, args) -> int:
    rc = cfg.recovery
    setting = RecoverySetting(
        theta=VariogramParams(rc.beta1, rc.beta2, rc.alpha1, rc.alpha2),
        adv=AdvectionTransform(rc.eta1, rc.eta2), eta_fixed=rc.eta_fixed,
        n_runs=rc.n_runs, n_episodes=rc.n_episodes, grid_side=rc.grid_side,
        n_steps=rc.n_steps, speed_min=rc.speed_min, speed_max=rc.speed_max,
        maxiter=rc.maxiter)

    def progress(run, rec):
        print(f"run {run}: beta1={rec['beta1']:.3g} beta2={rec['beta2']:.3g} "
              f"alpha1={rec['alpha1']:.3g} alpha2={rec['alpha2']:.3g} "
              f"eta1={rec['eta1']:.3g} eta2={rec['eta2']:.3g}")

    records = run_recovery(setting, cfg.seeds.master, progress=progress)
    _write_rows(out / "recovery_estimates.csv",
                ["run", "beta1", "beta2", "alpha1", "alpha2", "eta1", "eta2",
                 "loglik", "converged"],
                [[r["run"], r["beta1"], r["beta2"], r["alpha1"], r["alpha2"],
                  r["eta1"], r["eta2"], r["loglik"], r["converged"]] for r in records])
    summary = summarize_recovery(records, setting)
    _write_rows(out / "recovery_summary.csv",
                ["parameter", "truth", "median", "q25", "q75", "rel_error_of_median"],
                [[s["parameter"], s["truth"], s["median"], s["q25"], s["q75"],
                  s["rel_error_of_median"]] for s in summary])
    for s in summary:
        print(f"{s['parameter']:<8} truth={s['truth']:.4g} median={s['median']:.4g} "
              f"rel.err={s['rel_error_of_median']:+.1%}")
    return EXIT_OK


def cmd_init_config(cfg: PipelineConfig, out: Path, args) -> int:
    path = Path(args.path)
    save_config(cfg, path)
    print(f"wrote default config to {path}")
    return EXIT_OK


COMMANDS = {
    "fit-margins": cmd_fit_margins,
    "select-episodes": cmd_select_episodes,
    "estimate-advection": cmd_estimate_advection,
    "fit-variogram": cmd_fit_variogram,
    "simulate": cmd_simulate,
    "diagnose": cmd_diagnose,
    "validate-recovery": cmd_validate_recovery,
    "init-config": cmd_init_config,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stormgen",
        description="Spatio-temporal stochastic generator for extreme rainfall")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--output", default="out", help="artifact directory")
        p.add_argument("--seed", type=int, default=None, help="override seeds.master")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override any config key (repeatable)")
        if name == "init-config":
            p.add_argument("path", help="where to write the default config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else PipelineConfig().validate()
        apply_overrides(cfg, args.set)
        if args.seed is not None:
            cfg.seeds.master = args.seed
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV


if __name__ == "__main__":
    sys.exit(main())
