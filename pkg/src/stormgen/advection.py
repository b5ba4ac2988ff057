"""Per-episode advection estimation by barycenter tracking.

The rainfall field at each step is summarized by its intensity-weighted
center of mass; consecutive barycenter displacements, averaged over the
episode window, give an empirical velocity vector. Gridded (radar-style)
fields are the preferred source; a gauge network can serve as a fallback by
treating the gauges as weighted points.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dependence import Velocity
from .errors import StormgenError
from .episodes import EpisodeCatalog


class VelocityUndefined(StormgenError):
    """Too few defined barycenters to estimate a displacement."""


@dataclass(frozen=True)
class EmpiricalVelocity:
    v: Velocity
    source: str                 # "gridded" | "gauge-fallback"
    n_displacements: int


def barycenter(coords, weights):
    """Intensity-weighted mean position, or None when total intensity is 0.

    Missing weights are excluded; negative weights are invalid.
    """
    coords = np.asarray(coords, dtype=float)
    weights = np.asarray(weights, dtype=float)
    ok = np.isfinite(weights)
    w = weights[ok]
    if np.any(w < 0):
        raise ValueError("intensities must be >= 0")
    total = w.sum()
    if not total > 0:
        return None
    return (w @ coords[ok]) / total


def grid_barycenter(field, t: int):
    """Barycenter of one time slice of a GriddedField."""
    return barycenter(field.point_coords(), field.point_values()[t])


def estimate_velocity(values, coords, window=None) -> EmpiricalVelocity:
    """Average consecutive barycenter displacements over a window.

    Parameters
    ----------
    values : ndarray (n_steps, n_points) or data container
    coords : ndarray (n_points, 2); ignored when ``values`` is a container
    window : (t_start, t_end) half-open step range; whole record by default

    Slices with undefined barycenter break the displacement chain: pairs
    spanning them are skipped, never interpolated. Raises
    :class:`VelocityUndefined` when no consecutive defined pair remains.
    """
    if hasattr(values, "point_values"):
        coords = values.point_coords()
        values = values.point_values()
    values = np.asarray(values, dtype=float)
    t0, t1 = (0, values.shape[0]) if window is None else (int(window[0]), int(window[1]))
    if not 0 <= t0 < t1 <= values.shape[0]:
        raise ValueError(f"window [{t0}, {t1}) outside the record")
    centers = [barycenter(coords, values[t]) for t in range(t0, t1)]
    if sum(c is not None for c in centers) < 2:
        raise VelocityUndefined("fewer than two defined barycenters in the window")
    disps = [centers[i + 1] - centers[i]
             for i in range(len(centers) - 1)
             if centers[i] is not None and centers[i + 1] is not None]
    if not disps:
        raise VelocityUndefined("no consecutive pair of defined barycenters")
    mean = np.mean(disps, axis=0)
    return EmpiricalVelocity(v=Velocity(float(mean[0]), float(mean[1])),
                             source="gridded", n_displacements=len(disps))


def _episode_start_seconds(ep, step_seconds: float, epoch):
    if ep.t0_time is not None and epoch is not None:
        return float((ep.t0_time - epoch) / np.timedelta64(1, "s"))
    return ep.t0 * step_seconds


def match_and_assign(fine_catalog: EpisodeCatalog, gridded_catalog: EpisodeCatalog,
                     gridded_field, pad_seconds: float = 7200.0,
                     fine_step_seconds: float = 300.0,
                     grid_step_seconds: float = 3600.0) -> EpisodeCatalog:
    """Assign an empirical velocity to every fine-scale episode.

    For each fine episode, gridded episodes whose conditioning time falls in
    [start - pad, end + pad] are candidates and the one nearest to the fine
    start wins; its velocity is re-estimated over its own window intersected
    with the padded one. Without a match, the velocity is estimated from the
    fine network itself (gauges as weighted points); if that also fails the
    episode is flagged ``missing`` and later dropped from advection-aware
    fits. Velocities are returned in meters per fine step.
    """
    epoch = None
    if (fine_catalog.episodes and fine_catalog.episodes[0].t0_time is not None
            and gridded_catalog.episodes and gridded_catalog.episodes[0].t0_time is not None):
        epoch = min(fine_catalog.episodes[0].t0_time, gridded_catalog.episodes[0].t0_time)

    grid_starts = np.array([_episode_start_seconds(g, grid_step_seconds, epoch)
                            for g in gridded_catalog])
    out = []
    for ep in fine_catalog:
        start = _episode_start_seconds(ep, fine_step_seconds, epoch)
        end = start + ep.delta * fine_step_seconds
        lo, hi = start - pad_seconds, end + pad_seconds
        cand = np.nonzero((grid_starts >= lo) & (grid_starts <= hi))[0]
        v_emp, source, ndisp = None, "missing", 0
        if cand.size:
            best = cand[np.argmin(np.abs(grid_starts[cand] - start))]
            g = gridded_catalog.episodes[int(best)]
            t_lo = max(g.t0, int(np.floor(lo / grid_step_seconds)))
            t_hi = min(g.t0 + g.delta, int(np.ceil(hi / grid_step_seconds)),
                       gridded_field.n_steps)
            try:
                est = estimate_velocity(gridded_field, None, window=(t_lo, max(t_hi, t_lo + 2)))
                scale = fine_step_seconds / grid_step_seconds   # m/grid-step -> m/fine-step
                v_emp = Velocity(est.v.vx * scale, est.v.vy * scale)
                source, ndisp = "gridded", est.n_displacements
            except (VelocityUndefined, ValueError):
                pass
        if v_emp is None and fine_catalog.data is not None:
            try:
                est = estimate_velocity(fine_catalog.data, None,
                                        window=(ep.t0, min(ep.t0 + ep.delta,
                                                           fine_catalog.data.point_values().shape[0])))
                v_emp, source, ndisp = est.v, "gauge-fallback", est.n_displacements
            except (VelocityUndefined, ValueError):
                pass
        out.append(replace(ep, v_emp=v_emp, v_source=source, n_displacements=ndisp))
    return fine_catalog.with_episodes(out)


def assign_velocities_from_field(catalog: EpisodeCatalog, field=None) -> EpisodeCatalog:
    """Velocity of each episode from its own window of the source field."""
    src = field if field is not None else catalog.data
    out = []
    for ep in catalog:
        try:
            est = estimate_velocity(src, None,
                                    window=(ep.t0, min(ep.t0 + ep.delta,
                                                       src.point_values().shape[0])))
            out.append(replace(ep, v_emp=est.v, v_source="gridded",
                               n_displacements=est.n_displacements))
        except (VelocityUndefined, ValueError):
            out.append(replace(ep, v_emp=None, v_source="missing", n_displacements=0))
    return catalog.with_episodes(out)


def filter_speed_range(catalog: EpisodeCatalog, max_emp_speed: float):
    """Drop episodes whose empirical speed exceeds the bound.

    Returns (filtered catalog, fraction removed). Episodes without a
    velocity pass through untouched.
    """
    keep = [ep for ep in catalog
            if ep.v_emp is None or ep.v_emp.speed <= max_emp_speed]
    removed = len(catalog) - len(keep)
    frac = removed / len(catalog) if len(catalog) else 0.0
    return catalog.with_episodes(keep), frac
