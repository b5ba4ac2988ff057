"""Extreme-episode selection and joint-exceedance counting.

An episode is a fixed-length data window opened at a conditioning exceedance
(one space-time point above the threshold u). Episodes are thinned so that
any two retained conditioning points are separated by at least d_min in
space or by the episode duration in time, which keeps them close to
independent for composite-likelihood purposes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .dependence import Velocity
from .errors import DataError


@dataclass(frozen=True)
class EpisodeConfig:
    """Episode selection knobs: threshold quantile q, duration (steps),
    minimal conditioning-point separation (meters), optional episode cap."""

    q: float = 0.95
    delta: int = 12
    d_min: float = 1200.0
    max_episodes: int | None = None

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if self.delta < 1:
            raise ValueError(f"delta must be >= 1, got {self.delta}")
        if self.d_min < 0:
            raise ValueError(f"d_min must be >= 0, got {self.d_min}")


@dataclass
class Episode:
    """One selected extreme episode with its data window (delta x n_points)."""

    episode_id: int
    point_index: int
    point_id: object
    s0: np.ndarray
    t0: int
    delta: int
    window: np.ndarray
    t0_time: object = None            # np.datetime64 when the data carry timestamps
    v_emp: Velocity | None = None
    v_source: str | None = None       # "gridded" | "gauge-fallback" | "missing"
    n_displacements: int = 0

    def n_exceedances(self, u: float) -> int:
        w = self.window
        return int(np.sum(w[np.isfinite(w)] > u))


@dataclass
class EpisodeCatalog:
    episodes: list
    u: float
    coords: np.ndarray
    point_ids: list
    delta: int
    data: object = field(default=None, repr=False)

    def __len__(self):
        return len(self.episodes)

    def __iter__(self):
        return iter(self.episodes)

    def with_episodes(self, episodes) -> "EpisodeCatalog":
        return EpisodeCatalog(episodes=list(episodes), u=self.u, coords=self.coords,
                              point_ids=self.point_ids, delta=self.delta, data=self.data)


def threshold_from_quantile(data, q: float, positive_only: bool = True) -> float:
    """Empirical space-time quantile used as the episode threshold u.

    Rainfall series are overwhelmingly zero, so by default the quantile is
    taken over positive values only; set ``positive_only=False`` to use all
    non-missing values. Uses the order-statistic (inverted-cdf) convention.
    """
    if not 0 < q < 1:
        raise DataError(f"q must lie in (0, 1), got {q}")
    values = data.point_values() if hasattr(data, "point_values") else np.asarray(data, dtype=float)
    flat = values[np.isfinite(values)]
    if positive_only:
        flat = flat[flat > 0]
    if flat.size == 0:
        raise DataError("no usable values for the quantile threshold")
    return float(np.quantile(flat, q, method="inverted_cdf"))


def select_episodes(data, u: float, config: EpisodeConfig) -> EpisodeCatalog:
    """Chronological greedy thinning of conditioning exceedances.

    Candidates (all points with value > u) are processed in time order, ties
    broken by point id then by value descending. A candidate is retained iff
    against every retained episode it is at least d_min away in space or at
    least delta steps away in time. Windows at the record's end are padded
    with NaN to keep length delta.
    """
    values = data.point_values()
    coords = data.point_coords()
    ids = data.point_ids()
    timestamps = getattr(data, "timestamps", None)
    n_steps = values.shape[0]

    exceed_t, exceed_j = np.nonzero(values > u)
    order = sorted(range(exceed_t.size),
                   key=lambda i: (exceed_t[i], ids[exceed_j[i]], -values[exceed_t[i], exceed_j[i]]))

    episodes = []
    for i in order:
        t0, j = int(exceed_t[i]), int(exceed_j[i])
        ok = True
        for ep in reversed(episodes):
            if t0 - ep.t0 >= config.delta:
                break   # chronological order: everything earlier is far in time
            if np.hypot(*(coords[j] - ep.s0)) < config.d_min:
                ok = False
                break
        if not ok:
            continue
        window = np.full((config.delta, values.shape[1]), np.nan)
        avail = min(config.delta, n_steps - t0)
        window[:avail] = values[t0:t0 + avail]
        episodes.append(Episode(
            episode_id=len(episodes), point_index=j, point_id=ids[j],
            s0=coords[j].copy(), t0=t0, delta=config.delta, window=window,
            t0_time=None if timestamps is None else timestamps[t0]))
        if config.max_episodes is not None and len(episodes) >= config.max_episodes:
            break
    return EpisodeCatalog(episodes=episodes, u=u, coords=coords, point_ids=ids,
                          delta=config.delta, data=data)


@dataclass
class LagClasses:
    """Spatial distance bins x temporal lags partitioning the analyzed range.

    In exact mode every observed distance is its own class (regular grids);
    otherwise classes are right-open intervals with the zero distance kept
    as its own bin so that temporal-only lags stay identifiable.
    """

    temporal_lags: np.ndarray
    representative: np.ndarray        # one distance per spatial class
    edges: np.ndarray | None = None   # interval mode: edges[i] <= d < edges[i+1]
    exact: np.ndarray | None = None   # exact mode: matched with tolerance
    max_distance: float | None = None

    _EXACT_TOL = 1e-6

    @property
    def n_spatial(self) -> int:
        return self.representative.size

    def assign(self, distances) -> np.ndarray:
        """Spatial class index per distance, -1 when outside the analyzed range."""
        d = np.asarray(distances, dtype=float)
        if self.exact is not None:
            idx = np.searchsorted(self.exact, d)
            idx = np.clip(idx, 0, self.exact.size - 1)
            left = np.clip(idx - 1, 0, self.exact.size - 1)
            use_left = np.abs(self.exact[left] - d) < np.abs(self.exact[idx] - d)
            idx = np.where(use_left, left, idx)
            out = np.where(np.abs(self.exact[idx] - d) <= self._EXACT_TOL, idx, -1)
        else:
            out = np.searchsorted(self.edges, d, side="right") - 1
            out = np.where((out >= 0) & (out < self.n_spatial) & (d < self.edges[-1]), out, -1)
        if self.max_distance is not None:
            out = np.where(d <= self.max_distance, out, -1)
        return out


def lag_classes_for(coords, temporal_lags, n_spatial_bins: int = 10,
                    exact: bool | None = None, max_distance: float | None = None) -> LagClasses:
    """Build lag classes from a point set's pairwise distances.

    ``exact=None`` picks exact classes when the set of distinct distances is
    small (regular grids), equal-count bins otherwise.
    """
    coords = np.asarray(coords, dtype=float)
    temporal_lags = np.asarray(sorted(set(int(t) for t in temporal_lags)))
    if np.any(temporal_lags < 0):
        raise ValueError("temporal lags must be >= 0")
    diff = coords[:, None, :] - coords[None, :, :]
    dists = np.hypot(diff[..., 0], diff[..., 1])[np.triu_indices(coords.shape[0])]
    if max_distance is not None:
        dists = dists[dists <= max_distance]
    uniq = np.unique(np.round(dists, 6))
    if exact is None:
        exact = uniq.size <= max(3 * n_spatial_bins, 40)
    if exact:
        return LagClasses(temporal_lags=temporal_lags, representative=uniq,
                          exact=uniq, max_distance=max_distance)
    pos = np.sort(dists[dists > 0])
    if pos.size == 0:
        raise DataError("no positive pairwise distances to bin")
    qs = np.linspace(0, 1, n_spatial_bins + 1)
    inner = np.unique(np.quantile(pos, qs, method="inverted_cdf"))
    inner[-1] = np.nextafter(pos[-1], np.inf)   # right-open top edge must cover the max
    edges = np.concatenate([[0.0, np.nextafter(0.0, np.inf)], inner[:-1].clip(min=np.nextafter(0.0, np.inf)), [inner[-1]]])
    edges = np.unique(edges)
    reps = np.empty(edges.size - 1)
    reps[0] = 0.0
    for i in range(1, edges.size - 1):
        members = pos[(pos >= edges[i]) & (pos < edges[i + 1])]
        reps[i] = members.mean() if members.size else 0.5 * (edges[i] + edges[i + 1])
    return LagClasses(temporal_lags=temporal_lags, representative=reps, edges=edges,
                      max_distance=max_distance)


@dataclass
class ExceedanceCounts:
    """Joint-exceedance successes K and trials N per (spatial, temporal) class."""

    K: np.ndarray
    N: np.ndarray
    lag_classes: LagClasses

    def chi_hat(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.N > 0, self.K / self.N, np.nan)


def count_joint_exceedances(catalog: EpisodeCatalog, u: float,
                            lag_classes: LagClasses) -> ExceedanceCounts:
    """Tally joint exceedances over all episodes per lag class.

    Every non-missing in-window observation is a Bernoulli trial for its
    (distance-to-conditioning-point, time-since-start) class; the
    conditioning observation itself is excluded since its exceedance holds
    by construction.
    """
    n_s, n_t = lag_classes.n_spatial, lag_classes.temporal_lags.size
    K = np.zeros((n_s, n_t), dtype=np.int64)
    N = np.zeros((n_s, n_t), dtype=np.int64)
    tl_index = {int(t): i for i, t in enumerate(lag_classes.temporal_lags)}
    for ep in catalog:
        dist = np.hypot(*(catalog.coords - ep.s0).T)
        sbin = lag_classes.assign(dist)
        for tau in range(ep.window.shape[0]):
            ti = tl_index.get(tau)
            if ti is None:
                continue
            row = ep.window[tau]
            valid = np.isfinite(row) & (sbin >= 0)
            if tau == 0:
                valid[ep.point_index] = False
            if not valid.any():
                continue
            k = (row > u) & valid
            N[:, ti] += np.bincount(sbin[valid], minlength=n_s)
            K[:, ti] += np.bincount(sbin[k], minlength=n_s)
    return ExceedanceCounts(K=K, N=N, lag_classes=lag_classes)


def exceedance_count_profile(data, q_list, lag_classes: LagClasses | None = None,
                             max_temporal_lag: int = 12, positive_only: bool = True):
    """Joint-exceedance counts by spatial distance and by temporal lag.

    The diagnostic behind the choice of q: for each candidate quantile,
    counts simultaneous exceedances of site pairs per distance class and
    same-site exceedances per time lag. Joint exceedance here means both
    values >= u. Returns a list of (q, kind, lag, count) rows.
    """
    values = data.point_values()
    coords = data.point_coords()
    if lag_classes is None:
        lag_classes = lag_classes_for(coords, range(max_temporal_lag + 1))
    diff = coords[:, None, :] - coords[None, :, :]
    pair_bins = lag_classes.assign(np.hypot(diff[..., 0], diff[..., 1]))
    iu, ju = np.triu_indices(coords.shape[0], k=1)
    pair_bins_flat = pair_bins[iu, ju]

    rows = []
    for q in q_list:
        u = threshold_from_quantile(values, q, positive_only=positive_only)
        W = np.isfinite(values) & (values >= u)
        Wf = W.astype(np.float32)
        joint = (Wf.T @ Wf)[iu, ju].astype(np.int64)
        spatial = np.zeros(lag_classes.n_spatial, dtype=np.int64)
        ok = pair_bins_flat >= 0
        np.add.at(spatial, pair_bins_flat[ok], joint[ok])
        for b in range(lag_classes.n_spatial):
            if lag_classes.representative[b] > 0:
                rows.append((q, "spatial", float(lag_classes.representative[b]), int(spatial[b])))
        for tau in lag_classes.temporal_lags:
            tau = int(tau)
            if tau == 0 or tau >= W.shape[0]:
                continue
            rows.append((q, "temporal", float(tau), int(np.sum(W[:-tau] & W[tau:]))))
    return rows


def episode_tradeoff(data, u: float, delta_grid, dmin_grid):
    """Episode counts over a grid of (delta, d_min) configurations."""
    rows = []
    for delta in delta_grid:
        for d_min in dmin_grid:
            cfg = EpisodeConfig(q=0.5, delta=int(delta), d_min=float(d_min))
            rows.append((int(delta), float(d_min), len(select_episodes(data, u, cfg))))
    return rows


CATALOG_HEADER = ["episode_id", "site_id_or_pixel", "t0", "delta", "vx", "vy",
                  "n_exceedances", "v_source"]


def write_catalog_csv(path, catalog: EpisodeCatalog):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CATALOG_HEADER)
        for ep in catalog:
            vx = "" if ep.v_emp is None else f"{ep.v_emp.vx:.10g}"
            vy = "" if ep.v_emp is None else f"{ep.v_emp.vy:.10g}"
            writer.writerow([ep.episode_id, ep.point_id, ep.t0, ep.delta, vx, vy,
                             ep.n_exceedances(catalog.u), ep.v_source or ""])


def read_catalog_csv(path, data, u: float) -> EpisodeCatalog:
    """Rebuild a catalog against its source data container."""
    values = data.point_values()
    coords = data.point_coords()
    ids = data.point_ids()
    timestamps = getattr(data, "timestamps", None)
    id_index = {str(pid): j for j, pid in enumerate(ids)}
    episodes = []
    delta = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1:
                if row != CATALOG_HEADER:
                    raise DataError(f"line 1: unexpected catalog header {row}")
                continue
            if not row:
                continue
            if len(row) != len(CATALOG_HEADER):
                raise DataError(f"line {lineno}: expected {len(CATALOG_HEADER)} fields")
            try:
                t0, delta = int(row[2]), int(row[3])
                j = id_index[row[1]]
            except (ValueError, KeyError):
                raise DataError(f"line {lineno}: malformed catalog row") from None
            window = np.full((delta, values.shape[1]), np.nan)
            avail = min(delta, values.shape[0] - t0)
            window[:avail] = values[t0:t0 + avail]
            v_emp = None
            if row[4] != "" and row[5] != "":
                v_emp = Velocity(float(row[4]), float(row[5]))
            episodes.append(Episode(
                episode_id=int(row[0]), point_index=j, point_id=ids[j],
                s0=coords[j].copy(), t0=t0, delta=delta, window=window,
                t0_time=None if timestamps is None else timestamps[t0],
                v_emp=v_emp, v_source=row[7] or None))
    if delta is None:
        raise DataError(f"no episodes in {path}")
    return EpisodeCatalog(episodes=episodes, u=u, coords=coords, point_ids=ids,
                          delta=delta, data=data)
