"""Space-time rainfall containers and file ingestion.

Two observation layouts are supported: irregular gauge networks (per-site
series plus a coordinate table) and regular grids. Both expose a common
point-set view (coords, values matrix, ids) that episode selection, counting
and inference consume, so gauges and pixels flow through identical code.

Formats:
  - gauge CSV: ``timestamp,site_id,value_mm`` (ISO-8601 or integer step;
    empty value field = missing)
  - site CSV: ``site_id,x_m,y_m``
  - grid CSV: ``timestamp,x_m,y_m,value_mm`` (regular grid validated on load)
  - grid binary: magic line + one JSON header line (dimensions, origin,
    pixel size, step length) + raw float64 values, NaN = missing
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError

GRID_MAGIC = b"STORMGRID1\n"


def _parse_time(token: str, lineno: int):
    """Integer step or ISO-8601 timestamp -> (key, is_integer)."""
    token = token.strip()
    try:
        return int(token), True
    except ValueError:
        pass
    try:
        return np.datetime64(token), False
    except ValueError:
        raise DataError(f"line {lineno}: unparseable timestamp {token!r}") from None


def _parse_value(token: str, lineno: int) -> float:
    token = token.strip()
    if token == "":
        return np.nan
    try:
        v = float(token)
    except ValueError:
        raise DataError(f"line {lineno}: unparseable value {token!r}") from None
    if v < 0:
        raise DataError(f"line {lineno}: negative rainfall {v}")
    return v


def _time_axis(keys, integer: bool):
    """Sorted unique time keys -> (step indices array, timestamps or None).

    Gaps in a uniformly spaced axis are filled so that one step always means
    one sampling interval; filled rows stay missing.
    """
    uniq = np.array(sorted(set(keys)))
    if uniq.size > 1:
        diffs = np.diff(uniq)
        step = diffs.min()
        if step <= (0 if integer else np.timedelta64(0)):
            raise DataError("duplicate or non-increasing timestamps")
        n_total = int(round((uniq[-1] - uniq[0]) / step)) + 1
        full = uniq[0] + np.arange(n_total) * step
        offsets = np.asarray((uniq - uniq[0]) / step, dtype=float)
        if not np.allclose(offsets, np.round(offsets), atol=1e-6):
            raise DataError("timestamps are not aligned on a uniform step")
        index = {k: int(round(o)) for k, o in zip(uniq, offsets)}
    else:
        full = uniq
        index = {uniq[0]: 0}
    timestamps = None if integer else full
    return index, len(index) and (max(index.values()) + 1), timestamps


@dataclass
class GaugeSeries:
    """Irregular-network rainfall series on a uniform time step."""

    site_ids: list
    coords: np.ndarray | None    # (n_sites, 2) meters, or None when unknown
    values: np.ndarray           # (n_steps, n_sites), NaN = missing
    timestamps: np.ndarray | None = None   # (n_steps,) datetime64, or None

    @property
    def n_sites(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    # point-set view shared with GriddedField
    def point_ids(self):
        return list(self.site_ids)

    def point_coords(self) -> np.ndarray:
        if self.coords is None:
            raise DataError("gauge coordinates unknown; provide a site table")
        return self.coords

    def point_values(self) -> np.ndarray:
        return self.values


@dataclass
class GriddedField:
    """Regular-grid rainfall field (pixel centers, uniform step)."""

    x: np.ndarray                # (nx,) meters
    y: np.ndarray                # (ny,)
    values: np.ndarray           # (n_steps, ny, nx), NaN = missing
    step_seconds: float = 3600.0
    timestamps: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def pixel_size(self) -> float:
        return float(self.x[1] - self.x[0]) if self.x.size > 1 else float(
            self.y[1] - self.y[0])

    def point_ids(self):
        return list(range(self.x.size * self.y.size))

    def point_coords(self) -> np.ndarray:
        xx, yy = np.meshgrid(self.x, self.y)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def point_values(self) -> np.ndarray:
        return self.values.reshape(self.n_steps, -1)


def read_sites_csv(path) -> dict:
    """site_id -> (x_m, y_m)."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and row and row[0].strip().lower() == "site_id":
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataError(f"line {lineno}: expected site_id,x_m,y_m")
            try:
                out[row[0].strip()] = (float(row[1]), float(row[2]))
            except ValueError:
                raise DataError(f"line {lineno}: unparseable coordinate") from None
    if not out:
        raise DataError(f"no sites in {path}")
    return out


def read_gauge_csv(path, sites: dict | None = None) -> GaugeSeries:
    """Load ``timestamp,site_id,value_mm`` rows into a GaugeSeries.

    ``sites`` maps site_id to coordinates; sites absent from the mapping are
    kept with unknown coordinates only if no mapping is given at all.
    """
    records = []
    integer_time = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and row and row[0].strip().lower() in ("timestamp", "time"):
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataError(f"line {lineno}: expected timestamp,site_id,value_mm "
                                f"(got {len(row)} fields)")
            tkey, is_int = _parse_time(row[0], lineno)
            if integer_time is None:
                integer_time = is_int
            elif integer_time != is_int:
                raise DataError(f"line {lineno}: mixed integer and ISO timestamps")
            records.append((tkey, row[1].strip(), _parse_value(row[2], lineno), lineno))
    if not records:
        raise DataError(f"no data rows in {path}")

    index, n_steps, timestamps = _time_axis([r[0] for r in records], integer_time)
    site_ids = sorted({r[1] for r in records})
    col = {s: j for j, s in enumerate(site_ids)}
    values = np.full((n_steps, len(site_ids)), np.nan)
    seen = set()
    for tkey, sid, val, lineno in records:
        cell = (index[tkey], col[sid])
        if cell in seen:
            raise DataError(f"line {lineno}: duplicate observation for "
                            f"site {sid!r} at {tkey}")
        seen.add(cell)
        values[cell] = val

    coords = None
    if sites is not None:
        missing = [s for s in site_ids if s not in sites]
        if missing:
            raise DataError(f"sites without coordinates: {missing}")
        coords = np.array([sites[s] for s in site_ids], dtype=float)
    return GaugeSeries(site_ids=site_ids, coords=coords, values=values,
                       timestamps=timestamps)


def _regular_axis(vals, what: str) -> np.ndarray:
    axis = np.unique(vals)
    if axis.size > 1:
        steps = np.diff(axis)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-9):
            raise DataError(f"{what} coordinates are not on a regular grid")
    return axis


def read_grid_csv(path, step_seconds: float = 3600.0) -> GriddedField:
    """Load long-format ``timestamp,x_m,y_m,value_mm`` rows into a GriddedField."""
    records = []
    integer_time = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and row and row[0].strip().lower() in ("timestamp", "time"):
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise DataError(f"line {lineno}: expected timestamp,x_m,y_m,value_mm")
            tkey, is_int = _parse_time(row[0], lineno)
            if integer_time is None:
                integer_time = is_int
            elif integer_time != is_int:
                raise DataError(f"line {lineno}: mixed integer and ISO timestamps")
            try:
                xy = (float(row[1]), float(row[2]))
            except ValueError:
                raise DataError(f"line {lineno}: unparseable coordinate") from None
            records.append((tkey, xy, _parse_value(row[3], lineno)))
    if not records:
        raise DataError(f"no data rows in {path}")

    index, n_steps, timestamps = _time_axis([r[0] for r in records], integer_time)
    x = _regular_axis([r[1][0] for r in records], "x")
    y = _regular_axis([r[1][1] for r in records], "y")
    xi = {v: i for i, v in enumerate(x)}
    yi = {v: i for i, v in enumerate(y)}
    values = np.full((n_steps, y.size, x.size), np.nan)
    for tkey, (px, py), val in records:
        values[index[tkey], yi[py], xi[px]] = val
    return GriddedField(x=x, y=y, values=values, step_seconds=step_seconds,
                        timestamps=timestamps)


def write_grid_binary(path, field: GriddedField):
    header = {
        "nx": int(field.x.size), "ny": int(field.y.size), "nt": int(field.n_steps),
        "x0": float(field.x[0]), "y0": float(field.y[0]),
        "pixel_m": field.pixel_size, "step_seconds": field.step_seconds,
    }
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(np.ascontiguousarray(field.values, dtype=np.float64).tobytes())


def read_grid_binary(path) -> GriddedField:
    with open(path, "rb") as fh:
        magic = fh.read(len(GRID_MAGIC))
        if magic != GRID_MAGIC:
            raise DataError(f"{path} is not a stormgen grid binary")
        header = json.loads(fh.readline().decode())
        raw = fh.read()
    nt, ny, nx = header["nt"], header["ny"], header["nx"]
    expected = nt * ny * nx * 8
    if len(raw) != expected:
        raise DataError(f"grid binary payload is {len(raw)} bytes, expected {expected}")
    values = np.frombuffer(raw, dtype=np.float64).reshape(nt, ny, nx).copy()
    x = header["x0"] + header["pixel_m"] * np.arange(nx)
    y = header["y0"] + header["pixel_m"] * np.arange(ny)
    return GriddedField(x=x, y=y, values=values, step_seconds=header["step_seconds"])
