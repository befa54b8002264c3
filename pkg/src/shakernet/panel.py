"""Multi-view panel time series: ingestion, alignment and lag pairs.

A panel holds ``V`` views (attributes) of ``N`` entities sampled at ``L``
common timestamps. Values live in a dense ``(V, L, N)`` tensor; every
downstream matrix uses the entity order fixed here (lexicographic).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import (
    DataError,
    DuplicateCell,
    InvalidDimensions,
    MissingCell,
    NonNumericValue,
    UnknownView,
    WindowTooShort,
)

TRANSFORMS = ("raw", "simple-return", "log-return")
FILL_POLICIES = ("reject", "ffill")
HEADER = ("timestamp", "entity", "view", "value")


@dataclass(frozen=True)
class CsvSchema:
    """Column names of the long-format input file."""

    timestamp: str = "timestamp"
    entity: str = "entity"
    view: str = "view"
    value: str = "value"


def time_keys(labels: Sequence[str]) -> np.ndarray:
    """Sortable int64 keys for timestamp labels (integer ticks or ISO-8601)."""
    labels = [str(x).strip() for x in labels]
    try:
        return np.array([int(x) for x in labels], dtype=np.int64)
    except ValueError:
        pass
    try:
        parsed = pd.to_datetime(pd.Series(labels), format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise DataError(f"timestamps are neither integer ticks nor ISO-8601: {exc}") from exc
    return parsed.astype("int64").to_numpy()


@dataclass(frozen=True)
class PanelSeries:
    views: tuple
    entities: tuple
    timestamps: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(str(v) for v in self.views))
        object.__setattr__(self, "entities", tuple(str(e) for e in self.entities))
        object.__setattr__(self, "timestamps", tuple(str(t) for t in self.timestamps))
        for name in ("views", "entities", "timestamps"):
            labels = getattr(self, name)
            if len(set(labels)) != len(labels):
                raise DuplicateCell(f"duplicate labels in {name}")
        values = np.array(self.values, dtype=np.float64)
        shape = (len(self.views), len(self.timestamps), len(self.entities))
        if values.shape != shape:
            raise InvalidDimensions(f"values shape {values.shape} != (views, time, entities) {shape}")
        if not np.all(np.isfinite(values)):
            raise NonNumericValue("panel values must be finite")
        if len(self.timestamps) > 1 and np.any(np.diff(time_keys(self.timestamps)) <= 0):
            raise DataError("timestamps must be strictly increasing")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    def view_index(self, view) -> int:
        try:
            return self.views.index(str(view))
        except ValueError:
            raise UnknownView(f"unknown view {view!r}; available: {list(self.views)}") from None

    def entity_index(self, entity) -> int:
        try:
            return self.entities.index(str(entity))
        except ValueError:
            raise DataError(f"unknown entity {entity!r}") from None

    def view_matrix(self, view) -> np.ndarray:
        """``(L, N)`` slice of one view."""
        return self.values[self.view_index(view)]

    def window_bounds(self, window=None) -> tuple[int, int]:
        """Inclusive positional bounds of a ``(t_begin, t_end)`` label window."""
        if window is None:
            return 0, len(self.timestamps) - 1
        begin, end = window
        lo = 0 if begin is None else self._time_pos(begin)
        hi = len(self.timestamps) - 1 if end is None else self._time_pos(end)
        if hi < lo:
            raise DataError(f"window end {end!r} precedes begin {begin!r}")
        return lo, hi

    def _time_pos(self, label) -> int:
        try:
            return self.timestamps.index(str(label))
        except ValueError:
            raise DataError(f"timestamp {label!r} not in panel") from None

    def restrict(self, window=None, views=None, entities=None) -> "PanelSeries":
        lo, hi = self.window_bounds(window)
        vidx = list(range(len(self.views))) if views is None else [self.view_index(v) for v in views]
        eidx = (
            list(range(len(self.entities)))
            if entities is None
            else [self.entity_index(e) for e in entities]
        )
        values = self.values[np.ix_(vidx, range(lo, hi + 1), eidx)]
        return PanelSeries(
            [self.views[i] for i in vidx],
            [self.entities[i] for i in eidx],
            self.timestamps[lo : hi + 1],
            values,
        )


@dataclass(frozen=True)
class LagPair:
    """Consecutive-time design pair: row ``s`` of ``Y`` is one step after row ``s`` of ``X``."""

    X: np.ndarray
    Y: np.ndarray
    view: str

    def __post_init__(self):
        if self.X.shape != self.Y.shape or self.X.ndim != 2:
            raise InvalidDimensions(f"X {self.X.shape} and Y {self.Y.shape} must be equal 2-D shapes")

    @property
    def S(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.X.shape[1]


def _parse_float(text):
    try:
        x = float(text)
    except (TypeError, ValueError):
        return math.nan
    return x


def ingest_csv(
    path,
    schema: CsvSchema | None = None,
    transform: str = "raw",
    fill: str = "reject",
    views: Sequence[str] | None = None,
) -> PanelSeries:
    """Read a long-format CSV into a dense, aligned :class:`PanelSeries`.

    Rows are ``(timestamp, entity, view, value)``. Entities and views are
    sorted lexicographically; timestamps by their parsed time. ``fill="ffill"``
    carries the last observation forward; a cell missing at the first
    timestamp cannot be filled and still raises :class:`MissingCell`.
    """
    schema = schema or CsvSchema()
    if transform not in TRANSFORMS:
        raise ValueError(f"transform must be one of {TRANSFORMS}, got {transform!r}")
    if fill not in FILL_POLICIES:
        raise ValueError(f"fill must be one of {FILL_POLICIES}, got {fill!r}")

    cols = [schema.timestamp, schema.entity, schema.view, schema.value]
    df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    missing_cols = [c for c in cols if c not in df.columns]
    if missing_cols:
        raise DataError(f"{path}: missing columns {missing_cols}")
    df = df[cols].copy()
    df.columns = list(HEADER)
    for c in ("timestamp", "entity", "view"):
        df[c] = df[c].str.strip()
    if views is not None:
        unknown = sorted(set(views) - set(df["view"]))
        if unknown:
            raise UnknownView(f"views {unknown} not present in {path}")
        df = df[df["view"].isin(list(views))]

    df["value"] = df["value"].map(_parse_float)
    bad = ~np.isfinite(df["value"].to_numpy())
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise NonNumericValue(f"{path}: non-numeric value at data row {row + 1}")
    dup = df.duplicated(["timestamp", "entity", "view"])
    if dup.any():
        r = df[dup].iloc[0]
        raise DuplicateCell(f"{path}: duplicate cell ({r.timestamp}, {r.entity}, {r.view})")

    ts_labels = df["timestamp"].unique()
    order = np.argsort(time_keys(ts_labels), kind="stable")
    timestamps = [ts_labels[i] for i in order]
    if len(set(time_keys(timestamps))) != len(timestamps):
        raise DuplicateCell(f"{path}: distinct timestamp labels map to the same time")
    entities = sorted(df["entity"].unique())
    view_list = sorted(df["view"].unique())

    t_pos = {t: i for i, t in enumerate(timestamps)}
    e_pos = {e: i for i, e in enumerate(entities)}
    v_pos = {v: i for i, v in enumerate(view_list)}
    values = np.full((len(view_list), len(timestamps), len(entities)), np.nan)
    values[
        df["view"].map(v_pos).to_numpy(),
        df["timestamp"].map(t_pos).to_numpy(),
        df["entity"].map(e_pos).to_numpy(),
    ] = df["value"].to_numpy()

    holes = np.isnan(values)
    if holes.any():
        if fill == "ffill":
            values = _forward_fill(values)
            holes = np.isnan(values)
        if holes.any():
            v, t, e = (int(i[0]) for i in np.nonzero(holes))
            raise MissingCell(
                f"{path}: no value for (timestamp={timestamps[t]}, entity={entities[e]}, view={view_list[v]})"
            )

    panel = PanelSeries(view_list, entities, timestamps, values)
    return apply_transform(panel, transform)


def _forward_fill(values: np.ndarray) -> np.ndarray:
    out = values.copy()
    for t in range(1, out.shape[1]):
        row = out[:, t, :]
        mask = np.isnan(row)
        row[mask] = out[:, t - 1, :][mask]
    return out


def apply_transform(panel: PanelSeries, transform: str) -> PanelSeries:
    """Convert levels to returns; the first timestamp is consumed."""
    if transform == "raw":
        return panel
    v = panel.values
    prev, cur = v[:, :-1, :], v[:, 1:, :]
    if transform == "simple-return":
        if np.any(prev == 0):
            raise DataError("simple-return transform hit a zero level")
        out = cur / prev - 1.0
    elif transform == "log-return":
        if np.any(v <= 0):
            raise DataError("log-return transform needs strictly positive levels")
        out = np.log(cur / prev)
    else:
        raise ValueError(f"unknown transform {transform!r}")
    return PanelSeries(panel.views, panel.entities, panel.timestamps[1:], out)


def export_csv(panel: PanelSeries, path) -> None:
    """Write the long-format CSV; floats use shortest round-trip repr."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for t, ts in enumerate(panel.timestamps):
            for e, ent in enumerate(panel.entities):
                for v, view in enumerate(panel.views):
                    w.writerow((ts, ent, view, repr(float(panel.values[v, t, e]))))


def standardize(panel: PanelSeries) -> PanelSeries:
    """Z-score each (view, entity) series over the panel's full time range.

    Constant series are centred only.
    """
    v = panel.values
    mean = v.mean(axis=1, keepdims=True)
    std = v.std(axis=1, keepdims=True)
    std = np.where(std > 0, std, 1.0)
    return PanelSeries(panel.views, panel.entities, panel.timestamps, (v - mean) / std)


def make_lag_pair(panel: PanelSeries, view, window=None) -> LagPair:
    """Split one view over ``window`` into the one-step-ahead pair ``(X, Y)``."""
    vi = panel.view_index(view)
    lo, hi = panel.window_bounds(window)
    n_ts = hi - lo + 1
    if n_ts < 3:
        raise WindowTooShort(f"window holds {n_ts} timestamps; need at least 3")
    block = panel.values[vi, lo : hi + 1, :]
    return LagPair(block[:-1].copy(), block[1:].copy(), panel.views[vi])
