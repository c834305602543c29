"""Travel-survey data model, CSV ingestion, splitting and min-max scaling.

A :class:`Dataset` is stored column-wise in read-only numpy arrays.  Row
access through :class:`ChoiceObservation` is provided for convenience, but
every numerical routine in the package works on the columns directly.
"""
import csv
import enum
import os
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from modechoice._util import atomic_write_text, format_number
from modechoice.exceptions import (
    BadLabelError,
    DimensionMismatchError,
    DuplicateIdError,
    EmptyDatasetError,
    KTooLargeError,
    MissingColumnError,
    NegativeTimeError,
    NegativeValueError,
    NonNumericFieldError,
    SchemaMismatchError,
)

SCHEMA_VERSION = "1.0"
N_MODES = 8


class ModeLabel(enum.IntEnum):
    METRO = 1
    BUS = 2
    SHARED_RIDE = 3
    AUTO = 4
    TWO_WHEELER = 5
    CAR = 6
    CYCLE = 7
    WALK = 8

    @property
    def short(self):
        return MODE_KEYS[self.value - 1]


# column suffixes used in the CSV header, in mode-code order
MODE_KEYS = ("metro", "bus", "sr", "auto", "tw", "car", "cycle", "walk")
MODE_NAMES = ("Metro", "Bus", "SharedRide", "Auto", "TwoWheeler", "Car", "Cycle", "Walk")
MODE_CODES = tuple(range(1, N_MODES + 1))

INDIVIDUAL_COLUMNS = (
    "age", "gender", "hh_income", "n_two_wheelers", "metro_avail", "pop_density", "emp_density",
)
TT_COLUMNS = tuple(f"tt_{m}" for m in MODE_KEYS)
TC_COLUMNS = tuple(f"tc_{m}" for m in MODE_KEYS)
CSV_COLUMNS = ("id",) + INDIVIDUAL_COLUMNS + TT_COLUMNS + TC_COLUMNS + ("chosen",)
# optional segment columns (trip purpose, occupation) that may trail the required ones
OPTIONAL_COLUMNS = ("trip_purpose", "occupation")

#: column order of :meth:`Dataset.feature_matrix`
FEATURE_NAMES = INDIVIDUAL_COLUMNS + TT_COLUMNS + TC_COLUMNS
CATEGORICAL_FEATURES = ("gender", "metro_avail")
SCALED_FEATURES = tuple(f for f in FEATURE_NAMES if f not in CATEGORICAL_FEATURES)

TRIP_PURPOSES = {1: "work", 2: "education", 3: "leisure"}
OCCUPATIONS = {1: "salaried", 2: "wage_worker", 3: "self_employed"}


@dataclass(frozen=True)
class ChoiceObservation:
    """One commuter trip."""

    id: int
    age: float
    gender: int
    hh_income: float
    n_two_wheelers: float
    metro_avail: int
    pop_density: float
    emp_density: float
    travel_time: tuple
    travel_cost: tuple
    chosen: ModeLabel
    trip_purpose: Optional[int] = None
    occupation: Optional[int] = None


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column store of choice observations.

    ``tt`` and ``tc`` are ``(n, 8)`` arrays of per-alternative travel time
    (minutes) and cost (rupees) in mode-code order.  ``availability`` is an
    optional ``(n, 8)`` boolean mask consumed by the logit model.  Datasets
    produced by :func:`apply_minmax` carry ``scaled=True`` and skip the
    natural-unit range checks.
    """

    ids: np.ndarray
    age: np.ndarray
    gender: np.ndarray
    hh_income: np.ndarray
    n_two_wheelers: np.ndarray
    metro_avail: np.ndarray
    pop_density: np.ndarray
    emp_density: np.ndarray
    tt: np.ndarray
    tc: np.ndarray
    chosen: np.ndarray
    trip_purpose: Optional[np.ndarray] = None
    occupation: Optional[np.ndarray] = None
    availability: Optional[np.ndarray] = None
    schema_version: str = SCHEMA_VERSION
    scaled: bool = False
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "ids", _frozen(self.ids, np.int64))
        n = self.ids.shape[0]
        for name in INDIVIDUAL_COLUMNS:
            col = _frozen(getattr(self, name), np.float64)
            if col.shape != (n,):
                raise DimensionMismatchError(f"column {name!r} has shape {col.shape}, expected ({n},)")
            set_(self, name, col)
        for name in ("tt", "tc"):
            arr = _frozen(getattr(self, name), np.float64)
            if arr.shape != (n, N_MODES):
                raise DimensionMismatchError(f"{name} has shape {arr.shape}, expected ({n}, {N_MODES})")
            set_(self, name, arr)
        chosen = np.asarray(self.chosen)
        if chosen.shape != (n,):
            raise DimensionMismatchError(f"chosen has shape {chosen.shape}, expected ({n},)")
        if n and (chosen.min() < 1 or chosen.max() > N_MODES or not np.all(chosen == np.round(chosen))):
            bad = int(np.flatnonzero((chosen < 1) | (chosen > N_MODES) | (chosen != np.round(chosen)))[0])
            raise BadLabelError(f"row {bad}: mode code {chosen[bad]!r} outside 1..{N_MODES}")
        set_(self, "chosen", _frozen(chosen, np.int64))
        for name in OPTIONAL_COLUMNS:
            col = getattr(self, name)
            if col is not None:
                col = _frozen(col, np.int64)
                if col.shape != (n,):
                    raise DimensionMismatchError(f"column {name!r} has shape {col.shape}")
                set_(self, name, col)
        if self.availability is not None:
            av = _frozen(self.availability, bool)
            if av.shape != (n, N_MODES):
                raise DimensionMismatchError(f"availability has shape {av.shape}")
            set_(self, "availability", av)
        if len(np.unique(self.ids)) != n:
            raise DuplicateIdError("observation ids are not unique")
        if self.validate and not self.scaled:
            self._check_ranges()

    def _check_ranges(self):
        if np.any(~np.isfinite(self.tt)) or np.any(self.tt <= 0):
            row = int(np.flatnonzero(np.any(~(self.tt > 0), axis=1))[0])
            raise NegativeTimeError(f"row {row}: travel time must be > 0")
        if np.any(~(self.tc >= 0)):
            row = int(np.flatnonzero(np.any(~(self.tc >= 0), axis=1))[0])
            raise NegativeValueError(f"row {row}: travel cost must be >= 0")
        for name in ("age", "hh_income", "pop_density", "emp_density", "n_two_wheelers"):
            col = getattr(self, name)
            if np.any(~(col >= 0)):
                row = int(np.flatnonzero(~(col >= 0))[0])
                raise NegativeValueError(f"row {row}: {name} must be >= 0")

    # ------------------------------------------------------------------ access
    def __len__(self):
        return int(self.ids.shape[0])

    @property
    def n(self):
        return len(self)

    def __getitem__(self, i):
        i = int(i)
        return ChoiceObservation(
            id=int(self.ids[i]),
            age=float(self.age[i]),
            gender=int(self.gender[i]),
            hh_income=float(self.hh_income[i]),
            n_two_wheelers=float(self.n_two_wheelers[i]),
            metro_avail=int(self.metro_avail[i]),
            pop_density=float(self.pop_density[i]),
            emp_density=float(self.emp_density[i]),
            travel_time=tuple(float(v) for v in self.tt[i]),
            travel_cost=tuple(float(v) for v in self.tc[i]),
            chosen=ModeLabel(int(self.chosen[i])),
            trip_purpose=None if self.trip_purpose is None else int(self.trip_purpose[i]),
            occupation=None if self.occupation is None else int(self.occupation[i]),
        )

    @property
    def observations(self):
        return tuple(self[i] for i in range(len(self)))

    @classmethod
    def from_observations(cls, observations, **kwargs):
        obs = list(observations)
        cols = {name: [getattr(o, name) for o in obs] for name in INDIVIDUAL_COLUMNS}
        extras = {}
        for name in OPTIONAL_COLUMNS:
            vals = [getattr(o, name) for o in obs]
            if obs and all(v is not None for v in vals):
                extras[name] = vals
        return cls(
            ids=[o.id for o in obs],
            tt=np.array([o.travel_time for o in obs], dtype=float).reshape(len(obs), N_MODES),
            tc=np.array([o.travel_cost for o in obs], dtype=float).reshape(len(obs), N_MODES),
            chosen=[int(o.chosen) for o in obs],
            **cols,
            **extras,
            **kwargs,
        )

    def column(self, name):
        """Return a named column (``tt_bus``, ``hh_income``, ...) as an array."""
        if name in INDIVIDUAL_COLUMNS:
            return getattr(self, name)
        if name in TT_COLUMNS:
            return self.tt[:, TT_COLUMNS.index(name)]
        if name in TC_COLUMNS:
            return self.tc[:, TC_COLUMNS.index(name)]
        if name in OPTIONAL_COLUMNS or name in ("ids", "chosen"):
            col = getattr(self, name)
            if col is None:
                raise MissingColumnError(name)
            return col
        if name == "id":
            return self.ids
        raise MissingColumnError(name)

    def with_columns(self, updates, **kwargs):
        """Copy of the dataset with some feature columns replaced."""
        tt = self.tt.copy()
        tc = self.tc.copy()
        changes = {}
        for name, values in updates.items():
            values = np.broadcast_to(np.asarray(values, dtype=float), (len(self),))
            if name in TT_COLUMNS:
                tt[:, TT_COLUMNS.index(name)] = values
            elif name in TC_COLUMNS:
                tc[:, TC_COLUMNS.index(name)] = values
            elif name in INDIVIDUAL_COLUMNS:
                changes[name] = values
            else:
                raise MissingColumnError(name)
        return replace(self, tt=tt, tc=tc, **changes, **kwargs)

    def subset(self, index):
        index = np.asarray(index)
        kw = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                kw[f.name] = v[index]
        return replace(self, **kw)

    def feature_matrix(self):
        """``(n, 23)`` float matrix with columns :data:`FEATURE_NAMES`."""
        ind = np.column_stack([getattr(self, c) for c in INDIVIDUAL_COLUMNS]) if len(self) else np.empty((0, 7))
        return np.hstack([ind, self.tt, self.tc])

    @property
    def labels(self):
        return self.chosen

    def class_counts(self):
        return np.bincount(self.chosen, minlength=N_MODES + 1)[1:]

    def equals(self, other):
        """Bit-exact equality of every column."""
        if not isinstance(other, Dataset):
            return False
        for f in fields(self):
            if f.name == "validate":
                continue
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if a is None or b is None or a.shape != b.shape or a.tobytes() != b.tobytes():
                    return False
            elif a != b:
                return False
        return True


# ---------------------------------------------------------------------------- csv

def _parse_number(text, row, column):
    try:
        value = float(text)
    except ValueError:
        raise NonNumericFieldError(row, column, text) from None
    return value


def load_csv(path, strict=True):
    """Read a survey CSV into a :class:`Dataset`.

    The header must contain every column of :data:`CSV_COLUMNS`.  The
    optional ``trip_purpose`` and ``occupation`` columns are picked up when
    present.  With ``strict=True`` any other extra column is rejected and the
    required columns must appear in the documented order; otherwise unknown
    columns are ignored.

    Rows are numbered from 1 (first data row) in error messages.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumnError(CSV_COLUMNS[0]) from None
        for col in CSV_COLUMNS:
            if col not in header:
                raise MissingColumnError(col)
        if strict:
            unknown = [h for h in header if h not in CSV_COLUMNS and h not in OPTIONAL_COLUMNS]
            if unknown:
                raise SchemaMismatchError(f"unexpected column {unknown[0]!r}")
            required_order = [h for h in header if h in CSV_COLUMNS]
            if tuple(required_order) != CSV_COLUMNS:
                raise SchemaMismatchError("required columns are out of order")
        pos = {h: i for i, h in enumerate(header)}
        optional = [c for c in OPTIONAL_COLUMNS if c in pos]
        wanted = list(CSV_COLUMNS) + optional
        values = {c: [] for c in wanted}
        for r, cells in enumerate(reader, start=1):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise SchemaMismatchError(f"row {r}: expected {len(header)} fields, got {len(cells)}")
            for c in wanted:
                values[c].append(_parse_number(cells[pos[c]].strip(), r, c))
    chosen = np.array(values["chosen"], dtype=float)
    bad = np.flatnonzero((chosen < 1) | (chosen > N_MODES) | (chosen != np.round(chosen)))
    if bad.size:
        r = int(bad[0]) + 1
        raise BadLabelError(f"row {r}: chosen={format_number(chosen[bad[0]])} outside 1..{N_MODES}")
    tt = np.column_stack([values[c] for c in TT_COLUMNS]) if values["id"] else np.empty((0, N_MODES))
    bad = np.flatnonzero(np.any(~(tt > 0), axis=1)) if tt.size else []
    if len(bad):
        raise NegativeTimeError(f"row {int(bad[0]) + 1}: travel time must be > 0")
    tc = np.column_stack([values[c] for c in TC_COLUMNS]) if values["id"] else np.empty((0, N_MODES))
    ids = np.array(values["id"], dtype=float)
    if np.any(ids != np.round(ids)):
        r = int(np.flatnonzero(ids != np.round(ids))[0]) + 1
        raise NonNumericFieldError(r, "id", format_number(ids[r - 1]))
    return Dataset(
        ids=ids.astype(np.int64),
        tt=tt,
        tc=tc,
        chosen=chosen.astype(np.int64),
        **{c: values[c] for c in INDIVIDUAL_COLUMNS},
        **{c: np.array(values[c]).astype(np.int64) for c in optional},
    )


def write_csv(d, path):
    """Write ``d`` in the ingestion schema; the file round-trips bit-exactly."""
    header = list(CSV_COLUMNS)
    optional = [c for c in OPTIONAL_COLUMNS if getattr(d, c) is not None]
    header += optional
    cols = [d.ids] + [getattr(d, c) for c in INDIVIDUAL_COLUMNS]
    cols += [d.tt[:, j] for j in range(N_MODES)] + [d.tc[:, j] for j in range(N_MODES)] + [d.chosen]
    cols += [getattr(d, c) for c in optional]
    lines = [",".join(header)]
    for i in range(len(d)):
        lines.append(",".join(format_number(c[i]) for c in cols))
    atomic_write_text(path, "\n".join(lines) + "\n")
    return os.fspath(path)


# ----------------------------------------------------------------------- splitting

def stratified_split(d, train_fraction=0.7, seed=0):
    """Split ``d`` into (train, test) preserving per-class proportions.

    Each class is shuffled with a seeded generator and its first
    ``floor(count * train_fraction + 0.5)`` members go to the training part.
    Both parts keep the original row order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    if len(d) == 0:
        raise EmptyDatasetError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    train_mask = np.zeros(len(d), dtype=bool)
    for code in MODE_CODES:
        members = np.flatnonzero(d.chosen == code)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        n_train = int(np.floor(members.size * train_fraction + 0.5))
        train_mask[members[:n_train]] = True
    return d.subset(np.flatnonzero(train_mask)), d.subset(np.flatnonzero(~train_mask))


def kfold_indices(n, k=5, seed=0):
    """Shuffled k-fold partition of ``range(n)``.

    Returns a list of ``(train_idx, val_idx)`` pairs; validation folds are
    disjoint, cover every index and differ in size by at most one.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise KTooLargeError(f"k={k} exceeds n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    out = []
    for j in range(k):
        val = np.sort(folds[j])
        train = np.sort(np.concatenate([folds[i] for i in range(k) if i != j]))
        out.append((train, val))
    return out


# ------------------------------------------------------------------------- scaling

@dataclass(frozen=True)
class ScalerParams:
    """Per-feature training-set bounds for min-max scaling."""

    features: tuple
    mins: tuple
    maxs: tuple

    def __post_init__(self):
        if not (len(self.features) == len(self.mins) == len(self.maxs)):
            raise DimensionMismatchError("features, mins and maxs must have equal length")
        for f, lo, hi in zip(self.features, self.mins, self.maxs):
            if hi < lo:
                raise ValueError(f"feature {f!r}: max < min")

    @property
    def degenerate(self):
        return tuple(f for f, lo, hi in zip(self.features, self.mins, self.maxs) if hi == lo)

    def bounds(self, feature):
        i = self.features.index(feature)
        return self.mins[i], self.maxs[i]

    def transform(self, X, feature_names=FEATURE_NAMES):
        """Scale the covered columns of a feature matrix; others pass through."""
        X = np.array(X, dtype=float, copy=True)
        names = list(feature_names)
        for f, lo, hi in zip(self.features, self.mins, self.maxs):
            try:
                j = names.index(f)
            except ValueError:
                raise SchemaMismatchError(f"feature {f!r} not present in the matrix") from None
            X[:, j] = 0.0 if hi == lo else (X[:, j] - lo) / (hi - lo)
        return X

    def to_dict(self):
        return {"features": list(self.features), "mins": list(self.mins), "maxs": list(self.maxs)}

    @classmethod
    def from_dict(cls, doc):
        return cls(tuple(doc["features"]), tuple(float(v) for v in doc["mins"]),
                   tuple(float(v) for v in doc["maxs"]))


def fit_minmax(train, features=SCALED_FEATURES):
    if len(train) == 0:
        raise EmptyDatasetError("cannot fit a scaler on an empty dataset")
    mins, maxs = [], []
    for f in features:
        col = train.column(f)
        mins.append(float(col.min()))
        maxs.append(float(col.max()))
    return ScalerParams(tuple(features), tuple(mins), tuple(maxs))


def apply_minmax(s, d):
    """Scale ``d`` with bounds ``s``; values outside the bounds are not clipped."""
    missing = [f for f in SCALED_FEATURES if f not in s.features]
    if missing:
        raise SchemaMismatchError(f"scaler does not cover feature {missing[0]!r}")
    updates = {}
    for f, lo, hi in zip(s.features, s.mins, s.maxs):
        col = d.column(f)
        updates[f] = np.zeros_like(col) if hi == lo else (col - lo) / (hi - lo)
    return d.with_columns(updates, scaled=True)
