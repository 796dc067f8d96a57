"""Subject/dataset containers, CSV ingestion, and validation.

A Dataset is a column-oriented, immutable view of a cohort: follow-up
time, a tri-state failure indicator, the screener result, baseline
covariates, screen-time covariates, and a case weight.  Validation is a
reporting operation; construction itself does not raise, which lets the
simulation harness represent deliberately rule-breaking cohorts (the
strict rules are enforced on CSV ingestion).
"""

import csv
import io
from dataclasses import dataclass, replace

import numpy as np

from .errors import MalformedRow, MissingWithNegativeScreen, SchemaError

# status codes
EVENT = 1
CENSORED = 0
MISSING = -1


@dataclass(frozen=True)
class Subject:
    """One participant's row, mainly for construction and inspection."""

    follow_time: float
    status: int  # EVENT, CENSORED, or MISSING
    screener_positive: bool
    baseline_covariates: tuple
    screen_covariates: tuple = ()
    weight: float = 1.0


@dataclass(frozen=True)
class Dataset:
    time: np.ndarray  # (n,) float
    status: np.ndarray  # (n,) int: EVENT / CENSORED / MISSING
    screen: np.ndarray  # (n,) bool
    baseline: np.ndarray  # (n, p) float
    screencov: np.ndarray  # (n, q) float
    weight: np.ndarray  # (n,) float
    baseline_names: tuple = ()
    screen_names: tuple = ()

    def __post_init__(self):
        n = len(self.time)
        for name in ("status", "screen", "weight"):
            if len(getattr(self, name)) != n:
                raise SchemaError(f"column '{name}' has wrong length")
        for name in ("baseline", "screencov"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[0] != n:
                raise SchemaError(f"matrix '{name}' has wrong shape {arr.shape}")
        for arr in (self.time, self.status, self.screen, self.baseline,
                    self.screencov, self.weight):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.time)

    @property
    def n_baseline(self):
        return self.baseline.shape[1]

    @property
    def n_screencov(self):
        return self.screencov.shape[1]

    @property
    def n_missing(self):
        return int(np.sum(self.status == MISSING))

    @property
    def missing_mask(self):
        return self.status == MISSING

    def subject(self, i):
        return Subject(
            follow_time=float(self.time[i]),
            status=int(self.status[i]),
            screener_positive=bool(self.screen[i]),
            baseline_covariates=tuple(self.baseline[i]),
            screen_covariates=tuple(self.screencov[i]),
            weight=float(self.weight[i]),
        )

    @classmethod
    def from_subjects(cls, subjects, baseline_names=(), screen_names=()):
        subjects = list(subjects)
        p = len(subjects[0].baseline_covariates) if subjects else 0
        q = len(subjects[0].screen_covariates) if subjects else 0
        for i, s in enumerate(subjects):
            if len(s.baseline_covariates) != p or len(s.screen_covariates) != q:
                raise SchemaError(f"subject {i} has inconsistent covariate length")
        return cls(
            time=np.array([s.follow_time for s in subjects], dtype=float),
            status=np.array([s.status for s in subjects], dtype=int),
            screen=np.array([s.screener_positive for s in subjects], dtype=bool),
            baseline=np.array([s.baseline_covariates for s in subjects],
                              dtype=float).reshape(len(subjects), p),
            screencov=np.array([s.screen_covariates for s in subjects],
                               dtype=float).reshape(len(subjects), q),
            weight=np.array([s.weight for s in subjects], dtype=float),
            baseline_names=tuple(baseline_names),
            screen_names=tuple(screen_names),
        )

    @classmethod
    def from_arrays(cls, time, status, screen, baseline, screencov=None,
                    weight=None, baseline_names=(), screen_names=()):
        time = np.asarray(time, dtype=float)
        n = len(time)
        baseline = np.asarray(baseline, dtype=float)
        if baseline.ndim == 1:
            baseline = baseline[:, None]
        if screencov is None:
            screencov = np.empty((n, 0))
        screencov = np.asarray(screencov, dtype=float)
        if screencov.ndim == 1:
            screencov = screencov[:, None]
        if weight is None:
            weight = np.ones(n)
        return cls(
            time=time,
            status=np.asarray(status, dtype=int),
            screen=np.asarray(screen, dtype=bool),
            baseline=baseline,
            screencov=np.asarray(screencov, dtype=float),
            weight=np.asarray(weight, dtype=float),
            baseline_names=tuple(baseline_names),
            screen_names=tuple(screen_names),
        )

    def take(self, indices):
        """Row subset / resample (preserves order of `indices`)."""
        idx = np.asarray(indices)
        return replace(
            self,
            time=self.time[idx].copy(),
            status=self.status[idx].copy(),
            screen=self.screen[idx].copy(),
            baseline=self.baseline[idx].copy(),
            screencov=self.screencov[idx].copy(),
            weight=self.weight[idx].copy(),
        )

    def with_status(self, status):
        return replace(self, status=np.asarray(status, dtype=int))


@dataclass(frozen=True)
class CsvSchema:
    """Maps dataset fields to CSV column names."""

    time: str = "time"
    status: str = "status"
    screen: str = "screen"
    baseline: tuple = ()
    screen_covariates: tuple = ()
    weight: str = None


_NA_TOKENS = {"", "NA"}


def _parse_float(value, row, col):
    try:
        return float(value)
    except ValueError:
        raise MalformedRow(row, f"non-numeric value {value!r} in column {col!r}")


def load_csv(path, schema):
    """Read a comma-delimited file into a validated Dataset.

    Missing failure indicators are encoded as an empty cell or "NA" in
    the status column.  A missing status on a row with a negative screen
    is rejected: the imputation model conditions on a positive screen.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}")
    with fh:
        return _load_csv_rows(csv.DictReader(fh), schema)


def _load_csv_rows(reader, schema):
    header = reader.fieldnames or []
    mapped = [schema.time, schema.status, schema.screen,
              *schema.baseline, *schema.screen_covariates]
    if schema.weight is not None:
        mapped.append(schema.weight)
    for col in mapped:
        if col not in header:
            raise SchemaError(f"mapped column {col!r} absent from header {header}")

    subjects = []
    for i, rec in enumerate(reader):
        t = _parse_float(rec[schema.time], i, schema.time)
        if not np.isfinite(t) or t <= 0:
            raise MalformedRow(i, f"nonpositive or non-finite time {t}")
        screen_raw = rec[schema.screen].strip()
        if screen_raw not in ("0", "1"):
            raise MalformedRow(i, f"screener must be 0 or 1, got {screen_raw!r}")
        screen = screen_raw == "1"
        status_raw = rec[schema.status].strip()
        if status_raw in _NA_TOKENS:
            if not screen:
                raise MissingWithNegativeScreen(i)
            status = MISSING
        elif status_raw in ("0", "1"):
            status = EVENT if status_raw == "1" else CENSORED
        else:
            raise MalformedRow(i, f"status must be 0, 1, NA, or empty, got {status_raw!r}")
        z = tuple(_parse_float(rec[c], i, c) for c in schema.baseline)
        x = tuple(_parse_float(rec[c], i, c) for c in schema.screen_covariates)
        w = 1.0
        if schema.weight is not None:
            w = _parse_float(rec[schema.weight], i, schema.weight)
            if not 0 < w <= 1:
                raise MalformedRow(i, f"weight {w} outside (0, 1]")
        subjects.append(Subject(t, status, screen, z, x, w))
    return Dataset.from_subjects(subjects, schema.baseline,
                                 schema.screen_covariates)


def write_csv(dataset, path_or_file, schema=None):
    """Write a Dataset back to CSV; Missing statuses become "NA"."""
    if schema is None:
        schema = CsvSchema(
            baseline=dataset.baseline_names
            or tuple(f"z{k + 1}" for k in range(dataset.n_baseline)),
            screen_covariates=dataset.screen_names
            or tuple(f"x{k + 1}" for k in range(dataset.n_screencov)),
            weight="weight",
        )
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        writer = csv.writer(fh, lineterminator="\n")
        header = [schema.time, schema.status, schema.screen,
                  *schema.baseline, *schema.screen_covariates]
        if schema.weight is not None:
            header.append(schema.weight)
        writer.writerow(header)
        fmt = lambda v: format(v, ".17g")
        for i in range(len(dataset)):
            s = dataset.status[i]
            row = [fmt(dataset.time[i]),
                   "NA" if s == MISSING else str(int(s)),
                   str(int(dataset.screen[i]))]
            row += [fmt(v) for v in dataset.baseline[i]]
            row += [fmt(v) for v in dataset.screencov[i]]
            if schema.weight is not None:
                row.append(fmt(dataset.weight[i]))
            writer.writerow(row)
    finally:
        if own:
            fh.close()


def to_csv_string(dataset, schema=None):
    buf = io.StringIO()
    write_csv(dataset, buf, schema)
    return buf.getvalue()


@dataclass(frozen=True)
class Violation:
    row: int
    rule: str

    def __str__(self):
        return f"row {self.row}: {self.rule}"


def validate(dataset):
    """Return a list of per-row invariant violations (empty when clean)."""
    out = []
    for i in range(len(dataset)):
        t = dataset.time[i]
        if not np.isfinite(t) or t <= 0:
            out.append(Violation(i, f"follow_time must be positive and finite, got {t}"))
        if dataset.status[i] == MISSING and not dataset.screen[i]:
            out.append(Violation(
                i, "missing status requires a positive screen (MAR design rule)"))
        w = dataset.weight[i]
        if not 0 < w <= 1:
            out.append(Violation(i, f"weight must lie in (0, 1], got {w}"))
    return out
