"""Competing-risks dataset container, validation, standardization and CSV I/O.

Status coding: 0 = censored, 1 = event of interest, 2 = any competing
cause.  Everything downstream assumes time-fixed covariates.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError

CENSORED = 0
CAUSE1 = 1
CAUSE2 = 2
VALID_STATUS = (CENSORED, CAUSE1, CAUSE2)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class CompetingRisksData:
    """Observed sample ``(X_i, status_i, Z_i)`` with a study horizon.

    Parameters
    ----------
    times : array_like, shape (n,)
        Observed time per subject: event time or censoring time,
        whichever came first.
    status : array_like, shape (n,)
        0 censored, 1 event of interest, 2 other cause.
    covariates : array_like, shape (n, p)
        Time-fixed covariate matrix.
    horizon : float, optional
        Study end time.  Defaults to the largest observed time.
        Observations beyond a user-supplied horizon are
        administratively censored at the horizon.
    ids : sequence of str, optional
        Subject labels carried through CSV round trips.

    Construction only enforces structural consistency (matching shapes,
    positive horizon); content problems such as bad status codes are
    reported by :func:`validate` so that callers can inspect malformed
    files before fitting.
    """

    times: np.ndarray
    status: np.ndarray
    covariates: np.ndarray
    horizon: float | None = None
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64)
        status = np.array(self.status)
        covariates = np.array(self.covariates, dtype=np.float64)
        if covariates.ndim == 1:
            covariates = covariates.reshape(-1, 1)
        if covariates.ndim != 2:
            raise DataError("covariates must be a 2-d matrix")
        if times.ndim != 1 or status.shape != times.shape:
            raise DataError("times and status must be 1-d with equal length")
        if covariates.shape[0] != times.shape[0]:
            raise DataError(
                f"covariates have {covariates.shape[0]} rows for "
                f"{times.shape[0]} subjects"
            )
        try:
            status = status.astype(np.int64)
        except (TypeError, ValueError) as exc:
            raise DataError(f"status codes must be integers: {exc}") from None
        if self.ids is not None and len(self.ids) != times.shape[0]:
            raise DataError("ids length must match number of subjects")

        horizon = self.horizon
        if horizon is None:
            if times.size == 0:
                raise DataError("empty dataset")
            horizon = float(np.max(times))
        else:
            horizon = float(horizon)
            if not np.isfinite(horizon) or horizon <= 0:
                raise DataError("horizon must be a positive finite number")
            # administrative censoring at the study end
            beyond = times > horizon
            times[beyond] = horizon
            status[beyond] = CENSORED

        object.__setattr__(self, "times", _readonly(times))
        object.__setattr__(self, "status", _readonly(status))
        object.__setattr__(self, "covariates", _readonly(covariates))
        object.__setattr__(self, "horizon", horizon)
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(str(s) for s in self.ids))

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def subset(self, idx) -> "CompetingRisksData":
        """Row subset (used by cross-validation folds); keeps the horizon."""
        idx = np.asarray(idx)
        ids = None
        if self.ids is not None:
            ids = tuple(self.ids[i] for i in idx)
        return CompetingRisksData(
            times=self.times[idx],
            status=self.status[idx],
            covariates=self.covariates[idx],
            horizon=self.horizon,
            ids=ids,
        )


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...] = ()

    def raise_if_invalid(self):
        if not self.ok:
            raise DataError("invalid dataset: " + "; ".join(self.violations))


def validate(data: CompetingRisksData) -> ValidationReport:
    """Check the content invariants required for fitting.

    Returns a report rather than raising, so that callers can surface
    every violation at once.
    """
    v: list[str] = []
    if data.n < 2:
        v.append(f"need at least 2 subjects, got {data.n}")
    if data.p < 1:
        v.append("need at least one covariate")
    bad_time = np.flatnonzero(~np.isfinite(data.times) | (data.times < 0))
    for i in bad_time[:5]:
        v.append(f"invalid time {data.times[i]!r} for subject {i}")
    bad_status = np.flatnonzero(~np.isin(data.status, VALID_STATUS))
    for i in bad_status[:5]:
        v.append(f"invalid status code {data.status[i]} for subject {i}")
    if not np.any(data.status == CAUSE1):
        v.append("no cause-1 events: nothing to fit")
    bad_cov = np.argwhere(~np.isfinite(data.covariates))
    for i, j in bad_cov[:5]:
        v.append(f"non-finite covariate at subject {i}, column {j}")
    return ValidationReport(ok=not v, violations=tuple(v))


@dataclass(frozen=True)
class Standardization:
    """Column-wise centering/scaling transform and its bookkeeping.

    ``kept`` lists the retained column indices of the original matrix
    (constant columns may be dropped); ``means``/``scales`` refer to the
    retained columns, scales are sample standard deviations (ddof=1).
    """

    means: np.ndarray
    scales: np.ndarray
    kept: tuple[int, ...]
    dropped: tuple[int, ...] = ()
    applied: bool = True

    def transform(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        return (Z[:, list(self.kept)] - self.means) / self.scales

    def coefficients_to_original(self, beta: np.ndarray) -> np.ndarray:
        """Map coefficients on the standardized scale back to the raw scale."""
        return np.asarray(beta) / self.scales

    def se_to_original(self, se: np.ndarray) -> np.ndarray:
        """Standard errors scale like the coefficients, by 1/scale."""
        return np.asarray(se) / self.scales


def standardize(
    data: CompetingRisksData, drop_constant: bool = False
) -> tuple[CompetingRisksData, Standardization]:
    """Center and scale every covariate column to mean 0 and SD 1.

    Constant columns are an error in strict mode; with
    ``drop_constant=True`` they are removed and reported through the
    returned transform.
    """
    Z = data.covariates
    means = Z.mean(axis=0)
    scales = Z.std(axis=0, ddof=1)
    constant = ~(scales > 0) | ~np.isfinite(scales)
    if np.any(constant):
        cols = tuple(int(j) for j in np.flatnonzero(constant))
        if not drop_constant:
            raise DataError(
                f"constant covariate column(s) {cols}; drop them or enable "
                "drop_constant"
            )
        kept = tuple(int(j) for j in np.flatnonzero(~constant))
        if not kept:
            raise DataError("all covariate columns are constant")
    else:
        cols = ()
        kept = tuple(range(data.p))

    tr = Standardization(
        means=_readonly(means[list(kept)].copy()),
        scales=_readonly(scales[list(kept)].copy()),
        kept=kept,
        dropped=cols,
    )
    out = CompetingRisksData(
        times=data.times.copy(),
        status=data.status.copy(),
        covariates=tr.transform(Z),
        horizon=data.horizon,
        ids=data.ids,
    )
    return out, tr


def load_csv(
    path,
    time_col: str = "time",
    status_col: str = "status",
    covariate_cols: list[str] | None = None,
    id_col: str | None = None,
    horizon: float | None = None,
) -> CompetingRisksData:
    """Read a dataset from a UTF-8 CSV file with a header row.

    Covariate columns default to every column that is not the time,
    status or id column.  Missing values are errors; there is no
    imputation.  Errors cite the 1-based file row and the column name.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for req in (time_col, status_col):
            if req not in header:
                raise DataError(f"{path}: missing required column '{req}'")
        if covariate_cols is None:
            skip = {time_col, status_col}
            if id_col:
                skip.add(id_col)
            covariate_cols = [h for h in header if h not in skip]
        if not covariate_cols:
            raise DataError(f"{path}: no covariate columns found")
        missing = [c for c in covariate_cols if c not in header]
        if missing:
            raise DataError(f"{path}: covariate column(s) {missing} not in header")
        if id_col is not None and id_col not in header:
            raise DataError(f"{path}: id column '{id_col}' not in header")

        col_of = {h: k for k, h in enumerate(header)}
        t_ix, s_ix = col_of[time_col], col_of[status_col]
        z_ix = [col_of[c] for c in covariate_cols]
        i_ix = col_of[id_col] if id_col is not None else None

        times, status, rows, ids = [], [], [], []
        for rownum, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise DataError(
                    f"{path}: row {rownum} has {len(rec)} fields, "
                    f"expected {len(header)}"
                )

            def cell(ix, name, kind=float):
                raw = rec[ix].strip()
                if raw == "":
                    raise DataError(
                        f"{path}: missing value at row {rownum}, column '{name}'"
                    )
                try:
                    return kind(raw)
                except ValueError:
                    raise DataError(
                        f"{path}: cannot parse {raw!r} at row {rownum}, "
                        f"column '{name}'"
                    ) from None

            times.append(cell(t_ix, time_col))
            code = cell(s_ix, status_col, kind=int)
            if code not in VALID_STATUS:
                raise DataError(
                    f"{path}: invalid status code {code} at row {rownum} "
                    f"(expected 0, 1 or 2)"
                )
            status.append(code)
            rows.append([cell(ix, covariate_cols[k]) for k, ix in enumerate(z_ix)])
            if i_ix is not None:
                ids.append(rec[i_ix].strip())

    if not rows:
        raise DataError(f"{path}: no data rows")
    return CompetingRisksData(
        times=np.array(times),
        status=np.array(status),
        covariates=np.array(rows),
        horizon=horizon,
        ids=tuple(ids) if ids else None,
    )


def save_csv(data: CompetingRisksData, path, covariate_names=None) -> None:
    """Write a dataset as CSV; floats use repr so reads round-trip exactly."""
    if covariate_names is None:
        covariate_names = [f"z{j + 1}" for j in range(data.p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["time", "status", *covariate_names]
        if data.ids is not None:
            header = ["id", *header]
        writer.writerow(header)
        for i in range(data.n):
            row = [repr(float(data.times[i])), str(int(data.status[i]))]
            row += [repr(float(v)) for v in data.covariates[i]]
            if data.ids is not None:
                row = [data.ids[i], *row]
            writer.writerow(row)
