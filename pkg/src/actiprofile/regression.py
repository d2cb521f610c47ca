"""
Outcome models adjusted for age and sex, and the comparison table.

Each cell of the comparison table is an ordinary least squares fit of

    outcome ~ 1 + age + sex + predictors

where the predictors are a single activity-category duration, a single
time-active/intensity measure, or a block of cluster-membership
proportions. Membership proportions sum to one, so one cluster is dropped
as the reference; R2, AIC and fitted values do not depend on which.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import linalg

from .errors import DataError, SingularDesignError

log = logging.getLogger(__name__)

OUTCOMES = ("waist", "insulin", "triglycerides")
OUTCOME_LABELS = {"waist": "Waist (cm)", "insulin": "Insulin", "triglycerides": "Triglyceride"}
CATEGORY_MEASURES = ("SB", "LPA", "MVPA", "MPA", "VPA")
BAI_MEASURES = ("TAM", "TAV", "AIM", "AIV")
MEMBERSHIP_VARIANTS = ("Unsorted", "Sort_01", "Sort_02", "Sort_04", "Sort_08", "Sort_16")
TABLE_COLUMNS = ("baseline",) + CATEGORY_MEASURES + BAI_MEASURES + MEMBERSHIP_VARIANTS
COVARIATES = ("age", "sex")


@dataclass(frozen=True)
class Family:
    """A predictor family: ``baseline``, ``category``, ``bai`` or ``membership``."""

    kind: str
    name: str = ""

    @property
    def column(self):
        return "baseline" if self.kind == "baseline" else self.name

    @classmethod
    def for_column(cls, column):
        if column == "baseline":
            return cls("baseline")
        if column in CATEGORY_MEASURES:
            return cls("category", column)
        if column in BAI_MEASURES:
            return cls("bai", column)
        return cls("membership", column)


def membership_columns(rows, variant):
    """Columns ``<variant>:C1 ... <variant>:Ck`` of a participant table, in cluster order."""
    prefix = f"{variant}:C"
    cols = [c for c in rows.columns if c.startswith(prefix) and c[len(prefix):].isdigit()]
    return sorted(cols, key=lambda c: int(c[len(prefix):]))


def family_columns(rows, family):
    if family.kind == "baseline":
        return []
    if family.kind == "membership":
        cols = membership_columns(rows, family.name)
        if not cols:
            raise DataError(f"no membership columns for {family.name}")
        return cols
    if family.name not in rows.columns:
        raise DataError(f"no column {family.name!r} in participant table")
    return [family.name]


@dataclass
class Design:
    X: np.ndarray
    y: np.ndarray
    columns: list
    participant_ids: list


def build_design(rows, family, outcome, reference=None, sample=None):
    """Design matrix [1, age, sex, predictors] and response for one model.

    Membership families drop ``reference`` (default: the highest-numbered
    cluster). Rows with any missing value in the used columns are dropped,
    unless ``sample`` pins the participant set explicitly.
    """
    extra = family_columns(rows, family)
    if family.kind == "membership" and extra:
        ref = extra[-1] if reference is None else (
            reference if reference in extra else f"{family.name}:C{reference}")
        if ref not in extra:
            raise DataError(f"reference cluster {reference} not among {extra}")
        extra = [c for c in extra if c != ref]
    used = [outcome, *COVARIATES, *extra]
    frame = rows[used] if sample is None else rows.loc[list(sample), used]
    complete = frame.dropna()
    if len(complete) < len(frame):
        log.info("%s ~ %s: dropped %d incomplete row(s)", outcome, family.column,
                 len(frame) - len(complete))
    X = np.column_stack([np.ones(len(complete)), complete[[*COVARIATES, *extra]].to_numpy(float)])
    columns = ["intercept", *COVARIATES, *extra]
    if len(complete) < X.shape[1]:
        raise DataError(f"{len(complete)} complete rows cannot identify {X.shape[1]} coefficients")
    for name, col in zip(columns[1:], X[:, 1:].T):
        if np.ptp(col) == 0:
            warnings.warn(f"column {name!r} is constant; design will be rank deficient")
    return Design(X, complete[outcome].to_numpy(float), columns, list(complete.index))


@dataclass
class FitResult:
    coefficients: np.ndarray
    columns: list
    residuals: np.ndarray
    fitted: np.ndarray
    rss: float
    tss: float
    n: int
    p: int

    @property
    def r_squared(self):
        return r_squared(self)

    @property
    def aic(self):
        return aic(self)

    def to_dict(self):
        return {"columns": list(self.columns), "coefficients": self.coefficients.tolist(),
                "n": self.n, "p": self.p, "rss": self.rss, "tss": self.tss,
                "r_squared": _json_float(self.r_squared), "aic": _json_float(self.aic)}


def _json_float(x):
    return None if x is None or not math.isfinite(x) else float(x)


def fit_ols(X, y=None, columns=None, rcond=1e-10):
    """Least squares through a column-pivoted QR decomposition.

    A design whose numerical rank falls short of its width raises
    ``SingularDesignError`` naming the columns that could not be resolved.
    """
    if isinstance(X, Design):
        X, y, columns = X.X, X.y, X.columns
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    columns = list(columns) if columns is not None else [f"x{i}" for i in range(p)]
    if n < p:
        raise DataError(f"{n} rows cannot identify {p} coefficients")
    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int((diag > rcond * diag[0]).sum()) if p else 0
    if rank < p:
        bad = [columns[i] for i in piv[rank:]]
        raise SingularDesignError(f"design is rank deficient; cannot separate {bad}", bad)
    beta = np.empty(p)
    beta[piv] = linalg.solve_triangular(R, Q.T @ y)
    fitted = X @ beta
    resid = y - fitted
    return FitResult(beta, columns, resid, fitted, float(resid @ resid),
                     float(((y - y.mean()) ** 2).sum()), n, p)


def r_squared(fit):
    """1 - RSS/TSS; NaN when the response has no variance."""
    if fit.tss == 0:
        return float("nan")
    return 1.0 - fit.rss / fit.tss


def aic(fit):
    """Gaussian AIC, n ln(RSS/n) + 2(p + 1); the +1 is the error variance."""
    if fit.rss <= 0:
        warnings.warn("RSS is zero; AIC is -inf")
        return float("-inf")
    return fit.n * math.log(fit.rss / fit.n) + 2 * (fit.p + 1)


def available_columns(rows, columns=TABLE_COLUMNS):
    out = []
    for col in columns:
        fam = Family.for_column(col)
        try:
            family_columns(rows, fam)
        except DataError:
            continue
        out.append(col)
    return out


def common_sample(rows, columns, outcome):
    """Participants complete on the outcome, covariates and every available family."""
    used = [outcome, *COVARIATES]
    for col in columns:
        used += family_columns(rows, Family.for_column(col))
    return list(rows[used].dropna().index)


def comparison_table(rows, outcomes=OUTCOMES, columns=TABLE_COLUMNS):
    """R2 and AIC for every outcome x predictor family, one row pair per outcome.

    All cells of one outcome are fitted on the same participants (complete
    on every available family) so each model nests the baseline. Families
    absent from ``rows`` are left as NaN. Returns (table, fits) where fits
    maps (outcome, column) to FitResult.
    """
    index = pd.MultiIndex.from_product([list(outcomes), ["R2", "AIC"]], names=["outcome", "statistic"])
    table = pd.DataFrame(np.nan, index=index, columns=list(columns))
    fits = {}
    present = available_columns(rows, columns)
    for outcome in outcomes:
        if outcome not in rows.columns:
            log.warning("outcome %s missing from participant table", outcome)
            continue
        sample = common_sample(rows, present, outcome)
        for col in present:
            try:
                fit = fit_ols(build_design(rows, Family.for_column(col), outcome, sample=sample))
            except (DataError, SingularDesignError) as exc:
                log.warning("%s ~ %s unavailable: %s", outcome, col, exc)
                continue
            fits[outcome, col] = fit
            table.loc[(outcome, "R2"), col] = fit.r_squared
            table.loc[(outcome, "AIC"), col] = fit.aic
    return table, fits


def correlation_matrix(rows, measures):
    """Pairwise-complete Pearson correlations; NaN where a measure has no variance."""
    measures = [m for m in measures if m in rows.columns]
    data = rows[measures].astype(float)
    out = pd.DataFrame(np.nan, index=measures, columns=measures)
    for i, a in enumerate(measures):
        for b in measures[i:]:
            pair = data[[a, b]].dropna() if a != b else data[[a]].dropna()
            x = pair[a].to_numpy()
            y = pair[b].to_numpy() if a != b else x
            if len(x) < 2:
                continue
            xc, yc = x - x.mean(), y - y.mean()
            denom = math.sqrt((xc @ xc) * (yc @ yc))
            if denom == 0:
                continue
            r = 1.0 if a == b else float(np.clip((xc @ yc) / denom, -1.0, 1.0))
            out.loc[a, b] = out.loc[b, a] = r
    return out


def load_participants(path, sex_coding=None, transforms=None):
    """Read the participant CSV (participant_id, age, sex, outcomes...).

    ``sex_coding`` maps the file's sex labels to 0/1 (default male 0,
    female 1; numeric 0/1 pass through). ``transforms`` maps an outcome to
    ``"log"`` or ``"none"``.
    """
    frame = pd.read_csv(path, comment="#", dtype={"participant_id": str})
    missing = [c for c in ("participant_id", "age", "sex") if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: participant table lacks {missing}")
    frame = frame.set_index("participant_id")
    coding = {"male": 0, "m": 0, "female": 1, "f": 1, "0": 0, "1": 1, "0.0": 0, "1.0": 1}
    if sex_coding:
        coding.update({str(k).lower(): v for k, v in sex_coding.items()})
    frame["sex"] = frame["sex"].astype(str).str.strip().str.lower().map(coding).astype(float)
    if (frame["age"].dropna() <= 0).any():
        raise DataError(f"{path}: ages must be positive")
    return apply_transforms(frame, transforms)


def apply_transforms(frame, transforms):
    frame = frame.copy()
    for outcome, how in (transforms or {}).items():
        if how in (None, "none") or outcome not in frame.columns:
            continue
        if how != "log":
            raise DataError(f"unknown outcome transform {how!r}")
        if (frame[outcome].dropna() <= 0).any():
            raise DataError(f"cannot log-transform non-positive {outcome}")
        frame[outcome] = np.log(frame[outcome])
    return frame


def table_to_csv_frame(table):
    """Flatten the comparison table with readable outcome labels."""
    flat = table.reset_index()
    flat["outcome"] = flat["outcome"].map(lambda o: OUTCOME_LABELS.get(o, o))
    return flat
