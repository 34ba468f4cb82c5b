"""Model-free evidence: transition matrices, grouped summary statistics, event studies."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy import linalg, stats

from dynmlogit.errors import DataError, InsufficientEvents, MissingColumn
from dynmlogit.panel import BINARY, PanelDataset, state_labels
from dynmlogit.specs import EXIT_OUTCOME, ModelSpec

logger = logging.getLogger(__name__)

SUMMARY_VARIABLES = (
    "age", "female", "russian", "school_years", "married", "hh_size", "kids",
    "log_consumption", "urban", "pop_log", "cma_index",
)
SCHEME_DESTINATIONS = {
    "registration": ("F", "I", "O"),
    "disaggregated": ("F", "I", "O"),
    "pay_type": ("OF", "PU", "UO", "NJ"),
}
Split = Union[None, str, Callable[[pd.DataFrame], pd.Series]]


def _selected(ds: PanelDataset, what: str) -> pd.DataFrame:
    if not ds.selected:
        raise DataError(f"{what} needs a dataset returned by apply_selection_rules")
    return ds.origins


# ── transition matrices ─────────────────────────────────────────────────────

@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic matrix over origins that occur; absent origins have no row."""

    label: str
    probabilities: pd.DataFrame
    counts: pd.DataFrame

    @property
    def n(self) -> int:
        return int(self.counts.to_numpy().sum())

    def probability(self, origin: str, destination: str) -> float:
        return float(self.probabilities.loc[origin, destination])


def _split_labels(rows: pd.DataFrame, split: Split) -> pd.Series:
    if split is None:
        return pd.Series("all", index=rows.index)
    if split == "borrower":
        if "next_loan_taken" not in rows.columns or rows["next_loan_taken"].isna().all():
            raise MissingColumn(["loan_taken"])
        return rows["next_loan_taken"].map({1.0: "borrower", 0.0: "non-borrower"})
    if callable(split):
        return pd.Series(split(rows), index=rows.index)
    raise DataError(f"unknown split {split!r}")


def transition_matrix(
    ds: PanelDataset,
    split: Split = None,
    scheme: str = "registration",
) -> dict[str, TransitionMatrix]:
    """P(j -> m) per split cell from origin rows; borrower status is read at t+1."""
    spec = ModelSpec(scheme=scheme)
    rows = _selected(ds, "transition_matrix")
    rows = rows.loc[rows["next_state"] != EXIT_OUTCOME]
    origin = state_labels(rows, spec, "now")
    destination = state_labels(rows, ModelSpec(scheme="pay_type" if scheme == "pay_type" else "registration"), "next")
    group = _split_labels(rows, split)
    ok = origin.notna() & destination.notna() & group.notna()

    out = {}
    for label in sorted(group[ok].unique(), key=str):
        cell = ok & (group == label)
        counts = pd.crosstab(origin[cell], destination[cell])
        origins = [s for s in spec.lagged_states if s in counts.index]
        counts = counts.reindex(index=origins, columns=list(SCHEME_DESTINATIONS[scheme]), fill_value=0)
        probs = counts.div(counts.sum(axis=1), axis=0)
        counts.index.name = probs.index.name = "origin"
        counts.columns.name = probs.columns.name = "destination"
        out[str(label)] = TransitionMatrix(label=str(label), probabilities=probs, counts=counts)
    return out


def render_transition_table(matrices: dict[str, TransitionMatrix], digits: int = 3) -> str:
    """Origins down the side; P(->F) and P(->O) for each split across the top."""
    labels = list(matrices)
    first = next(iter(matrices.values()))
    dests = [first.probabilities.columns[0], first.probabilities.columns[-1]]
    origins = list(dict.fromkeys(o for m in matrices.values() for o in m.probabilities.index))
    width = max(8, digits + 4)
    head = f"{'Origin':<8}" + "".join(f"{lab:^{2 * width}}" for lab in labels)
    sub = f"{'':<8}" + "".join(f"{'P_' + d:>{width}}" for _ in labels for d in dests)
    lines = [head, sub, "-" * len(sub)]
    for o in origins:
        cells = []
        for lab in labels:
            probs = matrices[lab].probabilities
            for d in dests:
                cells.append(f"{probs.loc[o, d]:>{width}.{digits}f}" if o in probs.index else f"{'':>{width}}")
        lines.append(f"{o:<8}" + "".join(cells))
    lines.append("N: " + ", ".join(f"{lab} {matrices[lab].n:,}" for lab in labels))
    return "\n".join(lines)


# ── summary statistics ──────────────────────────────────────────────────────

def summary_stats(
    ds: PanelDataset,
    variables: Sequence[str] = SUMMARY_VARIABLES,
    group_by: str = "state",
    reference: str = "F",
) -> pd.DataFrame:
    """Per-group mean, SD and N; Welch t against the reference group.

    SDs of binary variables are left out. Comparison columns only appear when
    the reference group and at least one other group are present.
    """
    rows = _selected(ds, "summary_stats")
    missing = [v for v in (*variables, group_by) if v not in rows.columns]
    if missing:
        raise MissingColumn(missing)
    groups = [g for g in sorted(rows[group_by].dropna().unique())]
    compare = reference in groups and len(groups) > 1

    out = pd.DataFrame(index=pd.Index(list(variables), name="variable"))
    for g in groups:
        part = rows.loc[rows[group_by] == g]
        for v in variables:
            x = pd.to_numeric(part[v], errors="coerce").dropna()
            out.loc[v, f"mean_{g}"] = x.mean() if len(x) else np.nan
            if v not in BINARY:
                out.loc[v, f"sd_{g}"] = x.std(ddof=1) if len(x) > 1 else np.nan
            out.loc[v, f"n_{g}"] = len(x)
    if compare:
        ref = rows.loc[rows[group_by] == reference]
        for g in groups:
            if g == reference:
                continue
            part = rows.loc[rows[group_by] == g]
            for v in variables:
                a = pd.to_numeric(part[v], errors="coerce").dropna().to_numpy()
                b = pd.to_numeric(ref[v], errors="coerce").dropna().to_numpy()
                if len(a) > 1 and len(b) > 1:
                    res = stats.ttest_ind(a, b, equal_var=False)
                    out.loc[v, f"t_{g}"], out.loc[v, f"p_{g}"] = res.statistic, res.pvalue
                else:
                    out.loc[v, f"t_{g}"] = out.loc[v, f"p_{g}"] = np.nan
    for col in out.columns:
        if col.startswith("n_"):
            out[col] = out[col].astype(int)
    return out


def sample_composition(ds: PanelDataset) -> pd.DataFrame:
    """Share of each state per survey year plus the row count."""
    frame = ds.origins if ds.selected else ds.frame
    shares = pd.crosstab(frame["year"], frame["state"], normalize="index")
    shares["n"] = frame.groupby("year").size()
    return shares


# ── event study ─────────────────────────────────────────────────────────────

@dataclass
class EventStudyResult:
    name: str
    table: pd.DataFrame  # k, coef, se, plotted, n
    base_level: float
    design: pd.DataFrame = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    metadata: dict = field(default_factory=dict)

    def point(self, k: int) -> pd.Series:
        return self.table.set_index("k").loc[k]


def full_rank_columns(X: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Sorted indices of a maximal linearly independent column set (pivoted QR)."""
    if X.shape[1] == 0:
        return np.arange(0)
    _, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * diag[0])) if diag.size and diag[0] > 0 else 0
    return np.sort(piv[:rank])


def _ols(X: np.ndarray, y: np.ndarray, cluster: np.ndarray):
    """OLS with person-clustered standard errors; dependent columns get NaN."""
    keep = full_rank_columns(X)
    groups, _ = pd.factorize(cluster)
    res = sm.OLS(y, X[:, keep]).fit(method="qr", cov_type="cluster", cov_kwds={"groups": groups})
    beta = np.full(X.shape[1], np.nan)
    se = np.full(X.shape[1], np.nan)
    beta[keep] = np.asarray(res.params)
    se[keep] = np.asarray(res.bse)
    return beta, se, np.asarray(res.resid)


def event_regression(rows: pd.DataFrame, window: int, name: str = "event") -> EventStudyResult:
    """Linear probability model of ``outcome`` on relative-year dummies.

    ``rows`` needs person_id, year, age, rel (years since the event) and outcome.
    Controls are a quartic in age/10 and calendar-year dummies; k = 0 is omitted.
    """
    need = ["person_id", "year", "age", "rel", "outcome"]
    missing = [c for c in need if c not in rows.columns]
    if missing:
        raise MissingColumn(missing)
    rows = rows.loc[rows["rel"].between(-window, window)].dropna(subset=need).reset_index(drop=True)
    if rows.empty:
        raise InsufficientEvents(f"no observations within {window} years of an event")

    ks = [k for k in range(-window, window + 1) if k != 0]
    cols = {"const": np.ones(len(rows))}
    for k in ks:
        cols[f"k_{k}"] = (rows["rel"] == k).to_numpy(dtype=float)
    a = rows["age"].to_numpy(dtype=float) / 10.0
    for power in range(1, 5):
        cols[f"age^{power}"] = a ** power
    years = sorted(rows["year"].unique())
    for y in years[1:]:
        cols[f"year_{y}"] = (rows["year"] == y).to_numpy(dtype=float)
    design = pd.DataFrame(cols)
    active = [c for c in design.columns if design[c].any()]
    X = design[active].to_numpy()
    y = rows["outcome"].to_numpy(dtype=float)

    beta, se, resid = _ols(X, y, rows["person_id"].to_numpy())
    coef = dict(zip(active, beta))
    sd = dict(zip(active, se))
    fitted = y - resid
    at_zero = (rows["rel"] == 0).to_numpy()
    base = float(fitted[at_zero].mean()) if at_zero.any() else np.nan

    counts = rows.groupby("rel").size()
    table = pd.DataFrame({
        "k": range(-window, window + 1),
        "coef": [0.0 if k == 0 else coef.get(f"k_{k}", np.nan) for k in range(-window, window + 1)],
        "se": [0.0 if k == 0 else sd.get(f"k_{k}", np.nan) for k in range(-window, window + 1)],
        "n": [int(counts.get(k, 0)) for k in range(-window, window + 1)],
    })
    table["plotted"] = table["coef"] + base
    logger.info("Event study %s: %d rows, %d persons, base level %.4f", name, len(rows), rows["person_id"].nunique(), base)
    return EventStudyResult(
        name=name,
        table=table,
        base_level=base,
        design=design[active],
        residuals=resid,
        metadata={"window": window, "n_rows": int(len(rows)), "n_persons": int(rows["person_id"].nunique())},
    )


def event_rows(ds: PanelDataset) -> pd.DataFrame:
    """Person-years with their previous state and years relative to the first observed loan."""
    frame = ds.frame
    if "loan_taken" not in frame.columns or frame["loan_taken"].isna().all():
        raise MissingColumn(["loan_taken"])
    frame = frame.sort_values(["person_id", "year"], kind="mergesort")
    g = frame.groupby("person_id", sort=False)
    first_loan = frame.loc[frame["loan_taken"] == 1].groupby("person_id")["year"].min()
    if first_loan.empty:
        raise InsufficientEvents("no person has an observed loan")
    event_year = frame["person_id"].map(first_loan)
    out = pd.DataFrame({
        "person_id": frame["person_id"],
        "year": frame["year"],
        "age": frame["age"],
        "state": frame["state"],
        "prev_state": g["state"].shift(1),
        "rel": frame["year"] - event_year,
    })
    return out.loc[event_year.notna()].reset_index(drop=True)


def event_study(ds: PanelDataset, window: int = 5) -> dict[str, EventStudyResult]:
    """Around the first loan: entry into formal jobs from informality, and informal-to-formal switching."""
    rows = event_rows(ds)
    formal = rows.loc[rows["state"].eq("F") & rows["prev_state"].notna()]
    entry = formal.assign(outcome=(formal["prev_state"] == "I").astype(float))
    informal = rows.loc[rows["prev_state"].eq("I") & rows["state"].notna()]
    switch = informal.assign(outcome=(informal["state"] == "F").astype(float))
    out = {}
    for name, part in (("entry", entry), ("switch", switch)):
        out[name] = event_regression(part, window, name=name)
    return out
