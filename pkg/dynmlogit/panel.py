"""Unbalanced person x wave panels: CSV ingestion, sample selection, design matrices.

The unit of the selection log is the origin observation: a person-year whose own
state and next-wave state are known. A selected PanelDataset keeps every valid
origin plus the row that follows it, flags origins with ``is_origin`` and carries
the successor's outcome columns as ``next_*``.
"""
from __future__ import annotations

import hashlib
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from dynmlogit.cma import log_distance
from dynmlogit.errors import (
    DataError,
    DuplicateKey,
    EmptyAfterSelection,
    MissingColumn,
    RowTypeError,
)
from dynmlogit.specs import EXIT_OUTCOME, ModelSpec

logger = logging.getLogger(__name__)

SCHEMA = (
    "person_id", "year", "state", "informal_subtype", "pay_type", "age", "female",
    "russian", "parent_educ", "school_years", "married", "hh_size", "kids",
    "log_consumption", "pop_log", "urban", "district", "interval_days", "cma_index",
    "bank_presence", "dist_sber_km", "dist_other_km", "offices_per_1000",
    "loan_taken", "loan_intent", "rel_earn_17", "govt_share", "informal_share",
    "soe_closed",
)
OPTIONAL = ("community_id", "household_id", "region", "earnings", "loan_type")
CATEGORICAL_TEXT = (
    "state", "informal_subtype", "pay_type", "parent_educ", "district",
    "community_id", "household_id", "region", "loan_type",
)
BINARY = ("female", "russian", "married", "urban", "loan_taken", "loan_intent", "soe_closed")
WHOLE = BINARY + ("hh_size", "kids", "interval_days", "bank_presence")
INSTRUMENTS = ("rel_earn_17", "govt_share", "informal_share", "soe_closed")
DERIVED = ("entry_year",)

STATES = ("F", "I", "O")
SUBTYPES = ("UE", "SE", "PP", "IEA", "UNK")
PAY_TYPES = ("OF", "PU", "UO", "NJ")
LOAN_TYPES = ("N", "MA", "C")
ALLOWED = {
    "state": STATES,
    "informal_subtype": SUBTYPES,
    "pay_type": PAY_TYPES,
    "loan_type": LOAN_TYPES,
}

SELECTION_STEPS = (
    "age_range",
    "missing_status_t",
    "missing_status_t1",
    "missing_covariates",
    "single_observation",
)
NEXT_COLUMNS = ("year", "state", "informal_subtype", "pay_type", "loan_taken", "loan_type")

CMA_TERMS = {
    "index": ("cma",),
    "components": ("presence_2", "presence_3", "log_dist_sber", "log_dist_other", "offices"),
    "none": (),
}
# raw component column -> design terms it drives
COMPONENT_TERMS = {
    "cma_index": ("cma",),
    "bank_presence": ("presence_2", "presence_3"),
    "dist_sber_km": ("log_dist_sber",),
    "dist_other_km": ("log_dist_other",),
    "offices_per_1000": ("offices",),
}


# ── dataset ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class PanelDataset:
    """Rows sorted by (person_id, year). Treat ``frame`` as read-only."""

    frame: pd.DataFrame
    exclusions: dict[str, int] = field(default_factory=dict)
    selected: bool = False

    @property
    def n_persons(self) -> int:
        return int(self.frame["person_id"].nunique())

    @property
    def n_rows(self) -> int:
        return int(len(self.frame))

    @property
    def origins(self) -> pd.DataFrame:
        if "is_origin" not in self.frame.columns:
            raise DataError("dataset has not been through apply_selection_rules")
        return self.frame.loc[self.frame["is_origin"]]

    @property
    def extra_columns(self) -> tuple[str, ...]:
        known = set(SCHEMA) | set(OPTIONAL) | set(DERIVED) | {"is_origin", "is_exit"}
        return tuple(c for c in self.frame.columns if c not in known and not c.startswith("next_"))

    def with_frame(self, frame: pd.DataFrame) -> "PanelDataset":
        return replace(self, frame=frame)


def _read_text(source) -> pd.DataFrame:
    if isinstance(source, (str, Path)):
        return pd.read_csv(source, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    if hasattr(source, "read"):
        return pd.read_csv(source, dtype=str, keep_default_na=False, na_filter=False)
    lines = [line if line.endswith("\n") else line + "\n" for line in source]
    return pd.read_csv(io.StringIO("".join(lines)), dtype=str, keep_default_na=False, na_filter=False)


def _first_bad(mask: pd.Series, lines: np.ndarray, message: str):
    if mask.any():
        pos = int(np.flatnonzero(mask.to_numpy())[0])
        raise RowTypeError(int(lines[pos]), message.format(pos=pos))


def load_panel(source: Union[str, Path, Iterable[str]]) -> PanelDataset:
    """Parse a panel CSV (path, open file or line stream) into a PanelDataset.

    Empty strings are missing values. Rows are sorted by (person_id, year);
    parse and invariant failures report the 1-based file line.
    """
    raw = _read_text(source)
    missing = [c for c in SCHEMA if c not in raw.columns]
    if missing:
        raise MissingColumn(missing)
    if len(raw):
        raw = raw.apply(lambda s: s.str.strip())
    lines = np.arange(len(raw)) + 2  # header is line 1

    frame = pd.DataFrame(index=raw.index)
    for col in raw.columns:
        text = raw[col]
        if col in CATEGORICAL_TEXT:
            values = text.where(text != "", None)
            allowed = ALLOWED.get(col)
            if allowed is not None:
                _first_bad(values.notna() & ~values.isin(allowed), lines,
                           f"column {col}: expected one of {'/'.join(allowed)}")
            frame[col] = values.astype(object)
            continue
        values = pd.to_numeric(text.where(text != "", None), errors="coerce").astype(float)
        bad = (text != "") & (values.isna() | ~np.isfinite(values))
        if bad.any():
            pos = int(np.flatnonzero(bad.to_numpy())[0])
            raise RowTypeError(int(lines[pos]), f"column {col}: cannot parse {text.iloc[pos]!r} as a finite number")
        frame[col] = values

    for key in ("person_id", "year"):
        _first_bad(frame[key].isna(), lines, f"column {key} is required")
        _first_bad(frame[key] % 1 != 0, lines, f"column {key} must be an integer")
        frame[key] = frame[key].astype(np.int64)
    for col in BINARY:
        _first_bad(frame[col].notna() & ~frame[col].isin([0.0, 1.0]), lines, f"column {col} must be 0 or 1")
    _first_bad(frame["bank_presence"].notna() & ~frame["bank_presence"].isin([1.0, 2.0, 3.0]), lines,
               "bank_presence must be 1, 2 or 3")
    for col in ("dist_sber_km", "dist_other_km", "offices_per_1000"):
        _first_bad(frame[col] < 0, lines, f"column {col} must be >= 0")
    _first_bad(frame["informal_subtype"].notna() & (frame["state"] != "I"), lines,
               "informal_subtype is only allowed on informal (I) rows")
    _first_bad(frame["pay_type"].notna() & (frame["informal_subtype"] == "IEA"), lines,
               "pay_type cannot be set on an IEA row")

    frame["_line"] = lines
    frame = frame.sort_values(["person_id", "year"], kind="mergesort").reset_index(drop=True)
    dup = frame.duplicated(["person_id", "year"])
    if dup.any():
        row = frame.loc[dup.idxmax()]
        raise DuplicateKey(int(row["person_id"]), int(row["year"]))
    frame = frame.drop(columns="_line")
    frame["entry_year"] = frame.groupby("person_id")["year"].transform("min").astype(np.int64)

    logger.info("Loaded panel: %d rows, %d persons", len(frame), frame["person_id"].nunique())
    return PanelDataset(frame=frame)


def from_frame(frame: pd.DataFrame) -> PanelDataset:
    """Validate an in-memory table through the CSV reader."""
    buf = io.StringIO()
    frame.to_csv(buf, index=False, na_rep="", lineterminator="\n")
    buf.seek(0)
    return load_panel(buf)


def write_panel(ds: PanelDataset, path: Union[str, Path]) -> Path:
    """Canonical CSV: schema columns, optional columns present, then extras."""
    path = Path(path)
    frame = ds.frame
    cols = list(SCHEMA) + [c for c in OPTIONAL if c in frame.columns] + list(ds.extra_columns)
    out = frame.loc[:, cols].copy()
    for col in WHOLE:
        out[col] = out[col].round().astype("Int64")
    out.to_csv(path, index=False, na_rep="", lineterminator="\n")
    return path


# ── selection ───────────────────────────────────────────────────────────────

def apply_selection_rules(
    ds: PanelDataset,
    age_range: tuple[int, int] = (20, 59),
    required: Optional[Sequence[str]] = None,
    exit_outcome: bool = False,
) -> PanelDataset:
    """Sequential sample selection on origin observations.

    Steps, in order: age outside ``age_range``; missing state at t; missing
    state at t+1 (or no later wave); missing required covariates at t; persons
    left with fewer than two valid origins. With ``exit_outcome`` the last wave
    of a person who leaves before the panel's final year is kept as an origin
    whose destination is ``X``.
    """
    required = tuple(required) if required is not None else ModelSpec().required_columns()
    f = ds.frame.copy()
    missing = [c for c in required if c not in f.columns]
    if missing:
        raise MissingColumn(missing)

    for col in INSTRUMENTS:
        f[col] = f.groupby("person_id", sort=False)[col].transform("first")
    g = f.groupby("person_id", sort=False)
    has_next = g["year"].shift(-1).notna()
    next_state = g["state"].shift(-1)
    last_year = f["year"].max() if len(f) else 0
    is_exit = exit_outcome & ~has_next & (f["year"] < last_year)

    lo, hi = age_range
    alive = pd.Series(True, index=f.index)
    log: dict[str, int] = {}

    def drop(step: str, mask: pd.Series):
        hit = alive & mask
        log[step] = int(hit.sum())
        alive.loc[hit] = False

    drop("age_range", f["age"].isna() | (f["age"] < lo) | (f["age"] > hi))
    drop("missing_status_t", f["state"].isna())
    drop("missing_status_t1", ~is_exit & (~has_next | next_state.isna()))
    drop("missing_covariates", f.loc[:, list(required)].isna().any(axis=1))
    per_person = alive.groupby(f["person_id"]).transform("sum")
    drop("single_observation", per_person < 2)

    origins = np.flatnonzero(alive.to_numpy())
    successors = origins[has_next.to_numpy()[origins] & ~is_exit.to_numpy()[origins]] + 1
    keep = np.union1d(origins, successors)

    for col in NEXT_COLUMNS:
        if col in f.columns:
            f[f"next_{col}"] = g[col].shift(-1)
    f.loc[is_exit, "next_state"] = EXIT_OUTCOME
    f["is_origin"] = alive
    f["is_exit"] = is_exit & alive

    kept = f.iloc[keep].reset_index(drop=True)
    for step in SELECTION_STEPS:
        logger.info("Selection %-20s removed %d origin observations", step, log[step])
    logger.info("Selection kept %d origins from %d persons", int(kept["is_origin"].sum()), kept["person_id"].nunique())
    return PanelDataset(frame=kept, exclusions=log, selected=True)


# ── design ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class DesignMatrix:
    """One record per transition (t -> next wave), grouped contiguously by person.

    ``cluster`` and ``Z``/``y_init`` are per person; everything else per record.
    """

    X: np.ndarray
    y: np.ndarray
    person: np.ndarray
    origin: np.ndarray
    columns: tuple[str, ...]
    outcomes: tuple[str, ...]
    base: int
    origin_labels: tuple[str, ...]
    person_ids: np.ndarray
    cluster: np.ndarray
    parents: dict[str, tuple[str, str]]
    cma_terms: tuple[str, ...]
    manifest: dict
    frame: pd.DataFrame
    Z: Optional[np.ndarray] = None
    z_columns: tuple[str, ...] = ()
    y_init: Optional[np.ndarray] = None

    @property
    def n_records(self) -> int:
        return int(self.X.shape[0])

    @property
    def n_persons(self) -> int:
        return int(self.person_ids.shape[0])

    @property
    def starts(self) -> np.ndarray:
        return np.flatnonzero(np.r_[True, self.person[1:] != self.person[:-1]])

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.columns.index(name)]

    def subset_persons(self, keep: np.ndarray) -> "DesignMatrix":
        """Restrict to persons whose position is True in ``keep`` (length n_persons)."""
        keep = np.asarray(keep, dtype=bool)
        rows = keep[self.person]
        new_codes = np.cumsum(keep) - 1
        return replace(
            self,
            X=self.X[rows],
            y=self.y[rows],
            person=new_codes[self.person[rows]],
            origin=self.origin[rows],
            person_ids=self.person_ids[keep],
            cluster=pd.factorize(self.cluster[keep])[0],
            frame=self.frame.loc[rows].reset_index(drop=True),
            Z=None if self.Z is None else self.Z[keep],
            y_init=None if self.y_init is None else self.y_init[keep],
        )


def _covariate(frame: pd.DataFrame, name: str) -> np.ndarray:
    if name == "age_sq":
        return frame["age"].to_numpy(dtype=float) ** 2 / 100.0
    if name not in frame.columns:
        raise MissingColumn([name])
    return pd.to_numeric(frame[name], errors="coerce").to_numpy(dtype=float)


def cma_term_values(frame: pd.DataFrame, mode: str) -> dict[str, np.ndarray]:
    if mode == "index":
        return {"cma": _covariate(frame, "cma_index")}
    if mode == "components":
        presence = _covariate(frame, "bank_presence")
        return {
            "presence_2": (presence == 2).astype(float),
            "presence_3": (presence == 3).astype(float),
            "log_dist_sber": np.asarray(log_distance(_covariate(frame, "dist_sber_km")), dtype=float),
            "log_dist_other": np.asarray(log_distance(_covariate(frame, "dist_other_km")), dtype=float),
            "offices": _covariate(frame, "offices_per_1000"),
        }
    return {}


def component_terms(component: str, value: float) -> dict[str, float]:
    """Design-term values implied by one raw CMA component value."""
    if component not in COMPONENT_TERMS:
        raise KeyError(component)
    if component == "bank_presence":
        return {"presence_2": float(value == 2), "presence_3": float(value == 3)}
    if component in ("dist_sber_km", "dist_other_km"):
        return {COMPONENT_TERMS[component][0]: log_distance(value)}
    return {COMPONENT_TERMS[component][0]: float(value)}


def state_labels(frame: pd.DataFrame, spec: ModelSpec, which: str) -> pd.Series:
    """Outcome-space (``next``) or lag-space (``now``) label per origin row."""
    prefix = "next_" if which == "next" else ""
    state = frame[f"{prefix}state"]
    if spec.model == "loan" and which == "next":
        if spec.loan_outcome == "any":
            return frame["next_loan_taken"].map({0.0: "0", 1.0: "1"})
        loan_type = frame.get("next_loan_type", pd.Series(None, index=frame.index, dtype=object))
        return loan_type.where(loan_type.notna(), frame["next_loan_taken"].map({0.0: "N"}))
    if spec.scheme == "pay_type" and spec.model == "employment":
        pay = frame[f"{prefix}pay_type"]
        return pay.where(pay.notna(), state.map({"O": "NJ"}))
    if spec.scheme == "disaggregated" and which == "now":
        sub = frame["informal_subtype"].fillna("UNK")
        return state.where(state != "I", sub)
    return state


def _select_heads(origins: pd.DataFrame, spec: ModelSpec) -> pd.DataFrame:
    if "household_id" not in origins.columns or origins["household_id"].isna().all():
        raise MissingColumn(["household_id"])
    lo, hi = spec.head_age_range
    frame = origins.assign(_eligible=origins["age"].between(lo, hi))
    frame = frame.sort_values(["household_id", "year", "person_id"], kind="mergesort")
    rng = np.random.default_rng(spec.head_seed)
    chosen = []
    for _, group in frame.groupby(["household_id", "year"], sort=True):
        pool = group[group["_eligible"]] if group["_eligible"].any() else group
        if spec.head_rule == "random":
            chosen.append(pool.index[rng.integers(len(pool))])
        elif spec.head_rule == "oldest_male":
            men = pool[pool["female"] == 0]
            cand = men if len(men) else pool
            chosen.append(cand.sort_values(["age", "person_id"], ascending=[False, True]).index[0])
        else:
            if "earnings" not in pool.columns:
                raise MissingColumn(["earnings"])
            ranked = pool.assign(_earn=pool["earnings"].fillna(-np.inf))
            chosen.append(ranked.sort_values(["_earn", "age", "person_id"], ascending=[False, False, True]).index[0])
    return origins.loc[sorted(chosen)]


def _dummies(values: pd.Series, prefix: str) -> tuple[dict[str, np.ndarray], str]:
    text = values.astype(str)
    levels = sorted(text.unique())
    out = {f"{prefix}_{lvl}": (text == lvl).to_numpy(dtype=float) for lvl in levels[1:]}
    return out, levels[0]


def _sha(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        if a is not None:
            h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def build_design(ds: PanelDataset, spec: ModelSpec) -> DesignMatrix:
    """Regressor blocks for every origin record of a selected dataset."""
    if not ds.selected:
        raise DataError("build_design needs a dataset returned by apply_selection_rules")
    kept = ds.frame
    rec = ds.origins.copy()

    if not spec.exit_outcome:
        rec = rec.loc[rec["next_state"] != EXIT_OUTCOME]
    for col, values in spec.exclude.items():
        if col not in rec.columns:
            raise MissingColumn([col])
        rec = rec.loc[~rec[col].isin(values)]
    if spec.no_loan_intent_only or spec.model == "loan":
        if rec["loan_intent"].isna().all():
            raise DataError("loan_intent is required by this specification but is absent")
        rec = rec.loc[rec["loan_intent"] == 0]
    if spec.model == "employment" and spec.scheme == "pay_type":
        iea = (rec["informal_subtype"] == "IEA") | (rec["next_informal_subtype"] == "IEA")
        rec = rec.loc[~iea]

    rec = rec.assign(_lag=state_labels(rec, spec, "now"), _out=state_labels(rec, spec, "next"))
    dropped = int((rec["_lag"].isna() | rec["_out"].isna()).sum())
    if dropped:
        logger.info("Dropping %d records with no label under scheme %s", dropped, spec.scheme)
    rec = rec.loc[rec["_lag"].notna() & rec["_out"].notna()]
    if spec.model == "loan":
        rec = _select_heads(rec, spec)
    rec = rec.sort_values(["person_id", "year"], kind="mergesort").reset_index(drop=True)
    if rec.empty:
        raise EmptyAfterSelection(f"no transition records left for specification {spec.name!r}")

    unknown = sorted(set(rec["_out"]) - set(spec.outcomes))
    if unknown:
        raise DataError(f"outcome labels {unknown} are not in {spec.outcomes}")
    unknown = sorted(set(rec["_lag"]) - set(spec.lagged_states))
    if unknown:
        raise DataError(f"lagged-state labels {unknown} are not in {spec.lagged_states}")

    person, person_ids = pd.factorize(rec["person_id"], sort=True)
    first = rec.groupby("person_id", sort=True).head(1).reset_index(drop=True)

    cols: dict[str, np.ndarray] = {}
    parents: dict[str, tuple[str, str]] = {}
    omitted: dict[str, str] = {"lagged_state": spec.lag_omitted}
    n = len(rec)
    if spec.intercept:
        cols["const"] = np.ones(n)
    lag_cols = []
    for s in spec.lagged_states:
        if s != spec.lag_omitted:
            cols[f"lag_{s}"] = (rec["_lag"] == s).to_numpy(dtype=float)
            lag_cols.append(f"lag_{s}")
    cma_terms = CMA_TERMS[spec.cma]
    cols.update(cma_term_values(rec, spec.cma))
    if spec.interactions:
        for lag in lag_cols:
            for term in cma_terms:
                name = f"{lag}*{term}"
                cols[name] = cols[lag] * cols[term]
                parents[name] = (lag, term)
    for name in (*spec.current, *spec.constant):
        cols[name] = _covariate(rec, name)
    for name in spec.categorical:
        if name not in rec.columns:
            raise MissingColumn([name])
        values = rec[name].fillna("missing") if name == "parent_educ" else rec[name]
        block, omitted[name] = _dummies(values, name)
        cols.update(block)
    if spec.year_effects:
        block, omitted["year"] = _dummies(rec["year"], "year")
        cols.update(block)

    if spec.uses_wrs:
        first_lag = state_labels(first, spec, "now")
        init_lag = {s: (first_lag == s).to_numpy(dtype=float) for s in spec.lagged_states if s != spec.lag_omitted}
        for s, v in init_lag.items():
            cols[f"init_{s}"] = v[person]
        means = _later_means(kept, first, spec.time_means)
        for name in spec.time_means:
            cols[f"mean_{name}"] = means[name][person]
        for name in spec.initial:
            cols[f"init_{name}"] = _covariate(first, name)[person]

    Z = z_columns = y_init = None
    if spec.uses_heckman:
        zc: dict[str, np.ndarray] = {"const": np.ones(len(first))}
        for name in spec.initial:
            zc[f"init_{name}"] = _covariate(first, name)
        for name in spec.constant:
            zc[name] = _covariate(first, name)
        for name in spec.instruments:
            zc[f"iv_{name}"] = _covariate(first, name)
        z_columns = tuple(zc)
        Z = np.column_stack(list(zc.values()))
        if np.isnan(Z).any():
            bad = [c for c, v in zc.items() if np.isnan(v).any()]
            raise DataError(f"initial-period covariates missing for some persons: {', '.join(bad)}")
        init_labels = first["state"] if spec.scheme != "pay_type" else state_labels(first, spec, "now")
        y_init = init_labels.map({o: i for i, o in enumerate(spec.outcomes)}).to_numpy()
        if pd.isna(y_init).any():
            raise DataError("initial state outside the outcome set")
        y_init = y_init.astype(np.int64)

    columns = tuple(cols)
    X = np.column_stack([cols[c] for c in columns]) if columns else np.zeros((n, 0))
    if np.isnan(X).any():
        bad = [c for c in columns if np.isnan(cols[c]).any()]
        raise DataError(f"missing values in design columns: {', '.join(bad)}")
    y = rec["_out"].map({o: i for i, o in enumerate(spec.outcomes)}).to_numpy(dtype=np.int64)
    origin = rec["_lag"].map({s: i for i, s in enumerate(spec.lagged_states)}).to_numpy(dtype=np.int64)

    if spec.model == "loan":
        cluster = pd.factorize(first["household_id"], sort=True)[0].astype(np.int64)
    else:
        cluster = np.arange(len(person_ids), dtype=np.int64)
    person = person.astype(np.int64)

    for arr in (X, y, person, origin, cluster, Z, y_init):
        if arr is not None:
            arr.setflags(write=False)

    manifest = {
        "spec": spec.name,
        "spec_digest": spec.digest(),
        "model": spec.model,
        "scheme": spec.scheme,
        "outcomes": list(spec.outcomes),
        "base": spec.base,
        "lagged_states": list(spec.lagged_states),
        "omitted_levels": omitted,
        "columns": list(columns),
        "z_columns": list(z_columns or ()),
        "interactions": {k: list(v) for k, v in parents.items()},
        "n_records": int(n),
        "n_persons": int(len(person_ids)),
        "n_clusters": int(cluster.max() + 1),
        "content_sha256": _sha(X, y, origin, person, Z, y_init),
    }
    frame = rec.rename(columns={"_lag": "origin_label", "_out": "outcome_label"})
    logger.info("Design %s: %d records, %d persons, %d columns", spec.name, n, len(person_ids), len(columns))
    return DesignMatrix(
        X=X,
        y=y,
        person=person,
        origin=origin,
        columns=columns,
        outcomes=spec.outcomes,
        base=spec.outcomes.index(spec.base),
        origin_labels=spec.lagged_states,
        person_ids=np.asarray(person_ids, dtype=np.int64),
        cluster=cluster,
        parents=parents,
        cma_terms=cma_terms,
        manifest=manifest,
        frame=frame,
        Z=Z,
        z_columns=tuple(z_columns or ()),
        y_init=y_init,
    )


def _later_means(kept: pd.DataFrame, first: pd.DataFrame, names: Sequence[str]) -> dict[str, np.ndarray]:
    """Per-person mean over kept rows after the initial record (waves 2..T_i)."""
    start = first.set_index("person_id")["year"]
    rows = kept.loc[kept["person_id"].isin(start.index)]
    rows = rows.loc[rows["year"].to_numpy() > start.reindex(rows["person_id"]).to_numpy()]
    out = {}
    for name in names:
        values = pd.Series(_covariate(rows, name), index=rows.index)
        means = values.groupby(rows["person_id"]).mean().reindex(start.index)
        fallback = pd.Series(_covariate(first, name), index=first["person_id"].to_numpy())
        if means.isna().any():
            logger.debug("mean_%s: %d persons fall back to their initial value", name, int(means.isna().sum()))
        out[name] = means.fillna(fallback).to_numpy(dtype=float)
    return out
