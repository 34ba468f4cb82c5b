"""Credit-market-accessibility index from community-level bank components.

Four components per community-year: bank presence (1 = no bank, 2 = other banks
only, 3 = savings bank present), distance to the nearest savings-bank office,
distance to the nearest other bank and offices per 1000 residents. Distances enter
through ln(1+d) in km. The z-score index averages standardized components with
distances negated; the PCA index is the first principal component of the
standardized components, signed so the presence loading is positive. Both are
re-standardized to mean 0 and sample SD 1 over the construction sample.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Literal, Mapping, Union

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.decomposition import PCA
from sklearn.preprocessing import StandardScaler

from dynmlogit.errors import DataError, DegenerateComponent, MissingColumn, NegativeDistance

if TYPE_CHECKING:
    from dynmlogit.panel import PanelDataset

logger = logging.getLogger(__name__)

COMPONENTS = ("bank_presence", "dist_sber_km", "dist_other_km", "offices_per_1000")
DISTANCES = ("dist_sber_km", "dist_other_km")
KEYS = ("community_id", "year")
UNIT_TO_KM = {"km": 1.0, "m": 1e-3}

DistanceUnit = Union[Literal["km", "m"], Mapping[str, str]]


def log_distance(d_km):
    """ln(1 + d); d in km, scalar or array."""
    d = np.asarray(d_km, dtype=float)
    if np.any(d < 0):
        raise NegativeDistance(f"distance must be >= 0 (got min {np.nanmin(d)!r})")
    out = np.log1p(d)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CmaIndex:
    """Index values aligned with the component rows they were built from."""

    table: pd.DataFrame  # KEYS (when available), index, score, method
    method: str
    loadings: pd.Series | None = None
    explained_variance: float | None = None

    @property
    def values(self) -> np.ndarray:
        return self.table["index"].to_numpy()

    def report(self) -> dict:
        out = {"method": self.method, "n": int(len(self.table))}
        if self.loadings is not None:
            out["loadings"] = {k: float(v) for k, v in self.loadings.items()}
            out["explained_variance"] = float(self.explained_variance)
        return out


def _units(distance_unit: DistanceUnit) -> dict[str, float]:
    if isinstance(distance_unit, str):
        distance_unit = {col: distance_unit for col in DISTANCES}
    scale = {}
    for col in DISTANCES:
        unit = distance_unit.get(col, "km")
        if unit not in UNIT_TO_KM:
            raise DataError(f"unknown distance unit {unit!r} for {col}")
        scale[col] = UNIT_TO_KM[unit]
    return scale


def _transformed(rows: pd.DataFrame, distance_unit: DistanceUnit) -> pd.DataFrame:
    missing = [c for c in COMPONENTS if c not in rows.columns]
    if missing:
        raise MissingColumn(missing)
    scale = _units(distance_unit)
    out = pd.DataFrame(index=rows.index)
    out["bank_presence"] = rows["bank_presence"].astype(float)
    for col in DISTANCES:
        out[col] = log_distance(rows[col].to_numpy(dtype=float) * scale[col])
    out["offices_per_1000"] = rows["offices_per_1000"].astype(float)
    if out.isna().any().any():
        bad = out.columns[out.isna().any()].tolist()
        raise DataError(f"missing component values in {', '.join(bad)}")
    return out


def _usable(comp: pd.DataFrame, on_constant: str) -> pd.DataFrame:
    if len(comp) < 2:
        raise DataError("an index needs at least 2 community-year rows")
    constant = [c for c in comp.columns if np.ptp(comp[c].to_numpy()) == 0.0]
    if constant:
        if on_constant == "raise":
            raise DegenerateComponent(constant[0])
        logger.warning("Dropping constant component(s) from the index: %s", ", ".join(constant))
        comp = comp.drop(columns=constant)
        if comp.shape[1] == 0:
            raise DegenerateComponent(constant[0])
    return comp


def _finish(rows: pd.DataFrame, score: np.ndarray, method: str) -> pd.DataFrame:
    table = pd.DataFrame(index=rows.index)
    for key in KEYS:
        if key in rows.columns:
            table[key] = rows[key]
    table["index"] = stats.zscore(score, ddof=1)
    table["score"] = score
    table["method"] = method
    return table


def zscore_index(
    rows: pd.DataFrame,
    distance_unit: DistanceUnit = "km",
    on_constant: Literal["raise", "drop"] = "raise",
) -> CmaIndex:
    comp = _usable(_transformed(rows, distance_unit), on_constant)
    z = comp.apply(lambda s: stats.zscore(s.to_numpy(), ddof=1))
    for col in DISTANCES:
        if col in z.columns:
            z[col] = -z[col]
    score = z.mean(axis=1).to_numpy()
    if np.ptp(score) == 0.0:
        raise DegenerateComponent("index")
    return CmaIndex(table=_finish(rows, score, "zscore"), method="zscore")


def pca_index(
    rows: pd.DataFrame,
    distance_unit: DistanceUnit = "km",
    on_constant: Literal["raise", "drop"] = "raise",
) -> CmaIndex:
    comp = _usable(_transformed(rows, distance_unit), on_constant)
    scaled = StandardScaler().fit_transform(comp.to_numpy())
    pca = PCA(n_components=1, svd_solver="full", tol=1e-12)
    scores = pca.fit_transform(scaled)[:, 0]
    loadings = pd.Series(pca.components_[0], index=comp.columns)
    anchor = "bank_presence" if "bank_presence" in loadings.index else loadings.abs().idxmax()
    if loadings[anchor] < 0:
        loadings, scores = -loadings, -scores
    explained = float(pca.explained_variance_ratio_[0])
    logger.debug("PCA index: first component explains %.1f%% of variance", 100 * explained)
    return CmaIndex(
        table=_finish(rows, scores, "pca"),
        method="pca",
        loadings=loadings,
        explained_variance=explained,
    )


def build_index(rows: pd.DataFrame, method: str = "zscore", **kwargs) -> CmaIndex:
    builders = {"zscore": zscore_index, "pca": pca_index}
    if method not in builders:
        raise DataError(f"unknown index method {method!r}; expected one of {sorted(builders)}")
    return builders[method](rows, **kwargs)


def component_table(frame: pd.DataFrame, distance_unit: DistanceUnit = "km") -> pd.DataFrame:
    """One row per community-year with the four components, distances in km.

    Person-level rows of the same community-year must agree; the coding rules
    (no savings-bank distance when presence >= 2, no other-bank distance when
    presence = 3) are enforced.
    """
    missing = [c for c in (*KEYS, *COMPONENTS) if c not in frame.columns]
    if missing:
        raise MissingColumn(missing)
    rows = frame.loc[:, [*KEYS, *COMPONENTS]].dropna(subset=list(COMPONENTS))
    scale = _units(distance_unit)
    rows = rows.assign(**{col: rows[col].astype(float) * scale[col] for col in DISTANCES})
    if (rows[list(DISTANCES)] < 0).any().any():
        raise NegativeDistance("negative distance in component table")

    disagree = rows.groupby(list(KEYS))[list(COMPONENTS)].nunique().gt(1).any(axis=1)
    if disagree.any():
        cid, year = disagree[disagree].index[0]
        raise DataError(f"conflicting component values within community {cid}, year {year}")
    table = rows.groupby(list(KEYS), sort=True)[list(COMPONENTS)].first().reset_index()

    presence = table["bank_presence"]
    if not presence.isin([1, 2, 3]).all():
        raise DataError("bank_presence must be 1, 2 or 3")
    if (table.loc[presence >= 2, "dist_sber_km"] != 0).any():
        raise DataError("dist_sber_km must be 0 where bank_presence >= 2")
    if (table.loc[presence == 3, "dist_other_km"] != 0).any():
        raise DataError("dist_other_km must be 0 where bank_presence == 3")
    return table


def attach_index(ds: "PanelDataset", index: CmaIndex) -> "PanelDataset":
    """Overwrite the panel's cma_index column from a community-year index."""
    if "community_id" not in ds.frame.columns:
        raise MissingColumn(["community_id"])
    lookup = index.table.set_index(list(KEYS))["index"]
    keys = pd.MultiIndex.from_frame(ds.frame[list(KEYS)])
    frame = ds.frame.copy()
    frame["cma_index"] = lookup.reindex(keys).to_numpy()
    unmatched = int(frame["cma_index"].isna().sum())
    if unmatched:
        logger.warning("%d panel rows have no index value for their community-year", unmatched)
    return ds.with_frame(frame)


def write_index(index: CmaIndex, path: Path) -> Path:
    path = Path(path)
    cols = [c for c in (*KEYS, "index", "method") if c in index.table.columns]
    index.table.loc[:, cols].to_csv(path, index=False, float_format="%.17g")
    return path
