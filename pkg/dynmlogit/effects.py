"""Post-estimation: predicted probabilities, marginal effects, policy scenarios.

Predictions integrate the softmax over the estimated random-effect law with the
fit's quadrature rule (population-averaged); ``conditional=True`` evaluates at
eta = 0 instead. Standard errors use the delta method with a central-difference
Jacobian in the parameters.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import softmax

from dynmlogit.errors import (
    ConfigInvalid,
    DimensionMismatch,
    EmptySubgroup,
    ScenarioSpecMismatch,
    TargetNotInSpec,
)
from dynmlogit.estimator import FitResult, ParameterLayout, numeric_jacobian
from dynmlogit.panel import COMPONENT_TERMS, DesignMatrix, component_terms
from dynmlogit.quadrature import IntegrationRule, gauss_hermite
from dynmlogit.specs import PolicyScenario

logger = logging.getLogger(__name__)

JACOBIAN_STEP = 1e-5

Point = Union[np.ndarray, Sequence[float], Mapping[str, float]]


@dataclass(frozen=True)
class EffectReport:
    target: str
    table: pd.DataFrame  # origin, destination, effect, se, n
    metadata: dict = field(default_factory=dict)

    def effect(self, origin: str, destination: str) -> float:
        row = self.table.loc[(self.table["origin"] == origin) & (self.table["destination"] == destination)]
        return float(row["effect"].iloc[0])

    def pivot(self, value: str = "effect") -> pd.DataFrame:
        return self.table.pivot(index="origin", columns="destination", values=value)

    def to_json(self) -> str:
        return json.dumps(
            {"target": self.target, "metadata": self.metadata, "rows": self.table.to_dict(orient="records")},
            indent=2,
        )


# ── building blocks ─────────────────────────────────────────────────────────

def _rule(fit: FitResult, conditional: bool) -> IntegrationRule:
    dim = fit.layout.dim
    if conditional or dim == 0:
        return IntegrationRule(np.zeros((1, dim)), np.ones(1))
    return gauss_hermite(fit.spec.quadrature_nodes, dim)


def _parents(columns: Sequence[str]) -> dict[str, tuple[str, str]]:
    return {c: tuple(c.split("*", 1)) for c in columns if "*" in c}


def _lag_columns(columns: Sequence[str]) -> list[str]:
    return [c for c in columns if c.startswith("lag_") and "*" not in c]


def _check_design(fit: FitResult, design: DesignMatrix):
    if tuple(design.columns) != tuple(fit.layout.columns):
        raise DimensionMismatch("design columns do not match the fitted model")


def _check_target(fit: FitResult, target: str):
    columns = fit.layout.columns
    if target not in columns or "*" in target:
        raise TargetNotInSpec(f"{target!r} is not a main-effect column of the fitted model")


def apply_updates(
    columns: Sequence[str],
    X: np.ndarray,
    updates: Optional[Mapping[str, Union[float, np.ndarray]]] = None,
    origin: Optional[str] = None,
) -> np.ndarray:
    """Copy of X with columns overwritten, the lagged state optionally fixed and
    every interaction column recomputed from its parents."""
    X = np.array(X, dtype=float, copy=True, ndmin=2)
    index = {c: k for k, c in enumerate(columns)}
    for name, value in (updates or {}).items():
        X[:, index[name]] = value
    if origin is not None:
        for lag in _lag_columns(columns):
            X[:, index[lag]] = float(lag == f"lag_{origin}")
    for name, (a, b) in _parents(columns).items():
        X[:, index[name]] = X[:, index[a]] * X[:, index[b]]
    return X


def shift_covariate(fit: FitResult, X: np.ndarray, target: str, delta: float) -> np.ndarray:
    k = fit.layout.columns.index(target)
    return apply_updates(fit.layout.columns, X, {target: X[:, k] + delta})


def _mixture(layout: ParameterLayout, theta: np.ndarray, X: np.ndarray, rule: IntegrationRule):
    """Node-level probabilities (n x Q x K) and their rule average (n x K)."""
    p = layout.unpack(theta)
    eta = rule.nodes @ p.L.T
    n, K = X.shape[0], len(layout.outcomes)
    V = np.zeros((n, rule.size, K))
    V[:, :, layout.non_base] = (X @ p.B)[:, None, :] + eta[None, :, :]
    P = softmax(V, axis=2)
    return P, np.einsum("q,tqk->tk", rule.weights, P)


def _probabilities(fit: FitResult, theta: np.ndarray, X: np.ndarray, conditional: bool) -> np.ndarray:
    return _mixture(fit.layout, theta, X, _rule(fit, conditional))[1]


def _index_derivative(layout: ParameterLayout, theta: np.ndarray, X: np.ndarray, target: str) -> np.ndarray:
    """dV/d target for every record and non-base outcome, interaction channel included."""
    B = layout.unpack(theta).B
    columns = layout.columns
    dV = np.broadcast_to(B[columns.index(target)], (X.shape[0], layout.m)).copy()
    for name, (a, b) in _parents(columns).items():
        if target in (a, b):
            other = b if target == a else a
            dV += X[:, [columns.index(other)]] * B[columns.index(name)][None, :]
    return dV


def _record_effects(fit: FitResult, theta: np.ndarray, X: np.ndarray, target: str, conditional: bool) -> np.ndarray:
    """Analytic dP_k/d target per record (n x K)."""
    layout = fit.layout
    P, _ = _mixture(layout, theta, X, _rule(fit, conditional))
    dV = np.zeros((X.shape[0], len(layout.outcomes)))
    dV[:, layout.non_base] = _index_derivative(layout, theta, X, target)
    mean_dV = np.einsum("tqk,tk->tq", P, dV)
    weights = _rule(fit, conditional).weights
    return np.einsum("q,tqk->tk", weights, P * (dV[:, None, :] - mean_dV[:, :, None]))


def _delta_se(fit: FitResult, fun: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    J = numeric_jacobian(fun, fit.params, rel_step=JACOBIAN_STEP)
    cov = J @ fit.cov @ J.T
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def mean_point(design: DesignMatrix, mask: Optional[np.ndarray] = None) -> np.ndarray:
    X = design.X if mask is None else design.X[mask]
    return X.mean(axis=0)


def origin_frequencies(design: DesignMatrix, mask: Optional[np.ndarray] = None) -> pd.Series:
    origin = design.origin if mask is None else design.origin[mask]
    counts = np.bincount(origin, minlength=len(design.origin_labels))
    freq = pd.Series(counts / counts.sum(), index=list(design.origin_labels))
    return freq[freq > 0]


def _origin_mix(fit: FitResult, theta, point: np.ndarray, freq: pd.Series, updates, conditional) -> np.ndarray:
    columns = fit.layout.columns
    X = np.vstack([apply_updates(columns, point, updates, origin=s) for s in freq.index])
    return freq.to_numpy() @ _probabilities(fit, theta, X, conditional)


# ── public operations ───────────────────────────────────────────────────────

def make_point(fit: FitResult, point: Point) -> np.ndarray:
    columns = fit.layout.columns
    if isinstance(point, Mapping):
        unknown = sorted(set(point) - set(columns))
        if unknown:
            raise DimensionMismatch(f"unknown covariates in point: {', '.join(unknown)}")
        x = np.zeros(len(columns))
        for name, value in point.items():
            x[columns.index(name)] = value
        return x
    x = np.asarray(point, dtype=float).ravel()
    if x.shape != (len(columns),):
        raise DimensionMismatch(f"point has {x.size} values, model has {len(columns)} columns")
    return x


def predict_probabilities(
    fit: FitResult,
    covariate_point: Point,
    origin_state: Optional[str] = None,
    conditional: bool = False,
) -> pd.Series:
    """Probability of each outcome at one covariate point.

    ``origin_state`` overrides the lagged-state dummies; interactions are
    recomputed from their parents either way.
    """
    x = make_point(fit, covariate_point)
    lagged = fit.design_manifest.get("lagged_states")
    if origin_state is not None and lagged is not None and origin_state not in lagged:
        raise DimensionMismatch(f"unknown origin state {origin_state!r}")
    X = apply_updates(fit.layout.columns, x, origin=origin_state)
    probs = _probabilities(fit, fit.params, X, conditional)[0]
    return pd.Series(probs, index=list(fit.layout.outcomes))


def average_marginal_effect(
    fit: FitResult,
    design: DesignMatrix,
    target: str = "cma",
    conditional: bool = False,
    with_se: bool = True,
) -> EffectReport:
    """Sample-average dP/d target by origin state, plus the all-origin share effect."""
    _check_design(fit, design)
    _check_target(fit, target)
    origins = [s for s in design.origin_labels if np.any(design.origin == design.origin_labels.index(s))]
    masks = [design.origin == design.origin_labels.index(s) for s in origins]
    K = len(fit.layout.outcomes)

    def values(theta):
        eff = _record_effects(fit, theta, design.X, target, conditional)
        rows = [eff[m].mean(axis=0) for m in masks] + [eff.mean(axis=0)]
        return np.concatenate(rows)

    effect = values(fit.params)
    se = _delta_se(fit, values) if with_se else np.full_like(effect, np.nan)
    labels = origins + ["all"]
    counts = [int(m.sum()) for m in masks] + [design.n_records]
    table = pd.DataFrame({
        "origin": np.repeat(labels, K),
        "destination": list(fit.layout.outcomes) * len(labels),
        "effect": effect,
        "se": se,
        "n": np.repeat(counts, K),
    })
    logger.info("AME of %s computed over %d records", target, design.n_records)
    return EffectReport(target=target, table=table, metadata={"conditional": conditional, "weights": "origin frequencies"})


def effects_at_grid(
    fit: FitResult,
    design: DesignMatrix,
    target: str,
    grid: Sequence[float],
    conditional: bool = False,
) -> pd.DataFrame:
    """Predicted probabilities at sample means with ``target`` set to each grid value.

    Origin states are mixed at their sample frequencies. Columns: value, then
    P_<o>, se_<o>, lo_<o>, hi_<o> per outcome.
    """
    _check_design(fit, design)
    _check_target(fit, target)
    point = mean_point(design)
    freq = origin_frequencies(design)
    grid = np.asarray(grid, dtype=float)

    def values(theta):
        return np.concatenate([_origin_mix(fit, theta, point, freq, {target: g}, conditional) for g in grid])

    K = len(fit.layout.outcomes)
    probs = values(fit.params).reshape(len(grid), K)
    se = _delta_se(fit, values).reshape(len(grid), K)
    out = pd.DataFrame({"value": grid})
    for k, o in enumerate(fit.layout.outcomes):
        out[f"P_{o}"] = probs[:, k]
        out[f"se_{o}"] = se[:, k]
        out[f"lo_{o}"] = probs[:, k] - 1.959963984540054 * se[:, k]
        out[f"hi_{o}"] = probs[:, k] + 1.959963984540054 * se[:, k]
    return out


def transition_probabilities(fit: FitResult, design: DesignMatrix, conditional: bool = False) -> pd.DataFrame:
    """Predicted origin x destination matrix at sample means."""
    _check_design(fit, design)
    point = mean_point(design)
    freq = origin_frequencies(design)
    columns = fit.layout.columns
    X = np.vstack([apply_updates(columns, point, origin=s) for s in freq.index])
    probs = _probabilities(fit, fit.params, X, conditional)
    return pd.DataFrame(probs, index=pd.Index(freq.index, name="origin"), columns=list(fit.layout.outcomes))


def _scenario_terms(fit: FitResult, scenario: PolicyScenario):
    columns = set(fit.layout.columns)
    before, after = {}, {}
    for component, (b, a) in scenario.edits.items():
        if component in COMPONENT_TERMS:
            tb, ta = component_terms(component, b), component_terms(component, a)
        elif component in columns and "*" not in component:
            tb, ta = {component: float(b)}, {component: float(a)}
        else:
            raise ScenarioSpecMismatch(f"policy {scenario.name!r} edits unknown component {component!r}")
        missing = sorted(set(tb) - columns)
        if missing:
            raise ScenarioSpecMismatch(
                f"policy {scenario.name!r} edits {component!r} but the fit has no {', '.join(missing)} column(s)"
            )
        before.update(tb)
        after.update(ta)
    return before, after


def subset_mask(design: DesignMatrix, subset: Optional[Mapping[str, Sequence]]) -> np.ndarray:
    mask = np.ones(design.n_records, dtype=bool)
    for column, allowed in (subset or {}).items():
        if column not in design.frame.columns:
            raise ScenarioSpecMismatch(f"subset column {column!r} is not in the estimation sample")
        values = design.frame[column]
        mask &= values.isin(list(allowed)).to_numpy() | values.astype(str).isin([str(v) for v in allowed]).to_numpy()
    return mask


def policy_simulation(
    fit: FitResult,
    design: DesignMatrix,
    scenario: PolicyScenario,
    conditional: bool = False,
) -> pd.DataFrame:
    """Before/after probabilities of each outcome with delta-method SEs.

    Evaluated at the (subset) means of all other covariates, mixing origin
    states at their (subset) frequencies. ``attrs['share_change']`` holds the
    change in the base-outcome share.
    """
    _check_design(fit, design)
    before, after = _scenario_terms(fit, scenario)
    mask = subset_mask(design, scenario.subset)
    if not mask.any():
        raise EmptySubgroup(scenario.name)
    point = mean_point(design, mask)
    freq = origin_frequencies(design, mask)
    K = len(fit.layout.outcomes)

    def values(theta):
        pb = _origin_mix(fit, theta, point, freq, before, conditional)
        pa = _origin_mix(fit, theta, point, freq, after, conditional)
        return np.concatenate([pb, pa, pa - pb])

    v = values(fit.params)
    se = _delta_se(fit, values)
    out = pd.DataFrame({
        "policy": scenario.name,
        "outcome": list(fit.layout.outcomes),
        "before": v[:K],
        "after": v[K:2 * K],
        "change": v[2 * K:],
        "se_before": se[:K],
        "se_after": se[K:2 * K],
        "se_change": se[2 * K:],
    })
    base = fit.layout.outcomes[fit.layout.base]
    out.attrs["share_change"] = float(out.loc[out["outcome"] == base, "change"].iloc[0])
    out.attrs["n"] = int(mask.sum())
    return out


# ── heterogeneous effects ───────────────────────────────────────────────────

def whole_sample(design: DesignMatrix) -> dict[str, np.ndarray]:
    return {"all": np.ones(design.n_records, dtype=bool)}


def tertiles(design: DesignMatrix, column: str, labels=("low", "middle", "high")) -> dict[str, np.ndarray]:
    values = pd.to_numeric(design.frame[column], errors="coerce")
    groups = pd.qcut(values.rank(method="first"), 3, labels=list(labels))
    return {f"{column}:{lab}": (groups == lab).to_numpy() for lab in labels}


def levels(design: DesignMatrix, column: str) -> dict[str, np.ndarray]:
    values = design.frame[column].astype(str)
    return {f"{column}={v}": (values == v).to_numpy() for v in sorted(values.unique())}


def heterogeneous_effects(
    fit: FitResult,
    design: DesignMatrix,
    partition: Mapping[str, Union[np.ndarray, Callable[[pd.DataFrame], np.ndarray]]],
    target: str = "cma",
    share: Optional[str] = None,
    conditional: bool = False,
) -> pd.DataFrame:
    """AME of ``target`` on one outcome's share within each subgroup."""
    _check_design(fit, design)
    _check_target(fit, target)
    outcomes = fit.layout.outcomes
    share = share or ("I" if "I" in outcomes else outcomes[fit.layout.base])
    k = outcomes.index(share)
    masks = {}
    for name, rule in partition.items():
        mask = np.asarray(rule(design.frame) if callable(rule) else rule, dtype=bool)
        if mask.shape != (design.n_records,):
            raise DimensionMismatch(f"subgroup {name!r} mask has the wrong length")
        if not mask.any():
            raise EmptySubgroup(name)
        masks[name] = mask
    covered = np.sum(list(masks.values()), axis=0)
    if (covered > 1).any():
        raise ConfigInvalid(f"subgroups overlap on {int((covered > 1).sum()):,} records; a partition must be disjoint")

    def values(theta):
        eff = _record_effects(fit, theta, design.X, target, conditional)[:, k]
        return np.array([eff[m].mean() for m in masks.values()])

    ame = values(fit.params)
    se = _delta_se(fit, values)
    observed = (design.y == k).astype(float)
    return pd.DataFrame({
        "subgroup": list(masks),
        "n": [int(m.sum()) for m in masks.values()],
        "ame": ame,
        "se": se,
        "mean_share": [observed[m].mean() for m in masks.values()],
    })
