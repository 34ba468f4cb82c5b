"""Synthetic panels from the dynamic multinomial logit with correlated random effects.

Each person gets an independent random stream spawned from the configured seed,
so the panel is identical whether people are drawn serially or on a thread
pool. The community CMA components follow a one-factor model; the index stored
in the panel is built from them by ``cma.build_index``.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import pandas as pd
from scipy.special import expit
from tqdm import tqdm

from dynmlogit.cma import build_index, log_distance
from dynmlogit.errors import ConfigInvalid, EstimationError, SupportInvalid
from dynmlogit.estimator import FitResult, ParameterLayout, fit
from dynmlogit.panel import (
    SCHEMA,
    STATES,
    SUBTYPES,
    PanelDataset,
    apply_selection_rules,
    build_design,
    from_frame,
)
from dynmlogit.quadrature import discrete_rule
from dynmlogit.specs import SCHEMES, DgpConfig, FitOptions, ModelSpec

logger = logging.getLogger(__name__)

OUTCOMES = SCHEMES["registration"]["outcomes"]
BASE = SCHEMES["registration"]["base"]
NON_BASE = tuple(o for o in OUTCOMES if o != BASE)
SUBTYPE_DRAWS = SUBTYPES[:4]
LAG_LABELS = STATES + SUBTYPES
LOAN_OUTCOMES = ("0", "1")
Sampler = Literal["categorical", "gumbel"]


# ── ground truth ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class GroundTruth:
    """True parameters of a DgpConfig, addressable by fitted parameter name."""

    config: DgpConfig

    def value(self, name: str) -> float:
        cfg = self.config
        if name.startswith("init:"):
            _, outcome, column = name.split(":", 2)
            j = NON_BASE.index(outcome)
            if column == "const":
                return float(cfg.initial.intercepts[j])
            if column.startswith("iv_") and column[3:] in cfg.initial.instruments:
                return float(cfg.initial.instruments[column[3:]][j])
            return 0.0
        if name.startswith("rho:"):
            if cfg.initial.mode != "correlated":
                return 0.0
            return float(cfg.initial.mixing[NON_BASE.index(name[4:])])
        if name.startswith("chol["):
            a, b = name[5:-1].split(",")
            if a in LOAN_OUTCOMES:
                return float(cfg.loans.sigma_lambda) if cfg.loans else 0.0
            return float(cfg.cholesky[NON_BASE.index(a)][NON_BASE.index(b)])
        if name == "sigma":
            raise ConfigInvalid("the generator has no shared-factor parameterisation")
        outcome, column = name.split(":", 1)
        if outcome in LOAN_OUTCOMES:
            return float(cfg.loans.coefficients.get(column, 0.0)) if cfg.loans else 0.0
        return float(cfg.coefficients.get(column, (0.0,) * len(NON_BASE))[NON_BASE.index(outcome)])

    def vector(self, layout: ParameterLayout) -> np.ndarray:
        return np.array([self.value(n) for n in layout.names])

    def to_dict(self) -> dict:
        return {
            "seed": self.config.seed,
            "outcomes": list(OUTCOMES),
            "base": BASE,
            "coefficients": {k: list(v) for k, v in self.config.coefficients.items()},
            "cholesky": [list(r) for r in self.config.cholesky],
            "covariance": (np.asarray(self.config.cholesky) @ np.asarray(self.config.cholesky).T).tolist(),
            "initial": self.config.initial.model_dump(mode="json"),
            "loans": self.config.loans.model_dump(mode="json") if self.config.loans else None,
            "config": self.config.model_dump(mode="json"),
        }


def write_truth(truth: GroundTruth, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(truth.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


# ── communities ─────────────────────────────────────────────────────────────

def factor_components(latent: np.ndarray, rng: np.random.Generator, noise: float = 0.35) -> pd.DataFrame:
    """Four CMA components driven by one latent accessibility factor."""
    latent = np.asarray(latent, dtype=float)
    n = latent.size
    signal = latent + rng.normal(0.0, noise, n)
    presence = 1 + (signal > -0.4).astype(int) + (signal > 0.6).astype(int)
    sber = np.expm1(np.clip(2.5 - 1.2 * latent + rng.normal(0.0, noise, n), 0.05, None))
    other = np.expm1(np.clip(1.8 - 1.0 * latent + rng.normal(0.0, noise, n), 0.05, None))
    offices = 0.2 * np.exp(0.5 * latent + rng.normal(0.0, noise, n))
    return pd.DataFrame({
        "bank_presence": presence,
        "dist_sber_km": np.where(presence >= 2, 0.0, np.round(sber, 3)),
        "dist_other_km": np.where(presence == 3, 0.0, np.round(other, 3)),
        "offices_per_1000": np.round(offices, 4),
    })


def _communities(cfg: DgpConfig, rng: np.random.Generator) -> pd.DataFrame:
    proc = cfg.cma
    years = cfg.first_year + np.arange(cfg.waves)
    level = rng.normal(size=proc.communities)
    cid = np.repeat(np.arange(proc.communities), len(years))
    year = np.tile(years, proc.communities)
    latent = level[cid] + proc.drift * (year - cfg.first_year)
    table = factor_components(latent, rng, proc.noise)
    table.insert(0, "year", year)
    table.insert(0, "community_id", [f"c{c:03d}" for c in cid])
    index = build_index(table, proc.method, on_constant="drop")
    table["cma_index"] = index.values
    table["region"] = [_region(c % cfg.covariates.regions) for c in cid]
    return table


def _region(k: int) -> str:
    return "Moscow" if k == 0 else f"R{k:02d}"


@dataclass(frozen=True)
class _World:
    cfg: DgpConfig
    L: np.ndarray
    cells: dict
    household_community: np.ndarray


# ── one person ──────────────────────────────────────────────────────────────

def _draw(rng: np.random.Generator, v_non_base: np.ndarray, sampler: Sampler) -> str:
    v = np.insert(np.asarray(v_non_base, dtype=float), OUTCOMES.index(BASE), 0.0)
    if sampler == "gumbel":
        return OUTCOMES[int(np.argmax(v + rng.gumbel(size=v.size)))]
    p = np.exp(v - v.max())
    k = int(np.searchsorted(np.cumsum(p / p.sum()), rng.random(), side="right"))
    return OUTCOMES[min(k, len(OUTCOMES) - 1)]


def _matches(state: str, subtype: Optional[str], label: str) -> float:
    if label in STATES:
        return float(state == label)
    return float(state == "I" and (subtype or "UNK") == label)


class _Person:
    """Covariate paths and states of one simulated person; resolves design names."""

    def __init__(self, series: dict, static: dict, years: np.ndarray, entry_year: int):
        self.series = series
        self.static = static
        self.years = years
        self.entry_year = entry_year
        self.states: list[str] = []
        self.subtypes: list[Optional[str]] = []

    def value(self, name: str, t: int) -> float:
        if name == "const":
            return 1.0
        if "*" in name:
            a, b = name.split("*", 1)
            return self.value(a, t) * self.value(b, t)
        if name.startswith("lag_") and name[4:] in LAG_LABELS:
            return _matches(self.states[t], self.subtypes[t], name[4:])
        if name.startswith("init_"):
            key = name[5:]
            if key in LAG_LABELS:
                return _matches(self.states[0], self.subtypes[0], key)
            return float(self._path(key)[0])
        if name.startswith("mean_"):
            path = self._path(name[5:])
            return float(path[1:].mean()) if path.size > 1 else float(path[0])
        if name in self.series:
            return float(self.series[name][t])
        if name in self.static and not isinstance(self.static[name], str):
            return float(self.static[name])
        if name.startswith("entry_year_"):
            return float(str(self.entry_year) == name[len("entry_year_"):])
        if name.startswith("year_"):
            return float(str(self.years[t]) == name[len("year_"):])
        for prefix in ("parent_educ", "district", "region"):
            if name.startswith(prefix + "_"):
                return float(self.static[prefix] == name[len(prefix) + 1:])
        raise ConfigInvalid(f"the data-generating process has no covariate {name!r}")

    def _path(self, name: str) -> np.ndarray:
        if name in self.series:
            return self.series[name]
        if name in self.static:
            return np.full(self.years.size, float(self.static[name]))
        raise ConfigInvalid(f"the data-generating process has no covariate {name!r}")


def _waves(cfg: DgpConfig, rng: np.random.Generator) -> tuple[int, int]:
    entry = np.asarray(cfg.entry, dtype=float)
    w0 = int(rng.choice(entry.size, p=entry / entry.sum())) if entry.size > 1 else 0
    w0 = min(w0, cfg.waves - 1)
    n = 1
    while w0 + n < cfg.waves:
        leave = cfg.attrition[min(n - 1, len(cfg.attrition) - 1)]
        if rng.random() < leave:
            break
        n += 1
    return w0, n


def _simulate_person(i: int, rng: np.random.Generator, world: _World, sampler: Sampler) -> list[dict]:
    cfg, law = world.cfg, world.cfg.covariates
    w0, n = _waves(cfg, rng)
    years = cfg.first_year + w0 + np.arange(n)
    eta = world.L @ rng.standard_normal(world.L.shape[1])

    lo, hi = law.start_age
    age = rng.integers(lo, hi + 1) + np.arange(n)
    educ = np.asarray(law.parent_educ, dtype=float)
    static = {
        "female": float(rng.random() < law.female),
        "russian": float(rng.random() < law.russian),
        "urban": float(rng.random() < law.urban),
        "pop_log": round(float(rng.normal(law.pop_log_mean, law.pop_log_sd)), 4),
        "parent_educ": str(1 + rng.choice(educ.size, p=educ / educ.sum())),
        "district": str(1 + rng.integers(law.districts)),
        "rel_earn_17": round(float(max(rng.normal(1.0, 0.25), 0.05)), 4),
        "govt_share": round(float(rng.uniform(0.2, 0.6)), 4),
        "informal_share": round(float(rng.uniform(0.05, 0.35)), 4),
        "soe_closed": float(rng.random() < 0.3),
    }

    step = rng.random(n) < 0.08
    step[0] = False
    school = np.clip(np.rint(rng.normal(law.school_mean, law.school_sd)), 0, 20) + np.cumsum(step)
    married = np.zeros(n)
    married[0] = rng.random() < law.married
    for t in range(1, n):
        flip = rng.random() >= law.married_stay
        married[t] = 1.0 - married[t - 1] if flip else married[t - 1]
    births = rng.random(n) < 0.05
    births[0] = False
    kids = rng.poisson(law.kids_mean) + np.cumsum(births)
    moves = rng.choice([-1, 0, 1], size=n, p=[0.06, 0.88, 0.06])
    moves[0] = rng.poisson(max(law.hh_size_mean - 1.5 - law.kids_mean, 0.1))
    others = np.maximum(np.cumsum(moves), 0)
    ar = law.log_consumption_ar
    shock = np.empty(n)
    shock[0] = rng.standard_normal()
    for t in range(1, n):
        shock[t] = ar * shock[t - 1] + math.sqrt(1.0 - ar * ar) * rng.standard_normal()
    loading = law.consumption_eta_loading * (eta[0] if eta.size else 0.0)
    log_consumption = np.round(law.log_consumption_mean + loading + law.log_consumption_sd * shock, 6)
    interval = np.maximum(np.rint(rng.normal(law.interval_mean, law.interval_sd, n)), 1.0)

    household = i // cfg.persons_per_household
    community = int(world.household_community[household])
    cells = [world.cells[(community, int(y))] for y in years]
    presence = np.array([c["bank_presence"] for c in cells], dtype=float)
    series = {
        "age": age.astype(float),
        "age_sq": age.astype(float) ** 2 / 100.0,
        "school_years": school,
        "married": married,
        "hh_size": 1.0 + married + kids + others,
        "kids": kids.astype(float),
        "log_consumption": log_consumption,
        "interval_days": interval,
        "cma": np.array([c["cma_index"] for c in cells]),
        "cma_index": np.array([c["cma_index"] for c in cells]),
        "presence_2": (presence == 2).astype(float),
        "presence_3": (presence == 3).astype(float),
        "log_dist_sber": np.asarray(log_distance([c["dist_sber_km"] for c in cells]), dtype=float),
        "log_dist_other": np.asarray(log_distance([c["dist_other_km"] for c in cells]), dtype=float),
        "offices": np.array([c["offices_per_1000"] for c in cells]),
    }
    static["region"] = cells[0]["region"]
    person = _Person(series, static, years, int(years[0]))

    shares = np.asarray(cfg.subtype_shares, dtype=float)

    def emit(state: str):
        person.states.append(state)
        person.subtypes.append(SUBTYPE_DRAWS[rng.choice(shares.size, p=shares)] if state == "I" else None)

    init = cfg.initial
    v0 = np.asarray(init.intercepts, dtype=float).copy()
    for name, coef in init.instruments.items():
        v0 += np.asarray(coef, dtype=float) * static[name]
    if init.mode == "correlated":
        v0 += np.asarray(init.mixing, dtype=float) * eta
    emit(_draw(rng, v0, sampler))

    names = list(cfg.coefficients)
    B = np.array([cfg.coefficients[c] for c in names], dtype=float).reshape(len(names), len(NON_BASE))
    for t in range(n - 1):
        x = np.array([person.value(c, t) for c in names])
        emit(_draw(rng, x @ B + eta, sampler))

    taken = np.zeros(n)
    loan_type = ["N"] * n
    intent = np.zeros(n)
    if cfg.loans is not None:
        loans = cfg.loans
        lam = rng.normal(0.0, loans.sigma_lambda)
        intent = (rng.random(n) < loans.intent).astype(float)
        for t in range(n):
            src = max(t - 1, 0)
            index = sum(c * person.value(name, src) for name, c in loans.coefficients.items()) + lam
            if rng.random() < expit(index):
                taken[t] = 1.0
                loan_type[t] = "C" if rng.random() < loans.consumer_share else "MA"

    rows = []
    for t in range(n):
        state, subtype = person.states[t], person.subtypes[t]
        if state == "F":
            pay = "OF"
        elif state == "O":
            pay = "NJ"
        elif subtype == "IEA":
            pay = None
        else:
            pay = "PU" if rng.random() < 0.35 else "UO"
        earn = round(float(np.exp(log_consumption[t] + 2.5 + rng.normal(0.0, 0.3))), 2) if state != "O" else 0.0
        cell = cells[t]
        rows.append({
            "person_id": i + 1,
            "year": int(years[t]),
            "state": state,
            "informal_subtype": subtype,
            "pay_type": pay,
            "age": int(age[t]),
            "female": static["female"],
            "russian": static["russian"],
            "parent_educ": static["parent_educ"],
            "school_years": school[t],
            "married": married[t],
            "hh_size": series["hh_size"][t],
            "kids": series["kids"][t],
            "log_consumption": log_consumption[t],
            "pop_log": static["pop_log"],
            "urban": static["urban"],
            "district": static["district"],
            "interval_days": interval[t],
            "cma_index": cell["cma_index"],
            "bank_presence": cell["bank_presence"],
            "dist_sber_km": cell["dist_sber_km"],
            "dist_other_km": cell["dist_other_km"],
            "offices_per_1000": cell["offices_per_1000"],
            "loan_taken": taken[t] if cfg.loans is not None else None,
            "loan_intent": intent[t] if cfg.loans is not None else None,
            "rel_earn_17": static["rel_earn_17"] if t == 0 else None,
            "govt_share": static["govt_share"] if t == 0 else None,
            "informal_share": static["informal_share"] if t == 0 else None,
            "soe_closed": static["soe_closed"] if t == 0 else None,
            "community_id": f"c{community:03d}",
            "household_id": f"h{household:05d}",
            "region": static["region"],
            "earnings": earn,
            "loan_type": loan_type[t] if cfg.loans is not None else None,
        })
    return rows


def generate_panel(
    cfg: DgpConfig,
    sampler: Sampler = "categorical",
    threads: int = 1,
) -> tuple[PanelDataset, GroundTruth]:
    """Draw a panel and its ground truth; identical seeds give identical panels."""
    if sampler not in ("categorical", "gumbel"):
        raise ConfigInvalid(f"unknown sampler {sampler!r}")
    m = len(NON_BASE)
    if len(cfg.cholesky) != m:
        raise ConfigInvalid(f"the employment generator has {m} non-base outcomes; cholesky is {len(cfg.cholesky)}x{len(cfg.cholesky)}")
    for name in cfg.initial.instruments:
        if name not in ("rel_earn_17", "govt_share", "informal_share", "soe_closed"):
            raise ConfigInvalid(f"unknown instrument {name!r} in the initial-state law")

    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.persons + 1)
    world_rng = np.random.default_rng(streams[0])
    table = _communities(cfg, world_rng)
    cells = {
        (int(c[1:]), int(y)): row
        for (c, y), row in zip(table[["community_id", "year"]].itertuples(index=False), table.to_dict("records"))
    }
    households = -(-cfg.persons // cfg.persons_per_household)
    world = _World(
        cfg=cfg,
        L=np.asarray(cfg.cholesky, dtype=float),
        cells=cells,
        household_community=world_rng.integers(cfg.cma.communities, size=households),
    )

    def person(i: int) -> list[dict]:
        return _simulate_person(i, np.random.default_rng(streams[i + 1]), world, sampler)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            people = list(pool.map(person, range(cfg.persons)))
    else:
        people = [person(i) for i in range(cfg.persons)]

    frame = pd.DataFrame([row for rows in people for row in rows])
    columns = [*SCHEMA, "community_id", "household_id", "region", "earnings", "loan_type"]
    if cfg.loans is None:
        columns.remove("loan_type")
    ds = from_frame(frame.loc[:, columns])
    logger.info("Simulated %d persons, %d person-years (seed %d)", ds.n_persons, ds.n_rows, cfg.seed)
    return ds, GroundTruth(cfg)


# ── brute-force oracle ──────────────────────────────────────────────────────

def _choice_probability(v_non_base, base: int, k: int) -> float:
    v = list(v_non_base)
    v.insert(base, 0.0)
    top = max(v)
    denom = sum(math.exp(x - top) for x in v)
    return math.exp(v[k] - top) / denom


def brute_force_likelihood(design, layout: ParameterLayout, theta, support, weights) -> float:
    """Log-likelihood by explicit enumeration of a discrete heterogeneity law.

    Meant for designs of a handful of records; every person, support point and
    record is visited in plain loops. The support is taken as η directly.
    """
    rule = discrete_rule(support, weights)
    if rule.dim != layout.m:
        raise SupportInvalid(f"support points have dimension {rule.dim}; the model has {layout.m} random effects")
    p = layout.unpack(theta)
    total = 0.0
    for i in range(int(design.person.max()) + 1):
        rows = np.flatnonzero(design.person == i)
        lik = 0.0
        for eta, w in zip(rule.nodes, rule.weights):
            if w == 0.0:
                continue
            prob = 1.0
            for r in rows:
                v = [float(design.X[r] @ p.B[:, j]) + eta[j] for j in range(layout.m)]
                prob *= _choice_probability(v, layout.base, int(design.y[r]))
            if layout.heckman:
                v = [float(design.Z[i] @ p.Theta[:, j]) + p.rho[j] * eta[j] for j in range(layout.m)]
                prob *= _choice_probability(v, layout.base, int(design.y_init[i]))
            lik += w * prob
        total += math.log(lik)
    return total


# ── Monte-Carlo experiments ─────────────────────────────────────────────────

def simulation_spec(mode: str = "wrs", **overrides) -> ModelSpec:
    """A lean specification whose columns cover the default generator."""
    spec = ModelSpec(
        name=mode,
        current=("log_consumption", "married"),
        constant=("female",),
        categorical=(),
        year_effects=False,
        time_means=("log_consumption",),
        initial=("log_consumption",),
    )
    if overrides:
        spec = spec.replace(**overrides)
    return spec.with_mode(mode)


def _replicate(cfg: DgpConfig, spec: ModelSpec, options: FitOptions, age_range=(20, 59)):
    ds, truth = generate_panel(cfg, threads=options.threads)
    selected = apply_selection_rules(ds, age_range=age_range, required=spec.required_columns())
    design = build_design(selected, spec)
    return fit(spec, design, options), truth


def _fit_or_none(cfg, spec, options) -> tuple[Optional[FitResult], GroundTruth]:
    try:
        return _replicate(cfg, spec, options)
    except EstimationError as e:
        logger.warning("Replication seed %d, %s failed: %s", cfg.seed, spec.name, e)
        return None, GroundTruth(cfg)


def _seeds(cfg: DgpConfig, reps: int, progress: bool):
    return tqdm(
        [cfg.replace(seed=cfg.seed + r) for r in range(reps)],
        desc="Replications",
        unit="rep",
        disable=not progress,
    )


def recovery_experiment(
    cfg: DgpConfig,
    spec: Optional[ModelSpec] = None,
    reps: int = 20,
    options: FitOptions = FitOptions(check_quadrature=False),
    progress: bool = False,
) -> pd.DataFrame:
    """Bias and 95% coverage of every parameter over seeds cfg.seed .. cfg.seed+reps-1."""
    spec = spec or simulation_spec("wrs")
    names, truth_vec, estimates, covered = None, None, [], []
    for rep_cfg in _seeds(cfg, reps, progress):
        result, truth = _fit_or_none(rep_cfg, spec, options)
        if result is None:
            continue
        names = result.names
        truth_vec = truth.vector(result.layout)
        lo = result.params - 1.959963984540054 * result.se
        hi = result.params + 1.959963984540054 * result.se
        estimates.append(result.params)
        covered.append((truth_vec >= lo) & (truth_vec <= hi))
    if not estimates:
        raise EstimationError("no replication produced a converged fit")
    est = np.vstack(estimates)
    table = pd.DataFrame({
        "parameter": names,
        "truth": truth_vec,
        "mean_estimate": est.mean(axis=0),
        "bias": est.mean(axis=0) - truth_vec,
        "sd": est.std(axis=0, ddof=1) if len(est) > 1 else np.nan,
        "coverage": np.vstack(covered).mean(axis=0),
    })
    table.attrs["replications"] = len(est)
    table.attrs["failed"] = reps - len(est)
    return table


def _lag_bias(result: FitResult, truth: GroundTruth) -> float:
    idx = [k for k, n in enumerate(result.names) if n.split(":", 1)[-1] in ("lag_I", "lag_O")]
    return float(np.abs(result.params[idx] - truth.vector(result.layout)[idx]).sum())


def initial_conditions_experiment(
    cfg: DgpConfig,
    reps: int = 20,
    options: FitOptions = FitOptions(check_quadrature=False),
    progress: bool = False,
) -> pd.DataFrame:
    """Absolute bias on the state-dependence coefficients: exogenous vs WRS."""
    exogenous, wrs = simulation_spec("exogenous"), simulation_spec("wrs")
    rows = []
    for rep_cfg in _seeds(cfg, reps, progress):
        a, truth = _fit_or_none(rep_cfg, exogenous, options)
        b, _ = _fit_or_none(rep_cfg, wrs, options)
        if a is None or b is None:
            continue
        bias_a, bias_b = _lag_bias(a, truth), _lag_bias(b, truth)
        rows.append({"seed": rep_cfg.seed, "bias_exogenous": bias_a, "bias_wrs": bias_b, "wrs_better": bias_b < bias_a})
    return pd.DataFrame(rows, columns=["seed", "bias_exogenous", "bias_wrs", "wrs_better"])


def heckman_wrs_experiment(
    cfg: DgpConfig,
    reps: int = 10,
    options: FitOptions = FitOptions(check_quadrature=False),
    progress: bool = False,
) -> pd.DataFrame:
    """Interaction coefficients under Heckman and WRS initial conditions."""
    heckman, wrs = simulation_spec("heckman"), simulation_spec("wrs")
    rows = []
    for rep_cfg in _seeds(cfg, reps, progress):
        h, _ = _fit_or_none(rep_cfg, heckman, options)
        w, _ = _fit_or_none(rep_cfg, wrs, options)
        if h is None or w is None:
            continue
        for k, name in enumerate(h.names):
            if "*" not in name or name.startswith("init:"):
                continue
            j = w.names.index(name)
            pooled = math.sqrt((h.se[k] ** 2 + w.se[j] ** 2) / 2.0)
            diff = float(h.params[k] - w.params[j])
            rows.append({
                "seed": rep_cfg.seed,
                "parameter": name,
                "heckman": float(h.params[k]),
                "wrs": float(w.params[j]),
                "pooled_se": pooled,
                "agree": abs(diff) <= 2.0 * pooled,
            })
    return pd.DataFrame(rows, columns=["seed", "parameter", "heckman", "wrs", "pooled_se", "agree"])
