"""Validated configuration documents (ModelSpec, DgpConfig, PolicyScenario, RunConfig).

Every document is a frozen pydantic model so a run's configuration can be
hashed, serialized into the run manifest and compared bitwise across re-runs.
"""
from __future__ import annotations

import hashlib
import json
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from dynmlogit.errors import ConfigInvalid

# State schemes: outcome labels, base outcome, lagged-state labels and the lagged
# category left out of the regression.
SCHEMES: dict[str, dict] = {
    "registration": {
        "outcomes": ("F", "I", "O"),
        "base": "I",
        "lagged": ("F", "I", "O"),
        "lag_omitted": "F",
    },
    "disaggregated": {
        "outcomes": ("F", "I", "O"),
        "base": "I",
        "lagged": ("F", "UE", "SE", "PP", "IEA", "UNK", "O"),
        "lag_omitted": "F",
    },
    "pay_type": {
        "outcomes": ("OF", "PU", "UO", "NJ"),
        "base": "UO",
        "lagged": ("OF", "PU", "UO", "NJ"),
        "lag_omitted": "OF",
    },
}
EXIT_OUTCOME = "X"
LOAN_OUTCOMES = {"any": ("0", "1"), "type": ("N", "MA", "C")}

DEFAULT_CURRENT = (
    "age", "age_sq", "school_years", "married", "hh_size", "kids",
    "log_consumption", "interval_days",
)
DEFAULT_CONSTANT = ("female", "russian", "urban", "pop_log")
DEFAULT_CATEGORICAL = ("parent_educ", "district", "entry_year")
DEFAULT_TIME_VARYING = ("school_years", "married", "hh_size", "kids", "log_consumption")
DEFAULT_INSTRUMENTS = ("rel_earn_17", "govt_share", "informal_share", "soe_closed")

# --mode on the command line -> (heterogeneity, initial conditions)
MODES: dict[str, tuple[str, str]] = {
    "pooled": ("none", "exogenous"),
    "exogenous": ("random_effects", "exogenous"),
    "wrs": ("random_effects", "wrs"),
    "heckman": ("random_effects", "heckman"),
}


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    def digest(self) -> str:
        """sha256 of the canonical JSON form."""
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    def replace(self, **update):
        """A validated copy with fields changed; raises ConfigInvalid."""
        return load_document(type(self), {**self.model_dump(), **update})


class ModelSpec(_Frozen):
    """Declarative description of one dynamic multinomial logit (or loan) model."""

    name: str = "wrs"
    model: Literal["employment", "loan"] = "employment"
    scheme: Literal["registration", "disaggregated", "pay_type"] = "registration"
    base_outcome: Optional[str] = None
    lagged_omitted: Optional[str] = None
    exit_outcome: bool = False

    heterogeneity: Literal["none", "random_effects", "shared"] = "random_effects"
    initial_conditions: Literal["exogenous", "wrs", "heckman"] = "wrs"
    quadrature_nodes: int = Field(7, ge=1, le=40)

    cma: Literal["index", "components", "none"] = "index"
    interactions: bool = True
    current: tuple[str, ...] = DEFAULT_CURRENT
    constant: tuple[str, ...] = DEFAULT_CONSTANT
    categorical: tuple[str, ...] = DEFAULT_CATEGORICAL
    year_effects: bool = True
    intercept: bool = True
    time_means: tuple[str, ...] = DEFAULT_TIME_VARYING
    initial: tuple[str, ...] = DEFAULT_TIME_VARYING
    instruments: tuple[str, ...] = ()

    exclude: dict[str, tuple] = Field(default_factory=dict)
    no_loan_intent_only: bool = False

    loan_outcome: Literal["any", "type"] = "any"
    head_rule: Literal["random", "oldest_male", "highest_earner"] = "random"
    head_seed: int = 0
    head_age_range: tuple[int, int] = (20, 59)

    @field_validator("exclude", mode="before")
    @classmethod
    def _listify_exclude(cls, value):
        return {k: tuple(v) if isinstance(v, (list, tuple, set)) else (v,) for k, v in (value or {}).items()}

    @model_validator(mode="after")
    def _check_blocks(self):
        if self.initial_conditions == "wrs" and (not self.time_means or not self.initial):
            raise ValueError("WRS initial conditions need non-empty time_means and initial blocks")
        if self.initial_conditions == "heckman":
            if not self.instruments:
                raise ValueError("Heckman initial conditions need an instruments block")
            if self.heterogeneity == "none":
                raise ValueError("Heckman initial conditions need random effects")
            if self.exit_outcome:
                raise ValueError("the initial-period equation has no exit outcome; use WRS with exit_outcome")
        if self.model == "loan":
            if self.initial_conditions != "exogenous":
                raise ValueError("the loan equation is static: initial_conditions must be 'exogenous'")
            if self.exit_outcome:
                raise ValueError("exit_outcome applies to employment models only")
        if self.interactions and self.cma == "none":
            raise ValueError("interactions reference the CMA terms; set cma to 'index' or 'components'")
        if self.base_outcome is not None and self.base_outcome not in self.outcomes:
            raise ValueError(f"base_outcome {self.base_outcome!r} not among {self.outcomes}")
        if self.lagged_omitted is not None and self.lagged_omitted not in self.lagged_states:
            raise ValueError(f"lagged_omitted {self.lagged_omitted!r} not among {self.lagged_states}")
        return self

    # ── derived structure ───────────────────────────────────────────────

    @property
    def outcomes(self) -> tuple[str, ...]:
        if self.model == "loan":
            return LOAN_OUTCOMES[self.loan_outcome]
        labels = SCHEMES[self.scheme]["outcomes"]
        return labels + (EXIT_OUTCOME,) if self.exit_outcome else labels

    @property
    def base(self) -> str:
        if self.base_outcome is not None:
            return self.base_outcome
        if self.model == "loan":
            return self.outcomes[0]
        return SCHEMES[self.scheme]["base"]

    @property
    def non_base(self) -> tuple[str, ...]:
        return tuple(o for o in self.outcomes if o != self.base)

    @property
    def lagged_states(self) -> tuple[str, ...]:
        scheme = "registration" if self.model == "loan" else self.scheme
        return SCHEMES[scheme]["lagged"]

    @property
    def lag_omitted(self) -> str:
        if self.lagged_omitted is not None:
            return self.lagged_omitted
        scheme = "registration" if self.model == "loan" else self.scheme
        return SCHEMES[scheme]["lag_omitted"]

    @property
    def random_effects(self) -> bool:
        return self.heterogeneity != "none"

    @property
    def uses_wrs(self) -> bool:
        return self.initial_conditions == "wrs"

    @property
    def uses_heckman(self) -> bool:
        return self.initial_conditions == "heckman"

    def with_mode(self, mode: str) -> "ModelSpec":
        if mode not in MODES:
            raise ConfigInvalid(f"unknown mode {mode!r}; expected one of {sorted(MODES)}")
        heterogeneity, initial = MODES[mode]
        if self.model == "loan":
            if mode in ("wrs", "heckman"):
                raise ConfigInvalid(f"mode {mode!r} does not apply to the loan equation")
            heterogeneity = "none" if mode == "pooled" else ("shared" if self.loan_outcome == "type" else "random_effects")
        instruments = self.instruments or (DEFAULT_INSTRUMENTS if initial == "heckman" else ())
        return self.replace(
            heterogeneity=heterogeneity,
            initial_conditions=initial,
            instruments=instruments,
            name=mode if self.name in MODES else self.name,
        )

    def required_columns(self) -> tuple[str, ...]:
        """Raw panel columns that must be non-missing on origin rows."""
        cols = set(self.current) | set(self.constant)
        cols.discard("age_sq")
        cols.add("age")
        if self.cma == "index":
            cols.add("cma_index")
        elif self.cma == "components":
            cols |= {"bank_presence", "dist_sber_km", "dist_other_km", "offices_per_1000"}
        for name in self.categorical:
            if name not in ("entry_year", "parent_educ"):
                cols.add(name)
        return tuple(sorted(cols))


class CovariateLaw(_Frozen):
    start_age: tuple[int, int] = (20, 50)
    female: float = Field(0.5, ge=0, le=1)
    russian: float = Field(0.85, ge=0, le=1)
    urban: float = Field(0.7, ge=0, le=1)
    married: float = Field(0.55, ge=0, le=1)
    married_stay: float = Field(0.9, ge=0, le=1)
    parent_educ: tuple[float, ...] = (0.5, 0.22, 0.2, 0.08)
    districts: int = Field(3, ge=1)
    regions: int = Field(8, ge=1)
    school_mean: float = 11.8
    school_sd: float = 2.3
    hh_size_mean: float = 3.6
    kids_mean: float = 0.6
    log_consumption_mean: float = 3.6
    log_consumption_sd: float = 0.5
    log_consumption_ar: float = Field(0.6, ge=0, lt=1)
    consumption_eta_loading: float = 0.3
    interval_mean: float = 364.0
    interval_sd: float = 25.0
    pop_log_mean: float = 11.5
    pop_log_sd: float = 1.8


class CmaProcess(_Frozen):
    communities: int = Field(40, ge=2)
    method: Literal["zscore", "pca"] = "zscore"
    drift: float = 0.05
    noise: float = 0.35


class InitialLaw(_Frozen):
    """Law of the first observed state; logits are relative to the base outcome."""

    mode: Literal["exogenous", "correlated"] = "exogenous"
    intercepts: tuple[float, ...] = (1.2, 0.2)
    instruments: dict[str, tuple[float, ...]] = Field(default_factory=dict)
    mixing: tuple[float, ...] = (0.0, 0.0)


class LoanLaw(_Frozen):
    coefficients: dict[str, float] = Field(default_factory=lambda: {
        "const": -1.2, "lag_I": -0.172, "lag_O": -0.443, "cma": 0.276,
    })
    sigma_lambda: float = Field(0.6, ge=0)
    intent: float = Field(0.05, ge=0, le=1)
    consumer_share: float = Field(0.8, ge=0, le=1)


DEFAULT_TRANSITION = {
    "const": (0.9, 0.1),
    "lag_I": (-1.9, -0.4),
    "lag_O": (-1.8, 1.0),
    "cma": (0.2, 0.1),
    "lag_I*cma": (0.2, -0.03),
    "lag_O*cma": (0.2, 0.1),
    "female": (0.4, 1.0),
    "log_consumption": (0.2, 0.1),
    "married": (0.1, -0.2),
    "init_I": (-0.6, -0.2),
    "init_O": (-0.3, 0.5),
    "mean_log_consumption": (0.3, -0.4),
    "init_log_consumption": (0.1, 0.0),
}


class DgpConfig(_Frozen):
    """Synthetic data-generating process for the dynamic employment model."""

    seed: int
    persons: int = Field(1000, ge=1)
    waves: int = Field(6, ge=2)
    first_year: int = 2006
    coefficients: dict[str, tuple[float, ...]] = Field(default_factory=lambda: dict(DEFAULT_TRANSITION))
    cholesky: tuple[tuple[float, ...], ...] = ((0.8, 0.0), (0.3, 0.7))
    initial: InitialLaw = Field(default_factory=InitialLaw)
    entry: tuple[float, ...] = (1.0,)
    attrition: tuple[float, ...] = (0.0,)
    covariates: CovariateLaw = Field(default_factory=CovariateLaw)
    cma: CmaProcess = Field(default_factory=CmaProcess)
    loans: Optional[LoanLaw] = Field(default_factory=LoanLaw)
    persons_per_household: int = Field(1, ge=1)
    subtype_shares: tuple[float, ...] = (0.35, 0.25, 0.25, 0.15)

    @field_validator("entry", "attrition")
    @classmethod
    def _probabilities(cls, value):
        if any(p < 0 or p > 1 for p in value):
            raise ValueError("probabilities must lie in [0, 1]")
        return value

    @model_validator(mode="after")
    def _check(self):
        m = len(self.cholesky)
        if any(len(row) != m for row in self.cholesky):
            raise ValueError("cholesky must be square")
        if any(self.cholesky[i][j] != 0.0 for i in range(m) for j in range(i + 1, m)):
            raise ValueError("cholesky must be lower triangular")
        for name, values in self.coefficients.items():
            if len(values) != m:
                raise ValueError(f"coefficient {name!r} needs {m} values (one per non-base outcome)")
        if len(self.initial.intercepts) != m or len(self.initial.mixing) != m:
            raise ValueError("initial-law intercepts and mixing need one value per non-base outcome")
        if abs(sum(self.entry) - 1.0) > 1e-9 and len(self.entry) > 1:
            raise ValueError("entry distribution must sum to 1")
        if abs(sum(self.subtype_shares) - 1.0) > 1e-9:
            raise ValueError("subtype_shares must sum to 1")
        return self


class PolicyScenario(_Frozen):
    """A before/after edit of CMA components (or the index) evaluated at means."""

    name: str
    edits: dict[str, tuple[float, float]]
    subset: Optional[dict[str, tuple]] = None

    @field_validator("subset", mode="before")
    @classmethod
    def _listify_subset(cls, value):
        if value is None:
            return None
        return {k: tuple(v) if isinstance(v, (list, tuple, set)) else (v,) for k, v in value.items()}

    @model_validator(mode="after")
    def _check(self):
        if not self.edits:
            raise ValueError("a policy needs at least one edit")
        for component, (before, after) in self.edits.items():
            if before == after:
                raise ValueError(f"edit of {component!r} leaves the value unchanged ({before})")
        return self


class FitOptions(_Frozen):
    start: Optional[tuple[float, ...]] = None
    max_iter: int = Field(1000, ge=1)
    tol: float = Field(1e-6, gt=0)
    threads: int = Field(1, ge=1)
    strict: bool = True
    newton_polish: bool = True
    check_quadrature: bool = True
    check_nodes: int = Field(15, ge=2)
    cluster_correction: bool = False
    separation_bound: float = 30.0


class EffectsConfig(_Frozen):
    target: str = "cma"
    grid: tuple[float, ...] = (-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0)
    partitions: tuple[str, ...] = ()
    integrate: bool = True


class SelectionConfig(_Frozen):
    age_range: tuple[int, int] = (20, 59)


class RunConfig(_Frozen):
    """The JSON document a CLI run is driven by; flags override its fields."""

    seed: Optional[int] = None
    threads: Optional[int] = None
    model: ModelSpec = Field(default_factory=ModelSpec)
    dgp: Optional[DgpConfig] = None
    fit: FitOptions = Field(default_factory=FitOptions)
    effects: EffectsConfig = Field(default_factory=EffectsConfig)
    selection: SelectionConfig = Field(default_factory=SelectionConfig)
    policies: tuple[PolicyScenario, ...] = ()
    event_window: int = Field(5, ge=1)
    index_method: Literal["zscore", "pca"] = "zscore"
    replications: int = Field(20, ge=1)


def load_document(model_cls, payload: dict):
    """Validate a JSON payload, turning pydantic errors into ConfigInvalid."""
    try:
        return model_cls.model_validate(payload)
    except ValidationError as e:
        raise ConfigInvalid(str(e)) from e
