import numpy as np
import pandas as pd
import pytest

from dynmlogit.estimator import fit
from dynmlogit.panel import SCHEMA, apply_selection_rules, build_design, from_frame
from dynmlogit.simulate import generate_panel, simulation_spec
from dynmlogit.specs import DgpConfig, FitOptions, ModelSpec

ROW_DEFAULTS = {
    "state": "F",
    "informal_subtype": None,
    "pay_type": None,
    "age": 30,
    "female": 0,
    "russian": 1,
    "parent_educ": "1",
    "school_years": 11,
    "married": 1,
    "hh_size": 3,
    "kids": 1,
    "log_consumption": 3.5,
    "pop_log": 11.0,
    "urban": 1,
    "district": "1",
    "interval_days": 365,
    "cma_index": 0.0,
    "bank_presence": 3,
    "dist_sber_km": 0.0,
    "dist_other_km": 0.0,
    "offices_per_1000": 0.2,
    "loan_taken": 0,
    "loan_intent": 0,
    "rel_earn_17": 1.0,
    "govt_share": 0.3,
    "informal_share": 0.1,
    "soe_closed": 0,
}


def panel_frame(records, extra=()):
    """Schema-complete rows from partial dicts (person_id and year required)."""
    rows = [{**ROW_DEFAULTS, **r} for r in records]
    return pd.DataFrame(rows, columns=[*SCHEMA, *extra])


def make_panel(records, extra=()):
    return from_frame(panel_frame(records, extra))


def loan_spec(**changes):
    """A lean static loan equation over columns the generator draws."""
    return ModelSpec(
        name="loan",
        model="loan",
        initial_conditions="exogenous",
        interactions=False,
        current=("log_consumption", "married"),
        constant=("female",),
        categorical=(),
        year_effects=False,
        time_means=(),
        initial=(),
        quadrature_nodes=5,
    ).replace(**changes)


def person_rows(pid, states, first_year=2006, **columns):
    """One person's waves; list-valued keyword arguments vary by wave."""
    out = []
    for t, state in enumerate(states):
        row = {"person_id": pid, "year": first_year + t, "state": state, "age": 30 + t}
        if state == "I":
            row["informal_subtype"] = "UE"
        for name, value in columns.items():
            row[name] = value[t] if isinstance(value, (list, tuple)) else value
        out.append(row)
    return out


@pytest.fixture
def ledger_dir(tmp_path, monkeypatch):
    directory = tmp_path / "data"
    monkeypatch.setenv("DYNLAB_DATA_DIR", str(directory))
    return directory


@pytest.fixture(scope="session")
def dgp():
    return DgpConfig(seed=11, persons=250, waves=5)


@pytest.fixture(scope="session")
def simulated(dgp):
    return generate_panel(dgp)


@pytest.fixture(scope="session")
def wrs_spec():
    return simulation_spec("wrs", quadrature_nodes=5)


@pytest.fixture(scope="session")
def wrs_design(simulated, wrs_spec):
    ds, _ = simulated
    selected = apply_selection_rules(ds, required=wrs_spec.required_columns())
    return build_design(selected, wrs_spec)


@pytest.fixture(scope="session")
def wrs_fit(wrs_spec, wrs_design):
    return fit(wrs_spec, wrs_design, FitOptions(check_quadrature=False, strict=False))


@pytest.fixture(scope="session")
def small_design(wrs_design):
    keep = np.zeros(wrs_design.n_persons, dtype=bool)
    keep[:25] = True
    return wrs_design.subset_persons(keep)
