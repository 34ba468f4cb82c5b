"""Tests for panel loading, sample selection and design construction."""
import numpy as np
import pytest
from numpy.testing import assert_array_equal

from conftest import loan_spec, make_panel, panel_frame, person_rows
from dynmlogit.errors import DataError, DuplicateKey, MissingColumn, RowTypeError
from dynmlogit.panel import (
    SCHEMA,
    SELECTION_STEPS,
    apply_selection_rules,
    build_design,
    load_panel,
    write_panel,
)
from dynmlogit.simulate import simulation_spec

REQUIRED = ("age", "log_consumption")


def test_missing_schema_column():
    header = ",".join(c for c in SCHEMA if c != "cma_index")
    with pytest.raises(MissingColumn) as e:
        load_panel([header])
    assert e.value.columns == ["cma_index"]


def test_unparseable_value_reports_line():
    frame = panel_frame(person_rows(1, "FF"))
    frame["age"] = frame["age"].astype(object)
    frame.loc[1, "age"] = "thirty"
    with pytest.raises(RowTypeError) as e:
        make_panel(frame.to_dict("records"))
    assert e.value.line == 3


def test_subtype_only_on_informal_rows():
    rows = person_rows(1, "FF")
    rows[0]["informal_subtype"] = "SE"
    with pytest.raises(RowTypeError):
        make_panel(rows)


def test_unknown_state_label():
    rows = person_rows(1, "FF")
    rows[1]["state"] = "Q"
    with pytest.raises(RowTypeError):
        make_panel(rows)


def test_duplicate_key():
    rows = person_rows(7, "FI") + [person_rows(7, "F")[0]]
    with pytest.raises(DuplicateKey) as e:
        make_panel(rows)
    assert (e.value.person_id, e.value.wave_year) == (7, 2006)


def test_rows_are_sorted_with_entry_year():
    rows = person_rows(2, "FI", first_year=2008) + person_rows(1, "IO")[::-1]
    ds = make_panel(rows)
    assert list(ds.frame["person_id"]) == [1, 1, 2, 2]
    assert list(ds.frame["year"]) == [2006, 2007, 2008, 2009]
    assert list(ds.frame["entry_year"]) == [2006, 2006, 2008, 2008]
    assert ds.n_persons == 2


@pytest.fixture
def selection_panel():
    rows = person_rows(1, "FIF")
    rows += person_rows(2, "FF", age=[70, 71])
    rows += person_rows(3, ["F", None, "I"])
    rows += person_rows(4, "IIO", log_consumption=[3.0, None, 3.2])
    return make_panel(rows)


def test_selection_counts(selection_panel):
    ds = apply_selection_rules(selection_panel, required=REQUIRED)
    assert tuple(ds.exclusions) == SELECTION_STEPS
    assert ds.exclusions == {
        "age_range": 2,
        "missing_status_t": 1,
        "missing_status_t1": 4,
        "missing_covariates": 1,
        "single_observation": 1,
    }
    origins = ds.origins
    assert list(origins["person_id"]) == [1, 1]
    assert list(origins["next_state"]) == ["I", "F"]
    # the successor of the last origin is kept for WRS means
    assert ds.n_rows == 3


def test_selection_needs_required_columns(selection_panel):
    with pytest.raises(MissingColumn):
        apply_selection_rules(selection_panel, required=("no_such_column",))


def test_exit_outcome():
    rows = person_rows(1, "FIF") + person_rows(2, "FFI", first_year=2008)
    ds = make_panel(rows)
    without = apply_selection_rules(ds, required=REQUIRED)
    assert without.origins["person_id"].tolist() == [1, 1, 2, 2]
    with_exit = apply_selection_rules(ds, required=REQUIRED, exit_outcome=True)
    first = with_exit.origins.loc[with_exit.origins["person_id"] == 1]
    assert first["next_state"].tolist() == ["I", "F", "X"]
    assert first["is_exit"].tolist() == [False, False, True]


def test_design_needs_selection(selection_panel):
    with pytest.raises(DataError):
        build_design(selection_panel, simulation_spec("wrs"))


def test_wrs_design_columns(wrs_design):
    assert wrs_design.columns == (
        "const", "lag_I", "lag_O", "cma", "lag_I*cma", "lag_O*cma",
        "log_consumption", "married", "female",
        "init_I", "init_O", "mean_log_consumption", "init_log_consumption",
    )
    assert wrs_design.outcomes == ("F", "I", "O")
    assert wrs_design.base == 1
    assert wrs_design.manifest["omitted_levels"]["lagged_state"] == "F"
    assert_array_equal(wrs_design.column("lag_O*cma"), wrs_design.column("lag_O") * wrs_design.column("cma"))


def test_design_groups_persons(wrs_design):
    person = wrs_design.person
    assert np.all(np.diff(person) >= 0)
    assert wrs_design.starts[0] == 0
    assert len(wrs_design.starts) == wrs_design.n_persons
    init = wrs_design.column("init_I")
    for start, stop in zip(wrs_design.starts, np.r_[wrs_design.starts[1:], wrs_design.n_records]):
        assert np.ptp(init[start:stop]) == 0


def test_design_is_deterministic(simulated, wrs_spec):
    ds, _ = simulated
    a = build_design(apply_selection_rules(ds, required=wrs_spec.required_columns()), wrs_spec)
    b = build_design(apply_selection_rules(ds, required=wrs_spec.required_columns()), wrs_spec)
    assert a.manifest["content_sha256"] == b.manifest["content_sha256"]
    assert not a.X.flags.writeable


def test_heckman_design(simulated):
    spec = simulation_spec("heckman")
    ds, _ = simulated
    design = build_design(apply_selection_rules(ds, required=spec.required_columns()), spec)
    assert design.z_columns == (
        "const", "init_log_consumption", "female",
        "iv_rel_earn_17", "iv_govt_share", "iv_informal_share", "iv_soe_closed",
    )
    assert design.Z.shape == (design.n_persons, len(design.z_columns))
    assert design.y_init.shape == (design.n_persons,)
    assert not any(c.startswith(("init_", "mean_")) for c in design.columns)


def test_disaggregated_lags(simulated):
    spec = simulation_spec("exogenous", scheme="disaggregated", interactions=False)
    ds, _ = simulated
    design = build_design(apply_selection_rules(ds, required=spec.required_columns()), spec)
    assert design.columns[:7] == ("const", "lag_UE", "lag_SE", "lag_PP", "lag_IEA", "lag_UNK", "lag_O")
    assert design.outcomes == ("F", "I", "O")


def test_write_panel_reloads(simulated, tmp_path):
    ds, _ = simulated
    path = write_panel(ds, tmp_path / "panel.csv")
    again = load_panel(path)
    assert again.n_rows == ds.n_rows
    assert again.frame["state"].tolist() == ds.frame["state"].tolist()
    assert "household_id" in again.frame.columns


def _household(changes=None):
    """Three members of one household over three waves."""
    members = [
        (1, dict(female=0, age=[50, 51, 52], earnings=100.0)),
        (2, dict(female=1, age=[55, 56, 57], earnings=300.0)),
        (3, dict(female=0, age=[35, 36, 37], earnings=200.0)),
    ]
    rows = []
    for pid, values in members:
        rows += person_rows(pid, "FFF", household_id="h1", **{**values, **(changes or {}).get(pid, {})})
    return make_panel(rows, extra=("household_id", "earnings"))


def _heads(ds, **changes):
    spec = loan_spec(**changes)
    design = build_design(apply_selection_rules(ds, required=spec.required_columns()), spec)
    return design.frame.sort_values("year")["person_id"].tolist()


def test_head_rules_pick_one_member_per_household_year():
    ds = _household()
    assert _heads(ds, head_rule="oldest_male") == [1, 1]
    assert _heads(ds, head_rule="highest_earner") == [2, 2]
    random = _heads(ds, head_rule="random", head_seed=4)
    assert len(random) == 2 and set(random) <= {1, 2, 3}
    assert _heads(ds, head_rule="random", head_seed=4) == random


def test_head_rules_respect_the_age_range():
    ds = _household()
    # only person 3 is young enough to head the household
    assert _heads(ds, head_rule="oldest_male", head_age_range=(20, 49)) == [3, 3]
    assert _heads(ds, head_rule="highest_earner", head_age_range=(20, 49)) == [3, 3]


def test_head_rules_without_men_or_earnings():
    ds = _household({1: dict(female=1), 3: dict(female=1)})
    assert _heads(ds, head_rule="oldest_male") == [2, 2]
    rows = person_rows(1, "FFF", household_id="h1")
    with pytest.raises(MissingColumn):
        _heads(make_panel(rows, extra=("household_id",)), head_rule="highest_earner")
    with pytest.raises(MissingColumn):
        _heads(make_panel(person_rows(1, "FFF")), head_rule="random")


def test_loan_design_clusters_by_household(simulated):
    spec = loan_spec()
    design = build_design(apply_selection_rules(simulated[0], required=spec.required_columns()), spec)
    assert design.manifest["model"] == "loan"
    assert design.outcomes == ("0", "1")
    assert design.frame.groupby(["household_id", "year"]).size().max() == 1
    assert (design.frame["loan_intent"] == 0).all()
    assert np.unique(design.cluster).size == design.frame["household_id"].nunique()
