"""Tests for the synthetic panel generator and the Monte-Carlo experiments."""
import json

import pandas as pd
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from dynmlogit.errors import ConfigInvalid
from dynmlogit.estimator import ParameterLayout
from dynmlogit.simulate import (
    GroundTruth,
    generate_panel,
    heckman_wrs_experiment,
    initial_conditions_experiment,
    recovery_experiment,
    simulation_spec,
    write_truth,
)
from dynmlogit.specs import DgpConfig, FitOptions, InitialLaw


def test_same_seed_same_panel():
    cfg = DgpConfig(seed=5, persons=60, waves=4)
    a, _ = generate_panel(cfg)
    b, _ = generate_panel(cfg)
    c, _ = generate_panel(cfg, threads=3)
    pd.testing.assert_frame_equal(a.frame, b.frame)
    pd.testing.assert_frame_equal(a.frame, c.frame)


def test_different_seed_different_panel():
    a, _ = generate_panel(DgpConfig(seed=5, persons=60, waves=4))
    b, _ = generate_panel(DgpConfig(seed=6, persons=60, waves=4))
    assert not a.frame["state"].equals(b.frame["state"])


def test_panel_shape(simulated, dgp):
    ds, _ = simulated
    assert ds.n_persons == dgp.persons
    assert ds.n_rows == dgp.persons * dgp.waves
    assert set(ds.frame["state"]) <= {"F", "I", "O"}
    informal = ds.frame["state"] == "I"
    assert ds.frame.loc[informal, "informal_subtype"].notna().all()
    assert ds.frame.loc[~informal, "informal_subtype"].isna().all()
    first = ds.frame.groupby("person_id").head(1)
    assert first["rel_earn_17"].notna().all()
    assert ds.frame.loc[~ds.frame.index.isin(first.index), "rel_earn_17"].isna().all()


def test_attrition_after_two_waves():
    ds, _ = generate_panel(DgpConfig(seed=1, persons=50, waves=6, attrition=(0.0, 1.0)))
    assert (ds.frame.groupby("person_id").size() == 2).all()


def test_late_entry():
    ds, _ = generate_panel(DgpConfig(seed=1, persons=40, waves=5, entry=(0.0, 0.0, 1.0)))
    assert (ds.frame["entry_year"] == 2008).all()
    assert (ds.frame.groupby("person_id").size() == 3).all()


def _flat(**changes):
    return DgpConfig(
        seed=9,
        persons=2000,
        waves=3,
        coefficients={},
        cholesky=((0.0, 0.0), (0.0, 0.0)),
        initial=InitialLaw(intercepts=(0.0, 0.0)),
        loans=None,
        **changes,
    )


def test_zero_index_draws_are_uniform():
    ds, _ = generate_panel(_flat())
    shares = ds.frame["state"].value_counts(normalize=True)
    assert_allclose(shares.reindex(["F", "I", "O"]), 1 / 3, atol=0.03)
    assert "loan_type" not in ds.frame.columns


def test_gumbel_and_categorical_samplers_agree():
    cfg = DgpConfig(seed=4, persons=1500, waves=3, loans=None)
    a, _ = generate_panel(cfg, sampler="categorical")
    b, _ = generate_panel(cfg.replace(seed=40), sampler="gumbel")
    counts = pd.DataFrame({
        "categorical": a.frame["state"].value_counts(),
        "gumbel": b.frame["state"].value_counts(),
    }).fillna(0)
    assert stats.chi2_contingency(counts.to_numpy()).pvalue > 0.001


def test_unknown_sampler():
    with pytest.raises(ConfigInvalid):
        generate_panel(DgpConfig(seed=1, persons=5), sampler="inverse")


def test_unknown_instrument():
    cfg = DgpConfig(seed=1, persons=5, initial=InitialLaw(instruments={"rainfall": (0.1, 0.1)}))
    with pytest.raises(ConfigInvalid):
        generate_panel(cfg)


def test_invalid_config():
    with pytest.raises(ValueError):
        DgpConfig(seed=1, cholesky=((0.8, 0.1), (0.3, 0.7)))
    with pytest.raises(ValueError):
        DgpConfig(seed=1, coefficients={"const": (1.0,)})


def test_truth_vector(wrs_spec, wrs_design, simulated):
    _, truth = simulated
    layout = ParameterLayout.for_design(wrs_spec, wrs_design)
    vec = dict(zip(layout.names, truth.vector(layout)))
    assert vec["F:lag_I"] == -1.9
    assert vec["O:lag_O*cma"] == 0.1
    assert vec["O:init_O"] == 0.5
    assert vec["chol[O,F]"] == 0.3
    assert vec["chol[O,O]"] == 0.7


def test_truth_for_heckman_names():
    cfg = DgpConfig(seed=1, initial=InitialLaw(mode="correlated", mixing=(0.8, 0.5),
                                               instruments={"soe_closed": (0.6, -0.2)}))
    truth = GroundTruth(cfg)
    assert truth.value("init:F:const") == 1.2
    assert truth.value("init:O:iv_soe_closed") == -0.2
    assert truth.value("init:F:female") == 0.0
    assert truth.value("rho:O") == 0.5
    assert truth.value("1:lag_O") == -0.443
    with pytest.raises(ConfigInvalid):
        truth.value("sigma")


def test_write_truth(simulated, tmp_path):
    _, truth = simulated
    doc = json.loads(write_truth(truth, tmp_path / "truth.json").read_text())
    assert doc["base"] == "I"
    assert_allclose(doc["covariance"], [[0.64, 0.24], [0.24, 0.58]])


def test_simulation_spec_modes():
    assert simulation_spec("pooled").heterogeneity == "none"
    heckman = simulation_spec("heckman")
    assert heckman.uses_heckman and heckman.instruments
    assert simulation_spec("wrs", quadrature_nodes=3).quadrature_nodes == 3


def test_overrides_are_validated():
    with pytest.raises(ConfigInvalid):
        simulation_spec("wrs", time_means=())
    with pytest.raises(ConfigInvalid):
        simulation_spec("heckman", exit_outcome=True)
    with pytest.raises(ConfigInvalid):
        simulation_spec("wrs", quadrature_nodes=0)
    with pytest.raises(ConfigInvalid):
        simulation_spec("pooled").replace(heterogenity="shared")


INTERACTIONS = ["F:lag_I*cma", "F:lag_O*cma", "O:lag_I*cma", "O:lag_O*cma"]


@pytest.mark.slow
def test_recovery_experiment():
    cfg = DgpConfig(seed=300, persons=1000, waves=6)
    table = recovery_experiment(cfg, simulation_spec("wrs", quadrature_nodes=7), reps=20)
    assert table.attrs["replications"] + table.attrs["failed"] == 20
    assert table.attrs["replications"] >= 18
    assert list(table.columns) == ["parameter", "truth", "mean_estimate", "bias", "sd", "coverage"]
    low = table.loc[table["coverage"] < 0.9, "parameter"].tolist()
    assert low == []
    interactions = table.set_index("parameter").loc[INTERACTIONS]
    assert (interactions["bias"].abs() <= 0.05).all(), interactions["bias"].to_dict()


@pytest.mark.slow
def test_initial_conditions_experiment():
    cfg = DgpConfig(seed=700, persons=1000, waves=6,
                    initial=InitialLaw(mode="correlated", mixing=(1.0, 1.0)),
                    coefficients={k: v for k, v in DgpConfig(seed=0).coefficients.items()
                                  if not k.startswith(("init_", "mean_"))})
    table = initial_conditions_experiment(cfg, reps=20, options=FitOptions(check_quadrature=False, strict=False))
    assert list(table.columns) == ["seed", "bias_exogenous", "bias_wrs", "wrs_better"]
    assert len(table) >= 18
    assert (table[["bias_exogenous", "bias_wrs"]] >= 0).all().all()
    assert table["wrs_better"].mean() >= 0.8


@pytest.mark.slow
def test_heckman_wrs_experiment():
    cfg = DgpConfig(seed=900, persons=1000, waves=6,
                    initial=InitialLaw(mode="correlated", mixing=(0.8, 0.5),
                                       instruments={"rel_earn_17": (0.5, -0.3), "soe_closed": (-0.4, 0.3)}))
    table = heckman_wrs_experiment(cfg, reps=10, options=FitOptions(check_quadrature=False, strict=False))
    assert set(table["parameter"]) == set(INTERACTIONS)
    assert table["seed"].nunique() >= 9
    assert (table["pooled_se"] > 0).all()
    assert table["agree"].mean() >= 0.9
