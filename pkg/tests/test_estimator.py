"""Tests for the likelihood, its score, the sandwich and the fitter."""
import dataclasses

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_almost_equal

from conftest import loan_spec
from dynmlogit.effects import transition_probabilities
from dynmlogit.errors import CollinearDesign, ConfigInvalid, DimensionMismatch, SeparationDetected, SupportInvalid
from dynmlogit.estimator import (
    QUADRATURE_TOLERANCE,
    FitResult,
    ParameterLayout,
    fit,
    fit_loan_model,
    gradient,
    heterogeneity_moments,
    log_likelihood,
    numeric_jacobian,
    quadrature_check,
    relative_risk_ratios,
    render_rrr_table,
    sandwich,
)
from dynmlogit.panel import apply_selection_rules, build_design
from dynmlogit.quadrature import discrete_rule, gauss_hermite
from dynmlogit.simulate import brute_force_likelihood, generate_panel, simulation_spec
from dynmlogit.specs import DgpConfig, FitOptions


def _theta(layout, seed=0, scale=0.2):
    theta = np.random.default_rng(seed).normal(0.0, scale, layout.size)
    for k, name in enumerate(layout.names):
        if name in ("chol[F,F]", "chol[O,O]", "sigma"):
            theta[k] = 0.7
    return theta


@pytest.fixture(scope="module")
def tiny_design(wrs_design):
    keep = np.zeros(wrs_design.n_persons, dtype=bool)
    keep[:3] = True
    return wrs_design.subset_persons(keep)


@pytest.fixture(scope="module")
def pooled_case(simulated):
    spec = simulation_spec("pooled")
    design = build_design(apply_selection_rules(simulated[0], required=spec.required_columns()), spec)
    return spec, design, fit(spec, design, FitOptions(check_quadrature=False))


@pytest.fixture(scope="module")
def heckman_case(simulated):
    spec = simulation_spec("heckman", quadrature_nodes=4)
    design = build_design(apply_selection_rules(simulated[0], required=spec.required_columns()), spec)
    keep = np.zeros(design.n_persons, dtype=bool)
    keep[:20] = True
    return spec, design.subset_persons(keep)


def test_gauss_hermite_moments():
    rule = gauss_hermite(7, 2)
    assert rule.size == 49
    assert_almost_equal(rule.weights.sum(), 1.0)
    assert_allclose(rule.weights @ rule.nodes, 0.0, atol=1e-12)
    assert_allclose(rule.nodes.T @ np.diag(rule.weights) @ rule.nodes, np.eye(2), atol=1e-12)


def test_discrete_rule_weights():
    with pytest.raises(SupportInvalid):
        discrete_rule([[0.0, 0.0], [1.0, 1.0]], [0.5, 0.6])


def test_layout_names(wrs_spec, wrs_design):
    layout = ParameterLayout.for_design(wrs_spec, wrs_design)
    assert layout.size == 2 * len(wrs_design.columns) + 3
    assert layout.names[0] == "F:const"
    assert layout.names[len(wrs_design.columns)] == "O:const"
    assert layout.names[-3:] == ("chol[F,F]", "chol[O,F]", "chol[O,O]")
    with pytest.raises(DimensionMismatch):
        layout.unpack(np.zeros(layout.size + 1))


def test_score_matches_finite_differences(wrs_spec, small_design):
    layout = ParameterLayout.for_design(wrs_spec, small_design)
    theta = _theta(layout)
    analytic = gradient(wrs_spec, theta, small_design)
    numeric = numeric_jacobian(lambda t: log_likelihood(wrs_spec, t, small_design)[0], theta)[0]
    assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-5)


def test_heckman_score_matches_finite_differences(heckman_case):
    spec, design = heckman_case
    layout = ParameterLayout.for_design(spec, design)
    theta = _theta(layout, seed=1)
    analytic = gradient(spec, theta, design)
    numeric = numeric_jacobian(lambda t: log_likelihood(spec, t, design)[0], theta)[0]
    assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-5)


def test_threads_do_not_change_the_likelihood(wrs_spec, wrs_design):
    theta = _theta(ParameterLayout.for_design(wrs_spec, wrs_design))
    serial, per_person = log_likelihood(wrs_spec, theta, wrs_design)
    threaded, per_person_threaded = log_likelihood(wrs_spec, theta, wrs_design, threads=4)
    assert_almost_equal(serial, threaded, decimal=8)
    assert_allclose(per_person, per_person_threaded)


@pytest.mark.parametrize("seed", range(10))
def test_zero_variance_equals_pooled(wrs_spec, small_design, seed):
    pooled = wrs_spec.replace(heterogeneity="none")
    layout = ParameterLayout.for_design(wrs_spec, small_design)
    theta = _theta(layout, seed=seed)
    theta[layout.slices["het"]] = 0.0
    beta = theta[layout.slices["B"]]
    assert_allclose(
        log_likelihood(wrs_spec, theta, small_design)[0],
        log_likelihood(pooled, beta, small_design)[0],
        rtol=0, atol=1e-10,
    )


@pytest.mark.parametrize("nodes", [1, 3])
def test_quadrature_equals_brute_force(wrs_spec, tiny_design, nodes):
    layout = ParameterLayout.for_design(wrs_spec, tiny_design)
    theta = _theta(layout, seed=2)
    rule = gauss_hermite(nodes, layout.dim)
    support = rule.nodes @ layout.cholesky(theta).T
    expected = brute_force_likelihood(tiny_design, layout, theta, support, rule.weights)
    total, _ = log_likelihood(wrs_spec, theta, tiny_design, rule=rule)
    assert_allclose(total, expected, rtol=0, atol=1e-12)


def test_two_point_mixture_equals_brute_force(wrs_spec, tiny_design):
    assert tiny_design.n_persons == 3
    layout = ParameterLayout.for_design(wrs_spec, tiny_design)
    theta = _theta(layout, seed=5)
    rule = discrete_rule([[0.8, -0.3], [-1.2, 0.45]], [0.6, 0.4])
    support = rule.nodes @ layout.cholesky(theta).T
    expected = brute_force_likelihood(tiny_design, layout, theta, support, rule.weights)
    total, _ = log_likelihood(wrs_spec, theta, tiny_design, rule=rule)
    assert_allclose(total, expected, rtol=0, atol=1e-12)


def test_heckman_quadrature_equals_brute_force(heckman_case):
    spec, design = heckman_case
    layout = ParameterLayout.for_design(spec, design)
    theta = _theta(layout, seed=3)
    rule = gauss_hermite(3, layout.dim)
    support = rule.nodes @ layout.cholesky(theta).T
    expected = brute_force_likelihood(design, layout, theta, support, rule.weights)
    total, _ = log_likelihood(spec, theta, design, rule=rule)
    assert_almost_equal(total, expected, decimal=8)


def test_brute_force_support_dimension(wrs_spec, small_design):
    layout = ParameterLayout.for_design(wrs_spec, small_design)
    with pytest.raises(SupportInvalid):
        brute_force_likelihood(small_design, layout, _theta(layout), [[0.0], [1.0]], [0.5, 0.5])


def test_collinear_design(wrs_spec, wrs_design):
    X = np.column_stack([wrs_design.X, 2.0 * wrs_design.column("married")])
    design = dataclasses.replace(wrs_design, X=X, columns=wrs_design.columns + ("married_twice",))
    with pytest.raises(CollinearDesign) as e:
        fit(wrs_spec, design, FitOptions(check_quadrature=False))
    assert len(e.value.columns) == 1


def test_start_vector_length(wrs_spec, wrs_design):
    with pytest.raises(DimensionMismatch):
        fit(wrs_spec, wrs_design, FitOptions(start=(0.0, 0.0)))


def test_loan_fitter_rejects_employment_spec(wrs_spec, small_design):
    with pytest.raises(ConfigInvalid):
        fit_loan_model(wrs_spec, small_design)


def test_sandwich_sums_scores_by_cluster():
    rng = np.random.default_rng(0)
    scores = rng.normal(size=(6, 2))
    H = -np.eye(2)
    cov, used_pinv = sandwich(H, scores, np.arange(6))
    assert not used_pinv
    assert_allclose(cov, scores.T @ scores)
    cluster = np.array([0, 0, 1, 1, 2, 2])
    summed = scores.reshape(3, 2, 2).sum(axis=1)
    cov, _ = sandwich(H, scores, cluster)
    assert_allclose(cov, summed.T @ summed)
    corrected, _ = sandwich(H, scores, cluster, correction=True)
    assert_allclose(corrected, cov * 3 / 2)


def test_sandwich_singular_information():
    with pytest.warns(UserWarning):
        _, used_pinv = sandwich(np.zeros((2, 2)), np.ones((3, 2)), np.arange(3))
    assert used_pinv


def test_fit_converges(wrs_fit, wrs_design):
    assert wrs_fit.converged
    assert wrs_fit.grad_norm <= 1e-6
    assert wrs_fit.per_person.shape == (wrs_design.n_persons,)
    assert_almost_equal(wrs_fit.per_person.sum(), wrs_fit.loglik)
    assert np.all(np.diag(wrs_fit.cov) > 0)
    L = wrs_fit.layout.cholesky(wrs_fit.params)
    assert np.all(np.diag(L) >= 0)


def test_fit_beats_the_warm_start(wrs_fit, wrs_spec, wrs_design):
    zero = np.zeros(wrs_fit.layout.size)
    assert wrs_fit.loglik > log_likelihood(wrs_spec, zero, wrs_design)[0]


def test_fit_json_roundtrip(wrs_fit):
    again = FitResult.from_json(wrs_fit.to_json())
    assert again.names == wrs_fit.names
    assert_allclose(again.params, wrs_fit.params)
    assert_allclose(again.cov, wrs_fit.cov)
    assert again.spec.digest() == wrs_fit.spec.digest()


def test_rrr_table(wrs_fit):
    rrr = relative_risk_ratios(wrs_fit)
    assert len(rrr) == 2 * wrs_fit.layout.P
    assert_allclose(rrr["rrr"], np.exp(rrr["coef"]))
    assert (rrr["ci_low"] < rrr["rrr"]).all() and (rrr["rrr"] < rrr["ci_high"]).all()
    text = render_rrr_table(wrs_fit)
    assert text.splitlines()[0].split() == ["F", "O"]
    assert "Log-likelihood" in text


def test_heterogeneity_moments(wrs_fit):
    out = heterogeneity_moments(wrs_fit)
    assert out["moment"].tolist() == ["Var(eta_F)", "Cov(eta_F,eta_O)", "Var(eta_O)"]
    S = wrs_fit.sigma_eta
    assert_allclose(out["value"], [S[0, 0], S[1, 0], S[1, 1]])


def test_separation_is_detected(pooled_case):
    spec, design, _ = pooled_case
    # the extra column is one exactly on the records that move to O
    marker = (design.y == design.outcomes.index("O")).astype(float)
    separated = dataclasses.replace(design, X=np.column_stack([design.X, marker]), columns=design.columns + ("to_O",))
    with pytest.raises(SeparationDetected) as e:
        fit(spec, separated, FitOptions(check_quadrature=False, separation_bound=5.0))
    assert abs(e.value.value) > 5.0
    assert e.value.name in ParameterLayout.for_design(spec, separated).names


def _doubled(design):
    """Every person twice, the copy under a fresh id and cluster."""
    n = design.n_persons
    return dataclasses.replace(
        design,
        X=np.vstack([design.X, design.X]),
        y=np.r_[design.y, design.y],
        person=np.r_[design.person, design.person + n],
        origin=np.r_[design.origin, design.origin],
        person_ids=np.r_[design.person_ids, design.person_ids + design.person_ids.max() + 1],
        cluster=np.r_[design.cluster, design.cluster + design.cluster.max() + 1],
        frame=pd.concat([design.frame, design.frame], ignore_index=True),
    )


def test_doubling_persons_halves_the_covariance(wrs_fit, wrs_spec, wrs_design):
    options = FitOptions(start=tuple(map(float, wrs_fit.params)), check_quadrature=False, strict=False)
    once = fit(wrs_spec, wrs_design, options)
    twice = fit(wrs_spec, _doubled(wrs_design), options)
    assert twice.diagnostics["n_clusters"] == 2 * once.diagnostics["n_clusters"]
    assert_almost_equal(twice.loglik, 2 * once.loglik, decimal=6)
    assert_allclose(twice.params, once.params, atol=1e-6)
    assert_allclose(twice.cov, once.cov / 2, rtol=1e-4, atol=1e-12)


def test_base_relabel_leaves_the_fit_unchanged(pooled_case, simulated):
    spec, design, result = pooled_case
    relabeled_spec = spec.replace(base_outcome="F")
    relabeled = build_design(apply_selection_rules(simulated[0], required=spec.required_columns()), relabeled_spec)
    assert relabeled.base == 0
    assert ParameterLayout.for_design(relabeled_spec, relabeled).names[0] == "I:const"

    # F and O against I become I and O against F
    P = len(design.columns)
    theta = np.random.default_rng(4).normal(0.0, 0.3, 2 * P)
    to_f, to_o = theta[:P], theta[P:]
    assert_allclose(
        log_likelihood(spec, theta, design)[0],
        log_likelihood(relabeled_spec, np.r_[-to_f, to_o - to_f], relabeled)[0],
        rtol=0, atol=1e-9,
    )

    refit = fit(relabeled_spec, relabeled, FitOptions(check_quadrature=False))
    assert abs(refit.loglik - result.loglik) <= 1e-6
    assert_allclose(transition_probabilities(refit, relabeled), transition_probabilities(result, design), atol=1e-6)


def test_zero_variance_at_the_pooled_optimum(pooled_case):
    spec, design, result = pooled_case
    exogenous = simulation_spec("exogenous", quadrature_nodes=5)
    layout = ParameterLayout.for_design(exogenous, design)
    theta = np.zeros(layout.size)
    theta[layout.slices["B"]] = result.params
    assert_allclose(log_likelihood(exogenous, theta, design)[0], result.loglik, rtol=0, atol=1e-8)
    # the pooled optimum is a stationary point of the random-effects likelihood
    assert_allclose(gradient(exogenous, theta, design), 0.0, atol=1e-5)


def test_quadrature_check(wrs_fit, wrs_spec, wrs_design):
    checked = quadrature_check(wrs_fit, wrs_design, nodes=15)
    expected = log_likelihood(wrs_spec, wrs_fit.params, wrs_design, nodes=15)[0] - wrs_fit.loglik
    assert checked.diagnostics["quadrature_check_nodes"] == 15
    assert_allclose(checked.diagnostics["quadrature_delta"], expected, rtol=0, atol=1e-9)
    assert checked.diagnostics["quadrature_stable"] == (abs(expected) <= QUADRATURE_TOLERANCE)
    assert_allclose(checked.params, wrs_fit.params)


def test_quadrature_check_without_random_effects(pooled_case):
    _, design, result = pooled_case
    checked = quadrature_check(result, design)
    assert checked.diagnostics["quadrature_delta"] == 0.0
    assert checked.diagnostics["quadrature_stable"]


@pytest.fixture(scope="module")
def household_panel():
    ds, _ = generate_panel(DgpConfig(seed=21, persons=1000, waves=4, persons_per_household=2))
    return ds


def _loan_design(ds, spec):
    return build_design(apply_selection_rules(ds, required=spec.required_columns()), spec)


@pytest.mark.parametrize("rule", ["random", "oldest_male", "highest_earner"])
def test_loan_model_under_each_head_rule(household_panel, rule):
    spec = loan_spec(head_rule=rule)
    design = _loan_design(household_panel, spec)
    assert design.frame.groupby(["household_id", "year"]).size().max() == 1
    result = fit_loan_model(spec, design, FitOptions(check_quadrature=False))
    assert result.converged
    assert result.layout.dim == 1
    assert result.layout.size == len(design.columns) + 1
    assert result.names[0] == "1:const"
    assert result.diagnostics["n_clusters"] == design.frame["household_id"].nunique()
    assert np.all(np.isfinite(result.se))


def test_loan_type_shares_one_factor(household_panel):
    spec = loan_spec(loan_outcome="type", heterogeneity="shared", head_rule="highest_earner")
    design = _loan_design(household_panel, spec)
    assert design.outcomes == ("N", "MA", "C")
    result = fit_loan_model(spec, design, FitOptions(check_quadrature=False))
    assert result.converged
    assert result.layout.dim == 1
    assert result.names.count("sigma") == 1
    assert result.layout.size == 2 * len(design.columns) + 1
    assert result.params[result.layout.index("sigma")] >= 0


def test_loan_fitter_needs_a_loan_design(wrs_design):
    with pytest.raises(DimensionMismatch):
        fit_loan_model(loan_spec(), wrs_design)


@pytest.mark.slow
def test_loan_coefficients_follow_the_generator():
    ds, truth = generate_panel(DgpConfig(seed=31, persons=4000, waves=6, persons_per_household=2))
    spec = loan_spec()
    result = fit_loan_model(spec, _loan_design(ds, spec), FitOptions(check_quadrature=False))
    lag_o, cma = result.layout.index("1:lag_O"), result.layout.index("1:cma")
    assert result.params[lag_o] < 0
    assert result.params[cma] > 0
    for k in (lag_o, cma):
        assert abs(result.params[k] - truth.value(result.names[k])) < 4 * result.se[k], result.names[k]


@pytest.mark.slow
def test_coefficients_are_stable_at_fifteen_nodes():
    spec = simulation_spec("wrs")
    ds, _ = generate_panel(DgpConfig(seed=300, persons=1000, waves=6))
    design = build_design(apply_selection_rules(ds, required=spec.required_columns()), spec)
    coarse = fit(spec, design, FitOptions(check_quadrature=False))
    fine = fit(spec.replace(quadrature_nodes=15), design,
               FitOptions(start=tuple(map(float, coarse.params)), check_quadrature=False))
    assert abs(fine.loglik - coarse.loglik) <= 1e-4
    B = coarse.layout.slices["B"]
    assert np.max(np.abs(fine.params[B] - coarse.params[B])) <= 1e-3


@pytest.mark.slow
def test_recovers_state_dependence():
    spec = simulation_spec("wrs")
    ds, truth = generate_panel(DgpConfig(seed=2024, persons=1500, waves=6))
    design = build_design(apply_selection_rules(ds, required=spec.required_columns()), spec)
    result = fit(spec, design, FitOptions(check_quadrature=False))
    expected = truth.vector(result.layout)
    names = ("F:lag_I", "F:lag_O", "O:lag_I", "O:lag_O", "F:female", "O:female",
             "F:lag_I*cma", "F:lag_O*cma", "O:lag_I*cma", "O:lag_O*cma")
    for name in names:
        k = result.layout.index(name)
        assert abs(result.params[k] - expected[k]) < 4 * result.se[k], name
