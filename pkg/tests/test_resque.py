from __future__ import annotations

import random

import numpy as np
import pytest

from eventcrs.resque import (
    CONSTRUCTS,
    FIELD_BY_CONSTRUCT,
    Incomplete,
    OutOfRange,
    PathEquation,
    PathModel,
    REFERENCE_EDGE_B,
    REFERENCE_EDGE_BETA,
    SIGNIFICANT_PATHS,
    SingularDesign,
    calibrate_simulation,
    default_path_model,
    descriptive_stats,
    discretize_likert,
    fit_path_arrays,
    fit_path_model,
    responses_to_csv,
    simulate_continuous,
    simulate_responses,
    validate_response,
)

from .conftest import load_fixture_jsonl


def valid_raw(**overrides):
    raw = {FIELD_BY_CONSTRUCT[c]: 3 for c in CONSTRUCTS}
    raw["success"] = True
    raw["perceived_effort"] = 2
    raw.update(overrides)
    return raw


# --- validation ----------------------------------------------------------------


def test_mid_scale_response_accepted():
    response = validate_response(valid_raw())
    assert response.success
    assert response.perceived_effort == 2
    assert all(response.item(c) == 3 for c in CONSTRUCTS)


def test_missing_future_use_named():
    raw = valid_raw()
    del raw["future_use"]
    with pytest.raises(Incomplete) as excinfo:
        validate_response(raw)
    assert "FutureUse" in excinfo.value.missing


def test_success_with_problems_text_rejected():
    with pytest.raises(OutOfRange):
        validate_response(valid_raw(general_problems="it broke"))


def test_failure_requires_problems_and_no_effort():
    raw = valid_raw(success=False)
    del raw["perceived_effort"]
    with pytest.raises(Incomplete) as excinfo:
        validate_response(raw)
    assert "GeneralProblems" in excinfo.value.missing
    raw["general_problems"] = "slate was empty"
    response = validate_response(raw)
    assert response.general_problems == "slate was empty"
    with pytest.raises(OutOfRange):
        validate_response(valid_raw(success=False, general_problems="x", perceived_effort=2))


def test_out_of_range_item_rejected():
    with pytest.raises(OutOfRange):
        validate_response(valid_raw(consistency=6))
    with pytest.raises(OutOfRange):
        validate_response(valid_raw(consistency=0))
    with pytest.raises(OutOfRange):
        validate_response(valid_raw(consistency="3"))


# --- descriptive statistics --------------------------------------------------------


@pytest.fixture(scope="module")
def survey_83():
    return [validate_response(row) for row in load_fixture_jsonl("survey_83.jsonl")]


def test_fixture_83_descriptives(survey_83):
    stats = descriptive_stats(survey_83)
    assert stats.n == 83
    ra = stats.per_construct["RecommendationAccuracy"]
    assert ra.neutral_or_good == 71
    assert round(ra.neutral_or_good_pct, 1) == 85.5
    assert stats.success_count == 69
    assert round(stats.success_rate_pct, 1) == 83.1


def test_all_fives_degenerate():
    raw = valid_raw(**{FIELD_BY_CONSTRUCT[c]: 5 for c in CONSTRUCTS})
    stats = descriptive_stats([validate_response(raw)])
    for construct in CONSTRUCTS:
        assert stats.per_construct[construct].neutral_or_good_pct == 100.0
        assert stats.per_construct[construct].negative_pct == 0.0


def test_descriptives_require_responses():
    with pytest.raises(ValueError):
        descriptive_stats([])


def test_csv_export_has_all_rows(survey_83):
    csv_text = responses_to_csv(survey_83)
    assert csv_text.count("\n") == 84  # header + 83 rows
    assert "recommendation_accuracy" in csv_text.splitlines()[0]


# --- path model structure ------------------------------------------------------------


def test_default_model_is_dag_with_twelve_edges():
    model = default_path_model()
    assert len(model.edges()) == 12
    order = model.topological_order()
    assert order.index("Control") < order.index("PerceivedUsefulness")
    assert order.index("PerceivedUsefulness") < order.index("OverallSatisfaction")
    assert order.index("OverallSatisfaction") < order.index("FutureUse")


def test_cyclic_model_rejected():
    with pytest.raises(ValueError):
        PathModel(
            equations=(
                PathEquation("A", ("B",)),
                PathEquation("B", ("A",)),
            )
        )


def test_model_json_roundtrip():
    model = default_path_model()
    assert PathModel.from_json(model.to_json()) == model


# --- fitting ----------------------------------------------------------------------


def test_exact_copy_gives_unit_coefficients():
    rng = np.random.default_rng(1)
    satisfaction = rng.normal(3.5, 1.0, size=500)
    data = {"OverallSatisfaction": satisfaction, "FutureUse": satisfaction.copy()}
    model = PathModel(equations=(PathEquation("FutureUse", ("OverallSatisfaction",)),))
    fit = fit_path_arrays(data, model)
    edge = fit.edge("FutureUse", "OverallSatisfaction")
    assert edge.b == pytest.approx(1.0)
    assert edge.beta == pytest.approx(1.0)
    assert edge.p_value == pytest.approx(0.0, abs=1e-12)
    assert fit.equations[0].r_squared == pytest.approx(1.0)


def test_equal_predictors_raise_singular_design():
    rng = np.random.default_rng(2)
    x = rng.normal(size=200)
    data = {"A": x, "B": x.copy(), "Y": rng.normal(size=200)}
    model = PathModel(equations=(PathEquation("Y", ("A", "B")),))
    with pytest.raises(SingularDesign) as excinfo:
        fit_path_arrays(data, model)
    assert set(excinfo.value.pair) == {"A", "B"}


def test_fit_requires_enough_observations():
    data = {"A": np.array([1.0, 2.0]), "Y": np.array([1.0, 2.0])}
    model = PathModel(equations=(PathEquation("Y", ("A",)),))
    with pytest.raises(ValueError):
        fit_path_arrays(data, model)


def test_fit_matches_statsmodels_oracle():
    statsmodels_api = pytest.importorskip("statsmodels.api")
    rng = np.random.default_rng(3)
    n = 300
    data = {
        "A": rng.normal(3, 1, n),
        "B": rng.normal(3, 1.2, n),
    }
    data["Y"] = 0.4 * data["A"] - 0.2 * data["B"] + rng.normal(0, 0.8, n)
    model = PathModel(equations=(PathEquation("Y", ("A", "B")),))
    fit = fit_path_arrays(data, model)

    X = statsmodels_api.add_constant(np.column_stack([data["A"], data["B"]]))
    sm_fit = statsmodels_api.OLS(data["Y"], X).fit()
    for i, predictor in enumerate(("A", "B"), start=1):
        edge = fit.edge("Y", predictor)
        assert edge.b == pytest.approx(sm_fit.params[i])
        assert edge.se == pytest.approx(sm_fit.bse[i])
        assert edge.p_value == pytest.approx(sm_fit.pvalues[i])
    assert fit.equations[0].r_squared == pytest.approx(sm_fit.rsquared)


def test_fit_invariant_to_response_order(survey_83):
    model = default_path_model()
    fit_a = fit_path_model(survey_83, model)
    shuffled = list(survey_83)
    random.Random(5).shuffle(shuffled)
    fit_b = fit_path_model(shuffled, model)
    for dependent, predictor in model.edges():
        assert fit_a.edge(dependent, predictor).b == pytest.approx(
            fit_b.edge(dependent, predictor).b
        )


def test_beta_invariant_to_affine_rescaling():
    rng = np.random.default_rng(7)
    n = 400
    data = {
        "A": rng.normal(3, 1, n),
        "Y": None,
    }
    data["Y"] = 0.5 * data["A"] + rng.normal(0, 1, n)
    model = PathModel(equations=(PathEquation("Y", ("A",)),))
    base = fit_path_arrays(data, model).edge("Y", "A").beta
    rescaled = {"A": 10.0 * data["A"] - 4.0, "Y": data["Y"]}
    assert fit_path_arrays(rescaled, model).edge("Y", "A").beta == pytest.approx(base)


# --- simulation -----------------------------------------------------------------------


def test_noise_free_single_predictor_identity():
    model = PathModel(equations=(PathEquation("Y", ("A",)),))
    from eventcrs.resque import SimulationSpec

    spec = SimulationSpec(
        model=model,
        edge_b={("Y", "A"): 1.0},
        residual_sd={"Y": 0.0},
        exogenous_means={"A": 3.0},
        exogenous_sds={"A": 1.0},
    )
    data = simulate_continuous(spec, 100, seed=1)
    assert np.allclose(data["Y"], data["A"])


def test_same_seed_identical_datasets():
    spec = calibrate_simulation()
    a = simulate_responses(spec, 50, seed=9)
    b = simulate_responses(spec, 50, seed=9)
    assert a == b
    c = simulate_responses(spec, 50, seed=10)
    assert a != c


def test_discretization_clamps_and_rounds_half_up():
    values = np.array([-2.0, 1.4, 1.5, 3.49, 5.2, 4.5])
    assert discretize_likert(values).tolist() == [1, 1, 2, 3, 5, 5]


def test_large_n_recovers_generating_b_pre_discretization():
    spec = calibrate_simulation()
    data = simulate_continuous(spec, 10_000, seed=4)
    fit = fit_path_arrays(data, spec.model)
    for (dependent, predictor), b in REFERENCE_EDGE_B.items():
        assert fit.edge(dependent, predictor).b == pytest.approx(b, abs=0.02)


def test_simulated_responses_are_valid_likert():
    spec = calibrate_simulation()
    for response in simulate_responses(spec, 200, seed=6):
        for construct in CONSTRUCTS:
            assert 1 <= response.item(construct) <= 5


def test_significant_paths_stay_significant_post_discretization():
    spec = calibrate_simulation()
    responses = simulate_responses(spec, 10_000, seed=12)
    fit = fit_path_model(responses, spec.model)
    for dependent, predictor in SIGNIFICANT_PATHS:
        edge = fit.edge(dependent, predictor)
        assert edge.p_value < 0.05
        assert edge.b > 0


def test_calibration_implied_betas_match_reference():
    spec = calibrate_simulation()
    # large-n simulation is the arbiter that the calibration hit its targets
    data = simulate_continuous(spec, 50_000, seed=31)
    fit = fit_path_arrays(data, spec.model)
    for (dependent, predictor), beta in REFERENCE_EDGE_BETA.items():
        assert fit.edge(dependent, predictor).beta == pytest.approx(beta, abs=0.03)
