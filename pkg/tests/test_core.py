import numpy as np
import pytest

from oars_bench.core import (NormKind, OutcomeKind, PerturbationBudget, QueryOutcome, budget_distance, derive_seed,
                             distance, make_sample, project, rng_stream, unit_sphere)


def test_norm_parse_aliases():
    assert NormKind.parse("L2") is NormKind.L2
    assert NormKind.parse("inf") is NormKind.LINF
    with pytest.raises(ValueError):
        NormKind.parse("l1")


def test_make_sample_rejects_out_of_range():
    with pytest.raises(ValueError):
        make_sample([0.5, 1.2])
    with pytest.raises(ValueError):
        make_sample([0.1, np.nan])
    assert make_sample(np.full(4, 0.5), (2, 2)).shape == (2, 2)
    with pytest.raises(ValueError):
        make_sample(np.zeros(5), (2, 2))


def test_distance_normalized_l2():
    a, b = np.zeros(16), np.full(16, 0.25)
    # ||b - a|| = 0.25 * 4 = 1, normalized by sqrt(16) = 4
    assert distance(a, b) == pytest.approx(1.0)
    assert distance(a, b, normalized=True) == pytest.approx(0.25)
    assert distance(a, b, "linf") == pytest.approx(0.25)


def test_budget_radius_and_contains():
    budget = PerturbationBudget(NormKind.L2, 0.05, normalized=True)
    assert budget.radius(256) == pytest.approx(0.8)
    c = np.full(256, 0.5)
    assert budget.contains(c + 0.05, c)
    assert not budget.contains(c + 0.051, c)
    with pytest.raises(ValueError):
        PerturbationBudget(NormKind.L2, -1.0)


def test_project_linf_clips_to_ball_and_box():
    c = np.array([0.0, 0.5, 0.98])
    budget = PerturbationBudget(NormKind.LINF, 0.05)
    out = project(np.array([-0.3, 0.9, 1.5]), c, budget)
    np.testing.assert_allclose(out, [0.0, 0.55, 1.0])


def test_project_l2_rescales_only_outside():
    c = np.full(4, 0.5)
    budget = PerturbationBudget(NormKind.L2, 0.1)
    inside = c + 0.01
    np.testing.assert_array_equal(project(inside, c, budget), inside)
    out = project(c + 0.2, c, budget)
    assert distance(out, c) == pytest.approx(0.1)


def test_outcome_kinds():
    soft = QueryOutcome.soft([0.2, 0.8])
    assert soft.label == 1 and soft.answered
    assert QueryOutcome.rejected().actioned
    assert QueryOutcome.banned().kind is OutcomeKind.BANNED
    with pytest.raises(ValueError):
        QueryOutcome.soft([0.5, 0.6])


def test_rng_stream_is_reproducible():
    a = rng_stream(5).standard_normal(3)
    b = rng_stream(5).standard_normal(3)
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        rng_stream(None)
    x = rng_stream(derive_seed(1, 2, 3)).random()
    y = rng_stream(derive_seed(1, 2, 4)).random()
    assert x != y


def test_unit_sphere_norms(rng):
    u = unit_sphere(rng, (4, 4, 1), 10)
    np.testing.assert_allclose(np.linalg.norm(u.reshape(10, -1), axis=1), 1.0)


def test_budget_distance_uses_budget_norm():
    a, b = np.zeros(4), np.array([0.1, 0, 0, 0])
    assert budget_distance(a, b, PerturbationBudget(NormKind.LINF, 1)) == pytest.approx(0.1)
    assert budget_distance(a, b, PerturbationBudget(NormKind.L2, 1, True)) == pytest.approx(0.05)
