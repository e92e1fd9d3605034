"""Distance metric identities, matching, error rows, recovery curves."""

import numpy as np
import pytest

from cplearn import (
    CPModel,
    DecompositionConfig,
    MultiviewSpec,
    cp_to_dense,
    decompose,
    dist,
    gen_multiview,
    match_components,
    moment_multiview,
    recovery_curve,
    table_row,
)
from cplearn.evaluation import (
    best_permutation_cost,
    component_square_error,
    pairwise_dist,
    _pair_score,
)


def unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def test_dist_identities():
    rng = np.random.default_rng(0)
    u = rng.standard_normal(5)
    assert dist(u, u) == 0.0
    assert dist(u, -u) == 0.0
    assert dist(3 * u, u) == 0.0
    e = np.eye(3)
    assert dist(e[:, 0], e[:, 1]) == 1.0
    assert dist(np.array([1.0, 1.0]) / np.sqrt(2), e[:2, 0]) == pytest.approx(np.sqrt(0.5))


def test_dist_zero_vector_rejected():
    with pytest.raises(ValueError):
        dist(np.zeros(3), np.ones(3))


def test_dist_symmetry_and_pythagoras():
    rng = np.random.default_rng(1)
    for _ in range(50):
        u, v = rng.standard_normal(6), rng.standard_normal(6)
        assert dist(u, v) == pytest.approx(dist(v, u), abs=1e-12)
        c = (u @ v) / (np.linalg.norm(u) * np.linalg.norm(v))
        assert dist(u, v) ** 2 + c ** 2 == pytest.approx(1.0, abs=1e-12)


def test_dist_sqrt2_bound_on_unit_vectors():
    rng = np.random.default_rng(2)
    for _ in range(200):
        u, v = unit(rng, 7), unit(rng, 7)
        gap = min(np.linalg.norm(u - v), np.linalg.norm(u + v))
        assert gap <= np.sqrt(2) * dist(u, v) + 1e-12


def test_match_exact_permutation():
    rng = np.random.default_rng(3)
    k, d = 5, 8
    F = tuple(np.linalg.qr(rng.standard_normal((d, d)))[0][:, :k] for _ in range(3))
    truth = CPModel(np.full(k, 1.0 / k), F)
    perm = rng.permutation(k)
    est = CPModel(truth.weights[perm], tuple(X[:, perm] for X in F))
    ev = match_components(est, truth, threshold=1e-9)
    assert ev.recovery_rate == 1.0
    assert np.array_equal(np.sort(ev.permutation), np.arange(k))
    assert np.nanmax(ev.truth_dist) <= 1e-9
    for i, j in enumerate(ev.permutation):
        np.testing.assert_array_equal(est.factors[0][:, i], truth.factors[0][:, j])


def test_match_two_mode_sign_flip_invariant():
    rng = np.random.default_rng(4)
    k, d = 4, 6
    F = tuple(rng.standard_normal((d, k)) for _ in range(3))
    F = tuple(X / np.linalg.norm(X, axis=0) for X in F)
    truth = CPModel(np.ones(k), F)
    est = CPModel(np.ones(k), (F[0], -F[1], -F[2]))
    ev = match_components(est, truth, threshold=1e-12)
    assert ev.recovery_rate == 1.0


def test_match_greedy_equals_exhaustive_on_separated_instance():
    rng = np.random.default_rng(5)
    k, d = 4, 16
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    truth = CPModel(np.full(k, 0.25), (Q[:, :k],) * 3)
    # small perturbations keep the instance well separated
    E = tuple(Q[:, :k] + 0.01 * rng.standard_normal((d, k)) for _ in range(3))
    E = tuple(X / np.linalg.norm(X, axis=0) for X in E)
    est = CPModel(np.full(k, 0.25), E)
    ev = match_components(est, truth, threshold=1.0)
    greedy_total = np.nansum(ev.truth_dist)
    assert greedy_total == pytest.approx(best_permutation_cost(est, truth), abs=1e-12)


def test_component_square_error_hand_value():
    # shift a along an orthogonal direction by delta and renormalize:
    # per-mode squared error is exactly 2 - 2/sqrt(1 + delta^2)
    d, delta = 6, 0.3
    rng = np.random.default_rng(6)
    a = unit(rng, d)
    g = rng.standard_normal(d)
    g -= (g @ a) * a
    g /= np.linalg.norm(g)
    shifted = (a + delta * g) / np.sqrt(1 + delta ** 2)
    expect = 2 - 2 / np.sqrt(1 + delta ** 2)
    got = component_square_error([shifted] * 3, [a] * 3)
    assert got == pytest.approx(expect, abs=1e-12)


def test_component_square_error_sign_rules():
    rng = np.random.default_rng(7)
    a, b, c = (unit(rng, 5) for _ in range(3))
    # two-mode flips are free for order 3
    assert component_square_error([a, -b, -c], [a, b, c]) == pytest.approx(0.0, abs=1e-12)
    # a single-mode flip is not
    assert component_square_error([-a, b, c], [a, b, c]) > 0.1
    # for symmetric components every sign is free
    assert component_square_error([-a], [a], symmetric=True) == pytest.approx(0.0, abs=1e-12)


def test_table_row_exact_estimates():
    rng = np.random.default_rng(8)
    model = CPModel(np.full(3, 1 / 3), tuple(np.linalg.qr(rng.standard_normal((9, 9)))[0][:, :3] for _ in range(3)))
    report = decompose(cp_to_dense(model), DecompositionConfig(k=3, n_init=50, seed=0))
    row = table_row([(report, model)], match_threshold=0.2)
    assert not row.empty
    assert row.avg_square_error <= 1e-12
    assert row.avg_weight_error <= 1e-12
    assert row.k == 3


def test_table_row_empty_flag():
    rng = np.random.default_rng(9)
    model = CPModel(np.ones(2), tuple(np.eye(4)[:, :2] for _ in range(3)))
    report = decompose(cp_to_dense(model), DecompositionConfig(k=2, n_init=10, seed=0))
    # score against an unrelated random truth at a tight threshold: no matches
    other = CPModel(np.ones(2), tuple(unit(rng, 4)[:, None] * np.ones((1, 2)) for _ in range(3)))
    row = table_row([(report, other)], match_threshold=1e-6)
    assert row.empty and row.n_matched == 0
    assert "nan" in row.as_csv()


def test_table_row_csv_columns():
    from cplearn.evaluation import TABLE_COLUMNS

    assert TABLE_COLUMNS == ("k", "avg_square_error", "avg_weight_error",
                             "avg_iterations", "avg_square_error/k", "avg_weight_error/k")


def test_recovery_curve_rank1():
    rng = np.random.default_rng(10)
    a, b, c = (unit(rng, 6) for _ in range(3))
    model = CPModel(np.array([1.0]), (a[:, None], b[:, None], c[:, None]))
    cfg = DecompositionConfig(k=1, n_init=1, seed=0)
    curve = recovery_curve(cp_to_dense(model), model, cfg, [1, 2])
    assert curve[0] == (1, 1.0)


def test_recovery_curve_monotone_nested():
    ss, truth = gen_multiview(MultiviewSpec(d=30, k=6, noise_scale=0.01), 600, seed=11)
    cfg = DecompositionConfig(k=6, n_init=1, seed=3)
    curve = recovery_curve(moment_multiview(ss), truth, cfg, [1, 3, 10, 30, 200], threshold=0.3)
    rates = [r for _, r in curve]
    assert all(b >= a for a, b in zip(rates, rates[1:]))
    assert rates[-1] == 1.0


def test_recovery_curve_requires_increasing_grid():
    rng = np.random.default_rng(12)
    a = unit(rng, 4)
    model = CPModel(np.array([1.0]), (a[:, None],) * 3)
    with pytest.raises(ValueError):
        recovery_curve(cp_to_dense(model), model, DecompositionConfig(k=1), [10, 5])


def test_match_components_invariant_to_estimate_permutation():
    rng = np.random.default_rng(13)
    k, d = 4, 10
    F = tuple(rng.standard_normal((d, k)) for _ in range(3))
    F = tuple(X / np.linalg.norm(X, axis=0) for X in F)
    truth = CPModel(np.ones(k), F)
    E = tuple(X + 0.05 * rng.standard_normal((d, k)) for X in F)
    E = tuple(X / np.linalg.norm(X, axis=0) for X in E)
    est = CPModel(np.ones(k), E)
    base = match_components(est, truth, threshold=0.5)
    perm = rng.permutation(k)
    est_p = CPModel(np.ones(k), tuple(X[:, perm] for X in E))
    shuffled = match_components(est_p, truth, threshold=0.5)
    np.testing.assert_allclose(np.sort(base.truth_dist), np.sort(shuffled.truth_dist), atol=1e-12)
    assert base.recovery_rate == shuffled.recovery_rate
