"""Generators and moment oracles: population values, implicit/dense agreement."""

import numpy as np
import pytest

from cplearn import (
    ICASpec,
    MultiviewSpec,
    SampleSet,
    cp_to_dense,
    estimate_gmm_variance,
    gen_gmm,
    gen_ica,
    gen_multiview,
    load_samples,
    moment_gmm3,
    moment_ica4,
    moment_multiview,
    save_samples,
)


def test_multiview_noiseless_samples_are_columns():
    spec = MultiviewSpec(d=8, k=4, noise_scale=0.0)
    ss, truth = gen_multiview(spec, 20, seed=0)
    for X, F in zip(ss.views, truth.factors):
        np.testing.assert_allclose(X, F[:, ss.labels], atol=0)


def test_multiview_balanced_counts():
    ss, _ = gen_multiview(MultiviewSpec(d=5, k=10, noise_scale=0.1), 1000, seed=1)
    counts = np.bincount(ss.labels, minlength=10)
    np.testing.assert_array_equal(counts, np.full(10, 100))
    with pytest.raises(ValueError):
        gen_multiview(MultiviewSpec(d=5, k=3), 100, seed=0)


def test_multiview_noise_norm_concentrates():
    # noise scale zeta with zeta*sqrt(d) = 0.1: per-sample noise norm near 0.1
    d = 100
    zeta = 0.1 / np.sqrt(d)
    spec = MultiviewSpec(d=d, k=4, noise_scale=zeta)
    ss, truth = gen_multiview(spec, 10_000, seed=2)
    noise = ss.views[0] - truth.factors[0][:, ss.labels]
    norms = np.linalg.norm(noise, axis=0)
    assert abs(norms.mean() - 0.1) / 0.1 < 0.05


def test_moment_multiview_single_sample_is_rank1():
    rng = np.random.default_rng(3)
    x1, x2, x3 = (rng.standard_normal(4) for _ in range(3))
    mo = moment_multiview(SampleSet([x1[:, None], x2[:, None], x3[:, None]]))
    np.testing.assert_allclose(mo.densify().data, np.einsum("i,j,k->ijk", x1, x2, x3), atol=1e-14)


def test_moment_multiview_matches_outer_product_mean():
    rng = np.random.default_rng(4)
    X = [rng.standard_normal((4, 6)) for _ in range(3)]
    mo = moment_multiview(SampleSet(X))
    direct = sum(np.einsum("i,j,k->ijk", X[0][:, i], X[1][:, i], X[2][:, i]) for i in range(6)) / 6
    np.testing.assert_allclose(mo.densify().data, direct, atol=1e-12)


def test_moment_multiview_noiseless_equals_truth_tensor():
    spec = MultiviewSpec(d=6, k=3, noise_scale=0.0)
    ss, truth = gen_multiview(spec, 30, seed=5)
    np.testing.assert_allclose(
        moment_multiview(ss).densify().data, cp_to_dense(truth).data, atol=1e-12
    )


def test_moment_oracles_agree_with_densified_on_random_contractions():
    rng = np.random.default_rng(6)
    ss, _ = gen_multiview(MultiviewSpec(d=5, k=2, noise_scale=0.4, balanced=False), 7, seed=7)
    gs, _ = gen_gmm(MultiviewSpec(d=5, k=2, noise_scale=0.3, balanced=False), 9, seed=8)
    xs, _, _ = gen_ica(ICASpec(d=5, k=4), 11, seed=9)
    oracles = [moment_multiview(ss), moment_gmm3(gs, 0.09), moment_ica4(xs)]
    for mo in oracles:
        dense = mo.densify()
        for _ in range(100):
            vs = [rng.standard_normal(5) for _ in range(mo.order)]
            assert mo.contract(vs) == pytest.approx(dense.contract(vs), abs=1e-10)
        for _ in range(10):
            vs = [rng.standard_normal(5) for _ in range(mo.order - 1)]
            for mode in range(mo.order):
                np.testing.assert_allclose(
                    mo.contract_mode(mode, vs), dense.contract_mode(mode, vs), atol=1e-10
                )
            th = rng.standard_normal(5)
            np.testing.assert_allclose(mo.slice_combination(th), dense.slice_combination(th), atol=1e-10)


def test_moment_oracles_invariant_to_sample_order():
    rng = np.random.default_rng(10)
    ss, _ = gen_multiview(MultiviewSpec(d=4, k=2, noise_scale=0.2, balanced=False), 8, seed=11)
    perm = rng.permutation(8)
    shuffled = SampleSet([X[:, perm] for X in ss.views])
    u, v, w = (rng.standard_normal(4) for _ in range(3))
    assert moment_multiview(ss).contract((u, v, w)) == pytest.approx(
        moment_multiview(shuffled).contract((u, v, w)), abs=1e-12
    )


def test_gmm_moment_pure_noise_vanishes():
    # single centered Gaussian component: population corrected moment is zero
    ss, _ = _gen_gmm_zero_mean(5, 100_000, seed=1)
    mo = moment_gmm3(ss, 1.0)
    assert mo.densify().frobenius_norm() <= 0.05


def _gen_gmm_zero_mean(d, n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((d, n))
    return SampleSet([X]), None


def test_gmm_moment_zero_variance_is_raw_moment():
    rng = np.random.default_rng(13)
    X = rng.standard_normal((3, 8))
    mo = moment_gmm3(SampleSet([X]), 0.0)
    raw = sum(np.einsum("i,j,k->ijk", X[:, i], X[:, i], X[:, i]) for i in range(8)) / 8
    np.testing.assert_allclose(mo.densify().data, raw, atol=1e-12)


def test_gmm_moment_implicit_matches_densified_formula():
    rng = np.random.default_rng(14)
    X = rng.standard_normal((3, 8))
    mo = moment_gmm3(SampleSet([X]), 0.7)
    dense = mo.densify()
    for _ in range(20):
        v, w = rng.standard_normal(3), rng.standard_normal(3)
        np.testing.assert_allclose(mo.contract_mode(0, (v, w)), dense.contract_mode(0, (v, w)), atol=1e-12)
    with pytest.raises(ValueError):
        moment_gmm3(SampleSet([X]), -0.1)


def test_gmm_symmetry_of_corrected_moment():
    rng = np.random.default_rng(15)
    X = rng.standard_normal((4, 10))
    D = moment_gmm3(SampleSet([X]), 0.3).densify().data
    np.testing.assert_allclose(D, D.transpose(1, 0, 2), atol=1e-12)
    np.testing.assert_allclose(D, D.transpose(2, 1, 0), atol=1e-12)


def test_estimate_gmm_variance_pure_noise():
    ss, _ = _gen_gmm_zero_mean(5, 100_000, seed=16)
    assert estimate_gmm_variance(ss, 1) == pytest.approx(1.0, abs=0.05)


def test_estimate_gmm_variance_noiseless():
    ss, _ = gen_gmm(MultiviewSpec(d=6, k=3, noise_scale=0.0), 99_999, seed=17)
    assert estimate_gmm_variance(ss, 3) <= 1e-3


def test_estimate_gmm_variance_single_component_with_noise():
    spec = MultiviewSpec(d=2, k=1, noise_scale=0.5, factors=(np.eye(2)[:, :1],))
    ss, _ = gen_gmm(spec, 200_000, seed=18)
    assert estimate_gmm_variance(ss, 1) == pytest.approx(0.25, abs=0.01)


def test_estimate_gmm_variance_refuses_overcomplete():
    ss, _ = gen_gmm(MultiviewSpec(d=3, k=3, noise_scale=0.1), 9, seed=19)
    with pytest.raises(ValueError):
        estimate_gmm_variance(ss, 4)


def test_ica_identity_rademacher_entries():
    spec = ICASpec(d=4, k=4, mixing=np.eye(4))
    ss, A, kappa = gen_ica(spec, 50, seed=20)
    assert set(np.unique(ss.views[0])) <= {-1.0, 1.0}
    np.testing.assert_array_equal(A, np.eye(4))
    np.testing.assert_array_equal(kappa, np.full(4, -2.0))


def test_ica_source_variances():
    for law, sparsity in (("rademacher", 0), ("uniform", 0), ("bernoulli-gaussian", 3)):
        spec = ICASpec(d=6, k=6, source_law=law, sparsity=sparsity, mixing=np.eye(6))
        ss, _, _ = gen_ica(spec, 100_000, seed=21)
        var = (ss.views[0] ** 2).mean(axis=1)
        np.testing.assert_allclose(var, np.ones(6), rtol=0.02)


def test_ica_bernoulli_gaussian_support_size():
    spec = ICASpec(d=10, k=30, source_law="bernoulli-gaussian", sparsity=3, mixing=None)
    rng_samples, _, kappa = gen_ica(spec, 100_000, seed=22)
    # support statistics live in the hidden sources; regenerate them directly
    spec_id = ICASpec(d=30, k=30, source_law="bernoulli-gaussian", sparsity=3, mixing=np.eye(30))
    ss, _, _ = gen_ica(spec_id, 100_000, seed=22)
    support = (ss.views[0] != 0).sum(axis=0)
    assert abs(support.mean() - 3.0) / 3.0 < 0.05
    assert kappa[0] == pytest.approx(3 * 30 / 3 - 3)
    with pytest.raises(ValueError):
        ICASpec(d=4, k=4, source_law="bernoulli-gaussian", sparsity=0.0)


def test_ica_moment_gaussian_sources_vanish():
    # Bernoulli-Gaussian at full sparsity s=k is exactly iid N(0,1) sources
    spec = ICASpec(d=5, k=5, source_law="bernoulli-gaussian", sparsity=5, mixing=np.eye(5))
    ss, _, kappa = gen_ica(spec, 100_000, seed=23)
    assert kappa[0] == 0.0
    from cplearn import spectral_norm_estimate

    est = spectral_norm_estimate(moment_ica4(ss).densify(), restarts=16, iters=60, seed=0)
    assert est.value <= 0.1


def test_ica_moment_rademacher_population_value():
    spec = ICASpec(d=5, k=5, mixing=np.eye(5))
    ss, _, _ = gen_ica(spec, 200_000, seed=24)
    M = moment_ica4(ss).densify().data
    pop = np.zeros((5,) * 4)
    for j in range(5):
        pop[j, j, j, j] = -2.0
    assert np.max(np.abs(M - pop)) <= 0.05


def test_ica_moment_sign_flip_invariance():
    ss, _, _ = gen_ica(ICASpec(d=4, k=6), 50, seed=25)
    mo = moment_ica4(ss)
    rng = np.random.default_rng(26)
    u = rng.standard_normal(4)
    assert mo.contract((u, u, u, u)) == pytest.approx(mo.contract((-u, -u, -u, -u)), abs=1e-12)


def test_sampleset_round_trip(tmp_path):
    ss, _ = gen_multiview(MultiviewSpec(d=4, k=2, noise_scale=0.2), 6, seed=27)
    path = tmp_path / "s.txt"
    save_samples(path, ss)
    back = load_samples(path)
    assert back.n_views == 3 and back.n == 6 and back.d == 4
    for X, Y in zip(ss.views, back.views):
        np.testing.assert_allclose(X, Y, atol=0)
    np.testing.assert_array_equal(ss.labels, back.labels)
    xs, _, _ = gen_ica(ICASpec(d=3, k=3), 5, seed=28)
    save_samples(path, xs)
    back = load_samples(path)
    assert back.labels is None and back.n_views == 1
    np.testing.assert_allclose(xs.views[0], back.views[0], atol=0)
