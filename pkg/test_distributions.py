import numpy as np
from scipy import stats

from distributions import (DistributionError, LocationScaleT, ScaledInvChiSq, choose_index, choose_rows, make_rng,
                           normal_survival, sample_beta, sample_dirichlet, sample_gamma, sample_scaled_inv_chi2,
                           sample_truncated_normal, sample_truncated_normal_array, t_survival,
                           truncated_normal_mean)


def _within(samples, expected, sigmas=4.0):
    se = np.std(samples, ddof=1) / np.sqrt(samples.size)
    return abs(np.mean(samples) - expected) <= sigmas * se


def test_streams_are_reproducible_and_distinct():
    a = make_rng(7, "replicate", 3).random(5)
    b = make_rng(7, "replicate", 3).random(5)
    c = make_rng(7, "replicate", 4).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(make_rng(7, "chain").random(5), make_rng(7, "chain", "dpmm").random(5))


def test_seed_is_required():
    for bad in (None, -1):
        try:
            make_rng(bad)
        except DistributionError:
            continue
        raise AssertionError(f"seed {bad} should be rejected")


def test_truncated_normal_half_line_mean():
    rng = make_rng(1, "test")
    draws = sample_truncated_normal_array(np.zeros(10 ** 6), 1.0, 0.0, rng)
    assert np.all(draws > 0)
    assert _within(draws, stats.norm.pdf(0) / stats.norm.sf(0))
    assert abs(truncated_normal_mean(0.0, 1.0, 0.0) - 0.7979) < 1e-4


def test_truncated_normal_far_tail():
    rng = make_rng(2, "test")
    draws = sample_truncated_normal_array(np.zeros(200000), 1.0, 6.0, rng)
    assert np.all(draws > 6.0)
    expected = truncated_normal_mean(0.0, 1.0, 6.0)
    assert abs(expected - 6.158) < 1e-3
    assert _within(draws, expected)


def test_truncated_normal_without_bound_is_normal():
    rng = make_rng(3, "test")
    draws = sample_truncated_normal_array(np.full(100000, 1.5), 4.0, -np.inf, rng)
    assert stats.kstest(draws, "norm", args=(1.5, 2.0)).pvalue > 1e-4


def test_truncated_normal_strictly_above_bound():
    rng = make_rng(4, "test")
    value = sample_truncated_normal(0.0, 1e-12, 5.0, rng)
    assert value > 5.0
    try:
        sample_truncated_normal(np.nan, 1.0, 0.0, rng)
    except DistributionError:
        pass
    else:
        raise AssertionError("non-finite mean should be rejected")


def test_scaled_inverse_chi_squared():
    rng = make_rng(5, "test")
    draws = sample_scaled_inv_chi2(10.0, 1.0, rng, size=10 ** 6)
    assert _within(draws, 1.25)
    assert ScaledInvChiSq(10.0, 1.0).mean == 1.25
    assert np.all(ScaledInvChiSq(3.0, 0.1).sample(rng, size=10000) > 0)
    try:
        sample_scaled_inv_chi2(0.0, 1.0, rng)
    except DistributionError:
        pass
    else:
        raise AssertionError("zero degrees of freedom should be rejected")


def test_t_survival():
    assert abs(t_survival(2.0, LocationScaleT(2.0, 1.5, 3.0)) - 0.5) < 1e-15
    assert abs(t_survival(1.96, LocationScaleT(0.0, 1.0, 1e6)) - 0.025) < 1e-4
    assert LocationScaleT(0.0, 0.3, 10.0).survival(0.0) == 0.5
    dist = LocationScaleT(0.4, 2.0, 5.0)
    assert abs(dist.cdf(1.0) + dist.survival(1.0) - 1.0) < 1e-14
    assert abs(dist.logpdf(0.3) - stats.t.logpdf(0.3, 5.0, loc=0.4, scale=2.0)) < 1e-12


def test_beta_gamma_dirichlet():
    rng = make_rng(6, "test")
    uniform = sample_beta(1.0, 1.0, rng, size=100000)
    assert stats.kstest(uniform, "uniform").pvalue > 1e-4
    assert _within(sample_gamma(2.0, 1.0, rng, size=10 ** 6), 2.0)
    point = sample_dirichlet([1.0, 1.0], rng)
    assert np.all(point >= 0) and abs(point.sum() - 1.0) < 1e-12
    for call in (lambda: sample_beta(-1.0, 1.0, rng), lambda: sample_gamma(1.0, 0.0, rng),
                 lambda: sample_dirichlet([1.0], rng)):
        try:
            call()
        except DistributionError:
            continue
        raise AssertionError("invalid shape parameters should be rejected")


def test_categorical_choices():
    rng = make_rng(8, "test")
    log_weights = np.log([0.2, 0.0 + 1e-300, 0.8])
    counts = np.bincount([choose_index(log_weights, rng) for _ in range(20000)], minlength=3)
    assert counts[1] == 0
    assert abs(counts[2] / 20000 - 0.8) < 0.02
    rows = choose_rows(np.log(np.array([[1.0, 0.0], [0.0, 1.0]]) + 1e-300), rng, uniforms=np.array([0.5, 0.5]))
    assert rows.tolist() == [0, 1]


def test_normal_survival():
    assert abs(normal_survival(0.0, 0.0, 1.0) - 0.5) < 1e-15
    assert abs(normal_survival(1.96, 0.0, 1.0) - 0.0249979) < 1e-6


def run_tests():
    tests = [obj for name, obj in sorted(globals().items()) if name.startswith("test_") and callable(obj)]
    for test in tests:
        print(f"Running {test.__name__}...")
        test()
    print(f"All {len(tests)} tests passed")


if __name__ == "__main__":
    run_tests()
