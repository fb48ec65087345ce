import numpy as np
from scipy import stats

from base_measure import AFTFitError, BaseMeasure, design_matrix, fit_aft_mle
from distributions import make_rng
from survival_data import CovariateSchema, Dataset

SCHEMA = CovariateSchema.from_lists(["b"], ["c"])
TRUE_BETA = np.array([1.0, 0.5, -0.4, 0.3])
TRUE_SIGMA = 0.6


def lognormal_dataset(n=4000, censor_shift=1.5, seed=11):
    rng = make_rng(seed, "aft")
    z = (rng.random(n) < 0.5).astype(int)
    x = np.column_stack([(rng.random(n) < 0.3).astype(float), rng.standard_normal(n)])
    log_y = design_matrix(z, x) @ TRUE_BETA + TRUE_SIGMA * rng.standard_normal(n)
    log_c = censor_shift + rng.standard_normal(n)
    events = (log_y <= log_c).astype(int)
    return Dataset.from_arrays(SCHEMA, np.exp(np.minimum(log_y, log_c)), events, z, x)


def test_design_matrix_layout():
    X = design_matrix([1, 0], [[0.0, 2.0], [1.0, -1.0]])
    assert X.tolist() == [[1.0, 1.0, 0.0, 2.0], [1.0, 0.0, 1.0, -1.0]]


def test_aft_fit_recovers_coefficients():
    data = lognormal_dataset()
    assert 0.1 < data.censoring_fraction() < 0.6
    a_beta, B_beta = fit_aft_mle(data)
    se = np.sqrt(np.diag(B_beta))
    assert np.all(np.abs(a_beta - TRUE_BETA) < 5 * se)
    assert np.allclose(B_beta, B_beta.T)
    assert np.all(np.linalg.eigvalsh(B_beta) > 0)


def test_aft_fit_uses_complete_cases():
    data = lognormal_dataset(n=600)
    covariates = data.covariate_matrix().copy()
    covariates[:50, 1] = np.nan
    masked = Dataset.from_arrays(SCHEMA, data.times(), data.events(), data.exposure(), covariates)
    a_full, _ = fit_aft_mle(masked.complete_case())
    a_masked, _ = fit_aft_mle(masked)
    assert np.allclose(a_full, a_masked)


def test_aft_fit_rank_deficient_design():
    n = 50
    covariates = np.column_stack([np.ones(n), np.linspace(-1, 1, n)])
    data = Dataset.from_arrays(SCHEMA, np.linspace(1, 5, n), np.ones(n, dtype=int), np.zeros(n, dtype=int),
                               covariates)
    try:
        fit_aft_mle(data)
    except AFTFitError as exc:
        assert "a_beta" in str(exc)
    else:
        raise AssertionError("constant exposure and covariate columns should make the fit fail")


def test_from_dataset_defaults_and_overrides():
    data = lognormal_dataset(n=500)
    base = BaseMeasure.from_dataset(data)
    assert base.c_beta == 100.0
    assert (base.a_sigma, base.b_sigma, base.a_tau, base.b_tau, base.b_mu) == (3.0, 0.1, 2.0, 1.0, 0.5)
    manual = BaseMeasure.from_dataset(data, a_beta=np.zeros(4), B_beta=np.eye(4), c_beta=2.0, a_sigma=None)
    assert np.array_equal(manual.a_beta, np.zeros(4))
    assert manual.c_beta == 2.0 and manual.a_sigma == 3.0
    assert np.allclose(manual.prior_covariance, 2.0 * np.eye(4))


def test_base_measure_validation():
    for kwargs in ({"B_beta": [[1.0, 2.0], [0.0, 1.0]]}, {"B_beta": [[1.0, 2.0], [2.0, 1.0]]},
                   {"B_beta": np.eye(2), "a_sigma": 0.0}):
        try:
            BaseMeasure(a_beta=np.zeros(2), c_beta=1.0, **kwargs)
        except ValueError:
            continue
        raise AssertionError(f"{kwargs} should be rejected")


def test_prior_draw_moments():
    base = BaseMeasure(a_beta=np.array([1.0, -1.0]), B_beta=np.array([[1.0, 0.3], [0.3, 0.5]]), c_beta=2.0)
    rng = make_rng(3, "g0")
    beta, sigma2 = base.sample_outcome_params(200000, rng)
    # heavy right tail: compare medians
    assert abs(np.median(sigma2) - 0.3 / stats.chi2.median(3.0)) < 0.003
    assert np.allclose(beta.mean(axis=0), base.a_beta, atol=0.01)
    omega_z, pi, mu, tau2 = base.sample_local_params(100000, 2, 3, rng)
    assert pi.shape == (100000, 2) and mu.shape == (100000, 3)
    assert abs(np.mean(omega_z) - 0.5) < 0.01
    assert np.all(tau2 > 0)


def test_dict_round_trip():
    base = BaseMeasure(a_beta=np.array([0.5, 0.1, 0.2]), B_beta=np.diag([1.0, 2.0, 3.0]), c_beta=4.0, b_tau=1.5)
    again = BaseMeasure.from_dict(base.to_dict())
    assert np.array_equal(again.a_beta, base.a_beta)
    assert np.array_equal(again.B_beta, base.B_beta)
    assert again.b_tau == 1.5 and again.c_beta == 4.0


def run_tests():
    tests = [obj for name, obj in sorted(globals().items()) if name.startswith("test_") and callable(obj)]
    for test in tests:
        print(f"Running {test.__name__}...")
        test()
    print(f"All {len(tests)} tests passed")


if __name__ == "__main__":
    run_tests()
