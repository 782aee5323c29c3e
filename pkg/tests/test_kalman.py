import numpy as np
import pytest

from gaussian_oracle import (
    oracle_filtered_mean,
    oracle_predict,
    oracle_run,
    random_model_and_series,
)
from seastate.kalman import StateSpaceModel, kalman_filter, kalman_smooth, predict
from seastate.timeseries import TimeSeries, from_values


def _local_level(q=0.5, r=1.0, x0=0.0, v0=4.0):
    return StateSpaceModel(
        F=[[1.0]], G=[[1.0]], Q=[[q]], R=r, H=[1.0], x0=[x0], V0=[[v0]]
    )


def test_local_level_matches_scalar_recursion():
    rng = np.random.default_rng(0)
    y = rng.standard_normal(25).cumsum()
    ts = from_values(y)
    q, r, v0 = 0.5, 1.3, 4.0
    fr = kalman_filter(_local_level(q=q, r=r, v0=v0), ts)

    x, v, ll = 0.0, v0, 0.0
    for n in range(25):
        v = v + q
        e = y[n] - x
        s = v + r
        assert fr.innovations[n] == pytest.approx(e, rel=1e-12)
        assert fr.innovation_variances[n] == pytest.approx(s, rel=1e-12)
        ll += -0.5 * (np.log(2 * np.pi) + np.log(s) + e * e / s)
        k = v / s
        x = x + k * e
        v = v * (1 - k)
    assert fr.log_likelihood == pytest.approx(ll, rel=1e-12)
    assert fr.n_observed == 25


def test_missing_points_skip_update_and_likelihood():
    y = np.array([1.0, 2.0, np.nan, 4.0, 5.0])
    ts = from_values(y)
    fr = kalman_filter(_local_level(), ts)
    assert np.isnan(fr.innovations[2])
    assert np.isnan(fr.innovation_variances[2])
    np.testing.assert_allclose(fr.filtered_means[2], fr.predicted_means[2])
    np.testing.assert_allclose(fr.filtered_covs[2], fr.predicted_covs[2])
    assert fr.n_observed == 4

    ll, sm, _ = oracle_run(_local_level(), ts)
    assert fr.log_likelihood == pytest.approx(ll, rel=1e-10)


def test_filter_matches_oracle_on_random_models():
    rng = np.random.default_rng(123)
    for i in range(20):
        model, ts = random_model_and_series(rng, time_varying=(i % 2 == 0))
        fr = kalman_filter(model, ts)
        sr = kalman_smooth(model, fr)
        ll, sm_means, sm_covs = oracle_run(model, ts)
        assert fr.log_likelihood == pytest.approx(ll, rel=1e-9, abs=1e-9)
        np.testing.assert_allclose(sr.means, sm_means, rtol=1e-8, atol=1e-8)
        np.testing.assert_allclose(sr.covs, sm_covs, rtol=1e-6, atol=1e-8)


def test_filtered_mean_matches_truncated_conditioning():
    rng = np.random.default_rng(7)
    model, ts = random_model_and_series(rng, max_dim=3, max_n=15)
    fr = kalman_filter(model, ts)
    for n in (1, 5, len(ts)):
        np.testing.assert_allclose(
            fr.filtered_means[n - 1],
            oracle_filtered_mean(model, ts, n),
            rtol=1e-8, atol=1e-8,
        )


def test_variance_scaling_shifts_innovations_not_ratios():
    # multiplying R, Q, V0 by s scales every innovation variance by s and
    # leaves the innovations themselves untouched
    rng = np.random.default_rng(5)
    y = rng.standard_normal(30)
    ts = from_values(y)
    s = 7.5
    base = _local_level(q=0.4, r=1.0, v0=2.0)
    scaled = StateSpaceModel(F=base.F, G=base.G, Q=s * base.Q, R=s * base.R,
                             H=[1.0], x0=base.x0, V0=s * base.V0)
    fa, fb = kalman_filter(base, ts), kalman_filter(scaled, ts)
    np.testing.assert_allclose(fb.innovations, fa.innovations, rtol=1e-12)
    np.testing.assert_allclose(fb.innovation_variances,
                               s * fa.innovation_variances, rtol=1e-12)


def test_smoother_endpoint_equals_filter():
    rng = np.random.default_rng(11)
    model, ts = random_model_and_series(rng)
    fr = kalman_filter(model, ts)
    sr = kalman_smooth(model, fr)
    np.testing.assert_allclose(sr.means[-1], fr.filtered_means[-1], rtol=1e-12)
    np.testing.assert_allclose(sr.covs[-1], fr.filtered_covs[-1], rtol=1e-12)
    # smoothing never inflates the marginal state variance
    assert np.all(np.diagonal(sr.covs, axis1=1, axis2=2)
                  <= np.diagonal(fr.filtered_covs, axis1=1, axis2=2) + 1e-9)


def test_smoother_pseudo_inverse_on_singular_prediction():
    # singular F and no system noise make the one-step covariance rank
    # deficient, forcing the clipped pseudo-inverse branch
    model = StateSpaceModel(
        F=[[1.0, 0.0], [0.0, 0.0]],
        G=np.zeros((2, 0)),
        Q=np.zeros((0, 0)),
        R=1.0,
        H=[1.0, 1.0],
        x0=[0.0, 1.0],
        V0=np.eye(2),
    )
    ts = from_values(np.array([1.0, 1.1, 0.9, 1.0]))
    fr = kalman_filter(model, ts)
    sr = kalman_smooth(model, fr)
    assert sr.used_pseudo_inverse
    assert np.isfinite(sr.means).all()
    ll, sm_means, _ = oracle_run(model, ts)
    assert fr.log_likelihood == pytest.approx(ll, rel=1e-10)
    np.testing.assert_allclose(sr.means, sm_means, rtol=1e-8, atol=1e-8)


def test_predict_matches_oracle():
    rng = np.random.default_rng(21)
    model, ts = random_model_and_series(rng, max_dim=4, max_n=25,
                                        time_varying=True)
    fr = kalman_filter(model, ts)
    means, variances = predict(model, fr, 5)
    om, ov = oracle_predict(model, ts, 5)
    np.testing.assert_allclose(means, om, rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(variances, ov, rtol=1e-8, atol=1e-8)


def test_predict_local_level_closed_form():
    ts = from_values(np.array([1.0, 2.0, 1.5]))
    model = _local_level(q=0.3, r=0.7)
    fr = kalman_filter(model, ts)
    means, variances = predict(model, fr, 4)
    np.testing.assert_allclose(means, np.full(4, fr.filtered_means[-1, 0]))
    expected = fr.filtered_covs[-1, 0, 0] + 0.3 * np.arange(1, 5) + 0.7
    np.testing.assert_allclose(variances, expected, rtol=1e-12)
    with pytest.raises(ValueError, match="horizon"):
        predict(model, fr, 0)


def test_zero_variance_collapse_raises_with_index():
    model = StateSpaceModel(F=[[1.0]], G=np.zeros((1, 0)), Q=np.zeros((0, 0)),
                            R=0.0, H=[1.0], x0=[0.0], V0=[[0.0]])
    with pytest.raises(RuntimeError, match=r"r <= 0.*n=1"):
        kalman_filter(model, from_values(np.ones(3)))


def test_h_rows_shape_check():
    model = _local_level()
    ts = from_values(np.ones(4))
    with pytest.raises(ValueError, match="H_rows"):
        kalman_filter(model, ts, H_rows=np.ones((3, 1)))
    fast = kalman_filter(model, ts, H_rows=np.ones((4, 1)))
    slow = kalman_filter(model, ts)
    assert fast.log_likelihood == slow.log_likelihood


def test_model_validation():
    with pytest.raises(ValueError, match="square"):
        StateSpaceModel(F=np.zeros((2, 1)), G=np.eye(2), Q=np.eye(2), R=1.0,
                        H=[1.0, 0.0], x0=np.zeros(2), V0=np.eye(2))
    with pytest.raises(ValueError, match="diagonal"):
        StateSpaceModel(F=np.eye(2), G=np.eye(2), Q=np.array([[1.0, 0.5], [0.5, 1.0]]),
                        R=1.0, H=[1.0, 0.0], x0=np.zeros(2), V0=np.eye(2))
    with pytest.raises(ValueError, match="non-negative"):
        StateSpaceModel(F=[[1.0]], G=[[1.0]], Q=[[-1.0]], R=1.0, H=[1.0],
                        x0=[0.0], V0=[[1.0]])
    with pytest.raises(ValueError, match="symmetric"):
        StateSpaceModel(F=np.eye(2), G=np.eye(2), Q=np.eye(2), R=1.0,
                        H=[1.0, 0.0], x0=np.zeros(2),
                        V0=np.array([[1.0, 0.9], [0.0, 1.0]]))
    with pytest.raises(ValueError, match="length"):
        StateSpaceModel(F=np.eye(2), G=np.eye(2), Q=np.eye(2), R=1.0,
                        H=[1.0], x0=np.zeros(2), V0=np.eye(2))
    with pytest.raises(ValueError, match="exceeds"):
        StateSpaceModel(F=[[1.0]], G=np.ones((1, 2)), Q=np.eye(2), R=1.0,
                        H=[1.0], x0=[0.0], V0=[[1.0]])


def test_time_varying_row_is_queried_by_one_based_index():
    seen = []

    def H(n):
        seen.append(n)
        return np.array([1.0])

    model = StateSpaceModel(F=[[1.0]], G=[[1.0]], Q=[[1.0]], R=1.0, H=H,
                            x0=[0.0], V0=[[1.0]])
    kalman_filter(model, from_values(np.ones(3)))
    assert seen[:3] == [1, 2, 3]
