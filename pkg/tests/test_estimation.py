import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparse_subarrays.errors import InfeasibleInstance, InvalidArgument
from sparse_subarrays.estimation import (Scenario, cost_gradient, make_scenario,
                                         make_steering_dictionary, match_errors, metrics,
                                         mle_single, newton_refine, nomp, run_campaign,
                                         steering, synthesize)


@pytest.fixture(scope="module")
def dictionary(compact_D):
    return make_steering_dictionary(compact_D)


def test_dictionary_columns(dictionary, compact_D):
    norms = np.sum(np.abs(dictionary.S) ** 2, axis=0)
    assert np.allclose(norms, len(compact_D))
    assert np.hypot(*dictionary.grid.T).max() <= 0.5 + dictionary.grid[1, 0] - dictionary.grid[0, 0]


def test_synthesize_noiseless_broadside(compact_D):
    truth = Scenario(np.zeros((1, 2)), np.array([0.5 - 0.2j]))
    snap = synthesize(truth, 0.0, compact_D, seed=0)
    assert np.allclose(snap.x, 0.5 - 0.2j)


def test_noise_covariance(compact_D):
    D = compact_D[:8]
    truth = Scenario(np.zeros((1, 2)), np.array([0.0]))
    rng = np.random.default_rng(1)
    X = np.array([synthesize(truth, 2.0, D, rng).x for _ in range(10000)])
    C = X.T @ X.conj() / len(X)
    assert np.allclose(np.diag(C).real, 2.0, rtol=0.05)
    off = C - np.diag(np.diag(C))
    assert np.abs(off).max() < 0.1
    # circular: pseudo-covariance vanishes
    assert np.abs(X.T @ X / len(X)).max() < 0.1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_gradient_and_hessian_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    D = rng.uniform(-3, 3, size=(24, 2))
    u = rng.uniform(-0.3, 0.3, 2)
    alpha = rng.normal() + 1j * rng.normal()
    y = rng.normal(size=24) + 1j * rng.normal(size=24)
    Phi = None if seed % 2 else (rng.normal(size=(8, 24)) + 1j * rng.normal(size=(8, 24)))
    if Phi is not None:
        y = Phi @ y
    T, g, H = cost_gradient(u, alpha, y, D, Phi)
    h = 1e-6
    gfd = np.empty(2)
    Hfd = np.empty((2, 2))
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        Tp, gp, _ = cost_gradient(u + e, alpha, y, D, Phi)
        Tm, gm, _ = cost_gradient(u - e, alpha, y, D, Phi)
        gfd[i] = (Tp - Tm) / (2 * h)
        Hfd[:, i] = (gp - gm) / (2 * h)
    assert np.linalg.norm(g - gfd) <= 1e-6 * max(np.linalg.norm(g), 1.0)
    assert np.allclose(H, Hfd, rtol=1e-5, atol=1e-5 * np.abs(H).max())


def test_newton_fixed_point_at_truth(compact_D):
    u = np.array([0.1, -0.05])
    y = 1.3 * steering(compact_D, u)
    u2, a2, moved = newton_refine(u, 1.3, y, compact_D)
    assert np.allclose(u2, u, atol=1e-12)
    assert a2 == pytest.approx(1.3)


def test_mle_on_grid_exact(compact_D, dictionary):
    u = dictionary.grid[17]
    x = steering(compact_D, u) * (0.3 + 0.4j)
    assert np.allclose(mle_single(x, dictionary), u, atol=1e-12)


def test_mle_off_grid_midpoint(compact_D, dictionary):
    g = dictionary.grid
    pitch = np.diff(np.unique(g[:, 0]))[0]
    u = g[40] + pitch / 2
    x = steering(compact_D, u)
    err = np.hypot(*(mle_single(x, dictionary) - u))
    assert err < 1e-6 * pitch


def test_nomp_two_sources_noiseless(compact_D, dictionary):
    truth = Scenario(np.array([[0.0, 0.0], [0.23, -0.17]]), np.array([1.0, 0.8j]))
    x = synthesize(truth, 0.0, compact_D).x
    res = nomp(x, dictionary, 2)
    err = match_errors(truth.u, res.u)
    assert err.max() < 1e-6
    assert res.residual_power < 1e-12 * np.vdot(x, x).real
    assert np.all(np.diff(res.history) <= 1e-12)


def test_nomp_single_gain(compact_D, dictionary):
    u = dictionary.grid[5]
    x = steering(compact_D, u) * (2 - 1j)
    res = nomp(x, dictionary, 1)
    assert np.allclose(res.u[0], u, atol=1e-12)
    assert res.alpha[0] == pytest.approx(2 - 1j)


def test_nomp_rejects_bad_k(compact_D, dictionary):
    with pytest.raises(InvalidArgument):
        nomp(np.zeros(len(compact_D), complex), dictionary, 0)


def test_residual_monotone_with_noise(compact_D, dictionary):
    rng = np.random.default_rng(4)
    truth = make_scenario(4, seed=rng)
    x = synthesize(truth, 0.5, compact_D, rng).x
    res = nomp(x, dictionary, 4)
    assert np.all(np.diff(res.history) <= 1e-9)
    assert res.residual_power <= np.vdot(x, x).real
    assert res.K == 4


def test_scenario_separation():
    rng = np.random.default_rng(0)
    dmin = np.inf
    for _ in range(10000 // 4):
        s = make_scenario(5, min_sep=0.16, seed=rng)
        dmin = min(dmin, np.hypot(*(s.u[1:] - s.u[0]).T).min())
        assert np.all(np.hypot(*s.u.T) <= np.sin(np.deg2rad(30)) + 1e-12)
    assert dmin >= 0.16


def test_scenario_levels():
    s = make_scenario(3, interferer_level_db=-6, seed=1)
    assert np.allclose(np.abs(s.alpha), [1, 10 ** (-6 / 20), 10 ** (-6 / 20)])
    assert np.allclose(s.u[0], 0)
    with pytest.raises(InfeasibleInstance):
        make_scenario(2, min_sep=2.0, seed=0, max_tries=50)


def test_match_errors_permutation_symmetric():
    rng = np.random.default_rng(2)
    t = rng.normal(size=(5, 2))
    e = t + 0.01 * rng.normal(size=(5, 2))
    a = match_errors(t, e)
    b = match_errors(t, e[rng.permutation(5)])
    assert np.allclose(a, b)
    assert np.allclose(a, np.linalg.norm(t - e, axis=1))


def test_metrics_hand_computed():
    rmse, (t, p) = metrics([0.0, 0.0, 0.0])
    assert rmse == 0 and np.all(p == 0)
    rmse, _ = metrics([0.1, 0.2, 0.2])
    assert rmse == pytest.approx(np.sqrt((0.01 + 0.04 + 0.04) / 3 / 2))
    _, (t, p) = metrics([0.1 * np.sqrt(2)], thresholds_db=[-10.5, -9.5])
    assert list(p) == [1.0, 0.0]


def test_campaign_zero_noise_and_threads(compact_D):
    a = run_campaign(compact_D, [60.0], 6, K=2, seed=3)
    b = run_campaign(compact_D, [60.0], 6, K=2, seed=3, threads=3)
    assert np.array_equal(a.errors, b.errors)
    assert a.rmse[0] < 1e-3


def test_pure_noise_hits_prior_limit(compact_D, dictionary):
    # at vanishing SNR the estimate is a uniform point of the radius-1/2
    # search disc and the source is at broadside: E|e|^2 = 1/8, rmse = 1/4.
    # Newton steps driven by noise can leave the disc, which only adds error;
    # the zero-SNR bound for a prior on the whole unit disc is 1/2.
    res = run_campaign(compact_D, [-60.0], 400, seed=1, dictionary=dictionary)
    assert 0.22 < res.rmse[0] < 0.5
