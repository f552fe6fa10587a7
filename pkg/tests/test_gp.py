import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgpf.basis import build_design_matrix, BasisSpec
from rgpf.errors import ConfigError, DegreesOfFreedomError, InputShapeError
from rgpf.gp import (ModelSpec, TrainedModel, default_hyperparameters, influence_diagnostic,
                     load_model, masking_pair, neg_log_marginal_likelihood, optimize_hyperparameters,
                     predict, residual_demo_instance, residual_sensitivity, save_model,
                     smearing_masking_demo, tau2_posterior, train, wls_beta)
from rgpf.kernels import KernelHyperparameters, KernelSpec

KINDS = ["rbf", "exponential", "matern32", "rational_quadratic"]


def dense_kernel(A, B, kind, ls, tau2, alpha=2.0):
    D = (A[:, None, :] - B[None, :, :]) / ls
    d2 = np.sum(D**2, axis=-1)
    if kind == "rbf":
        return tau2 * np.exp(-0.5 * d2)
    if kind == "exponential":
        return tau2 * np.exp(-np.sum(np.abs(D), axis=-1))
    if kind == "matern32":
        r = np.sqrt(3.0 * d2)
        return tau2 * (1 + r) * np.exp(-r)
    return tau2 * (1 + d2 / (2 * alpha)) ** -alpha


def dense_oracle(X, y, Xs, basis, kind, ls, tau2, s2):
    """Conditional mean/covariance with explicit inverses."""
    H = build_design_matrix(X, BasisSpec(basis, X.shape[1]))
    Hs = build_design_matrix(Xs, BasisSpec(basis, X.shape[1]))
    Si = np.linalg.inv(dense_kernel(X, X, kind, ls, tau2) + s2 * np.eye(len(y)))
    beta = np.linalg.inv(H.T @ Si @ H) @ H.T @ Si @ y
    C = dense_kernel(X, Xs, kind, ls, tau2)
    mean = Hs @ beta + C.T @ Si @ (y - H @ beta)
    cov = dense_kernel(Xs, Xs, kind, ls, tau2) - C.T @ Si @ C
    return beta, mean, cov


def fixed_model(X, y, kind, ls, tau2, s2, basis="linear", mode="gpm"):
    kernel = KernelSpec(kind, alpha=2.0) if kind == "rational_quadratic" else KernelSpec(kind)
    spec = ModelSpec(basis=basis, kernel=kernel, mode=mode, optimize=False, standardize=False)
    return train(X, y, spec, hp_init=KernelHyperparameters(ls, tau2, s2))


@pytest.mark.parametrize("seed", range(20))
def test_predict_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(5, 31)), int(rng.integers(1, 4))
    kind = KINDS[seed % 4]
    X = rng.uniform(-2, 2, (n, d))
    y = np.sin(X).sum(axis=1) + rng.normal(scale=0.1, size=n)
    Xs = rng.uniform(-2.5, 2.5, (7, d))
    ls = rng.uniform(0.5, 2.0, d)
    tau2, s2 = rng.uniform(0.5, 2.0), rng.uniform(0.05, 0.3)
    model = fixed_model(X, y, kind, ls, tau2, s2)
    pred = predict(model, Xs)
    beta, mean, cov = dense_oracle(X, y, Xs, "linear", kind, ls, tau2, s2)
    np.testing.assert_allclose(model.beta, beta, rtol=0, atol=1e-10)
    np.testing.assert_allclose(pred.mean, mean, rtol=0, atol=1e-10)
    np.testing.assert_allclose(pred.covariance, cov, rtol=0, atol=1e-10)
    lean = predict(model, Xs, full_covariance=False, chunk=3)
    np.testing.assert_allclose(lean.mean, pred.mean, atol=1e-12)
    np.testing.assert_allclose(lean.per_point_std, pred.per_point_std, atol=1e-10)


def test_small_toy():
    # four points: training needs n > q + 2
    X = np.array([[0.0], [1.0], [2.5], [3.1]])
    y = np.array([0.2, 1.0, -0.3, 0.4])
    Xs = np.array([[0.5], [3.0]])
    model = fixed_model(X, y, "rbf", [1.0], 1.0, 1e-3, basis="constant")
    pred = predict(model, Xs)
    _, mean, cov = dense_oracle(X, y, Xs, "constant", "rbf", np.array([1.0]), 1.0, 1e-3)
    np.testing.assert_allclose(pred.mean, mean, atol=1e-10)
    np.testing.assert_allclose(pred.covariance, cov, atol=1e-10)
    noisy = predict(model, Xs, noisy=True)
    np.testing.assert_allclose(np.diag(noisy.covariance), np.diag(cov) + 1e-3, atol=1e-10)


def test_interpolation_and_prior_reversion():
    rng = np.random.default_rng(2)
    X = rng.uniform(0, 5, (12, 1))
    y = np.cos(X[:, 0])
    model = fixed_model(X, y, "rbf", [1.0], 1.0, 0.0, basis="constant")
    at = predict(model, X)
    np.testing.assert_allclose(at.mean, y, rtol=1e-6, atol=1e-6)
    assert np.all(at.per_point_std <= 1e-4)
    far = predict(model, [[1e3]])
    assert far.mean[0] == pytest.approx(model.beta[0], rel=1e-6)
    assert far.per_point_std[0] ** 2 == pytest.approx(1.0, rel=1e-6)


def test_information_monotonicity():
    rng = np.random.default_rng(4)
    for _ in range(10):
        X = rng.uniform(0, 4, (8, 1))
        y = np.sin(X[:, 0])
        x_new, x_test = rng.uniform(0, 4, (1, 1)), rng.uniform(0, 4, (3, 1))
        before = predict(fixed_model(X, y, "rbf", [0.8], 1.0, 1e-2, "constant"), x_test)
        X2, y2 = np.vstack([X, x_new]), np.append(y, np.sin(x_new[0, 0]))
        after = predict(fixed_model(X2, y2, "rbf", [0.8], 1.0, 1e-2, "constant"), x_test)
        assert np.all(after.per_point_std <= before.per_point_std + 1e-12)


def test_wls_examples():
    assert wls_beta(np.ones((3, 1)), np.eye(3), [1, 2, 3])[0] == pytest.approx(2.0)
    b = wls_beta(np.ones((3, 1)), np.diag([1, 1, 100.0]), [1, 2, 10])
    assert b[0] == pytest.approx(3.1 / 2.01, rel=1e-12)
    H = np.column_stack([np.ones(5), np.arange(5.0)])
    np.testing.assert_allclose(wls_beta(H, np.eye(5), H @ [1.5, -2.0]), [1.5, -2.0], atol=1e-12)


def test_tau2_examples():
    post = tau2_posterior(np.ones((4, 1)), np.eye(4), [0, 0, 3, 3])
    assert post.tau2_hat == pytest.approx(9.0)
    assert post.shape == 1.5 and post.scale == pytest.approx(4.5)
    H = np.column_stack([np.ones(6), np.arange(6.0)])
    assert tau2_posterior(H, np.eye(6), H @ [1.0, 2.0]).tau2_hat == pytest.approx(0.0, abs=1e-20)
    with pytest.raises(DegreesOfFreedomError):
        tau2_posterior(np.ones((2, 1)), np.eye(2), [0, 2])


def test_residual_sensitivity_properties():
    rng = np.random.default_rng(6)
    n = 15
    H = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    A = rng.normal(size=(n, n))
    Sigma = A @ A.T / n + np.eye(n)
    S, W = residual_sensitivity(H, Sigma)
    assert np.abs(S @ S - S).max() < 1e-10
    assert np.abs(W @ H).max() < 1e-10
    assert np.trace(S) == pytest.approx(3.0, abs=1e-8)


def test_smearing_and_masking():
    H, Sigma = residual_demo_instance()
    _, W = residual_sensitivity(H, Sigma)
    n = H.shape[0]
    assert np.all(smearing_masking_demo(W, np.zeros(n)) == 0)
    e1 = np.zeros(n)
    e1[0] = 1.0
    r = smearing_masking_demo(W, e1)
    assert r[1] == W[1, 0] and np.sum(np.abs(r[1:]) > 1e-8) >= 2
    e = masking_pair(W)
    r = smearing_masking_demo(W, e)
    assert max(abs(r[0]), abs(r[1])) < 1e-8 * np.linalg.norm(e)
    assert np.count_nonzero(e) == 2


def test_nlml_closed_forms():
    hp = KernelHyperparameters([1.0], 1.0, 0.25)
    # n = 1, r = 0: value is 1/2 log(tau2 + s2) + 1/2 log 2 pi with a pure signal covariance
    val, _ = neg_log_marginal_likelihood(hp, [0.0], [[0.0]], [0.0], KernelSpec("rbf"), "constant")
    assert val == pytest.approx(0.5 * np.log(1.25) + 0.5 * np.log(2 * np.pi), rel=1e-12)
    X = np.linspace(0, 3, 6)[:, None]
    h1 = KernelHyperparameters([1.0], 1.0, 0.0)
    h2 = KernelHyperparameters([1.0], 2.0, 0.0)
    v1, _ = neg_log_marginal_likelihood(h1, [0.0], X, np.zeros(6), KernelSpec("rbf"), "constant")
    v2, _ = neg_log_marginal_likelihood(h2, [0.0], X, np.zeros(6), KernelSpec("rbf"), "constant")
    assert v2 - v1 == pytest.approx(3 * np.log(2), rel=1e-6)


def _fd_check(seed):
    rng = np.random.default_rng(100 + seed)
    kind = KINDS[seed % 4]
    kernel = KernelSpec(kind, alpha=1.5) if kind == "rational_quadratic" else KernelSpec(kind)
    d = 1 + seed % 3
    X = rng.uniform(-2, 2, (20, d))
    y = np.sin(X).sum(axis=1) + rng.normal(scale=0.2, size=20)
    hp = KernelHyperparameters(rng.uniform(0.5, 2, d), rng.uniform(0.5, 2), rng.uniform(0.01, 0.2))
    beta = rng.normal(size=d + 1)
    _, g = neg_log_marginal_likelihood(hp, beta, X, y, kernel, "linear")
    theta = hp.to_log()
    fd = np.empty_like(theta)
    for k in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[k] += 1e-5
        tm[k] -= 1e-5
        fp, _ = neg_log_marginal_likelihood(KernelHyperparameters.from_log(tp), beta, X, y, kernel, "linear")
        fm, _ = neg_log_marginal_likelihood(KernelHyperparameters.from_log(tm), beta, X, y, kernel, "linear")
        fd[k] = (fp - fm) / 2e-5
    return g, fd


@pytest.mark.parametrize("seed", range(10))
def test_nlml_gradient_finite_differences(seed):
    g, fd = _fd_check(seed)
    assert np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12) < 1e-4


def test_hyperparameter_recovery():
    # a single draw pins tau2 loosely, so the log estimates are averaged over draws
    truth = np.log([1.0, 1.0, 0.01])
    est = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        n = 100
        X = rng.uniform(0, 10, (n, 1))
        K = np.exp(-0.5 * (X - X.T) ** 2) + 1e-10 * np.eye(n)
        y = np.linalg.cholesky(K) @ rng.normal(size=n) + rng.normal(scale=0.1, size=n)
        res = optimize_hyperparameters(X, y, [0.0], KernelSpec("rbf"), "constant",
                                       init=KernelHyperparameters([1.0], 1.0, 0.01))
        assert res.value <= res.init_value
        est.append(res.hp.to_log())
    est = np.array(est)
    assert np.all(np.abs(est.mean(axis=0) - truth) <= 0.5)
    assert np.all(np.abs(est - truth) <= 1.0)


def test_pure_noise_goes_to_nugget():
    rng = np.random.default_rng(12)
    X = rng.uniform(0, 10, (100, 1))
    y = rng.normal(size=100)
    yc = y - y.mean()
    res = optimize_hyperparameters(X, yc, [0.0], KernelSpec("rbf"), "constant")
    assert res.hp.noise_variance >= 0.9 * np.var(yc)


def test_optimum_is_fixed_point():
    rng = np.random.default_rng(13)
    X = rng.uniform(0, 5, (40, 1))
    y = np.sin(X[:, 0]) + rng.normal(scale=0.1, size=40)
    first = optimize_hyperparameters(X, y, [0.0], KernelSpec("rbf"), "constant")
    again = optimize_hyperparameters(X, y, [0.0], KernelSpec("rbf"), "constant", init=first.hp, n_starts=1)
    np.testing.assert_allclose(again.hp.to_log(), first.hp.to_log(), atol=1e-3)


def test_train_exact_linear_plain():
    rng = np.random.default_rng(14)
    X = rng.uniform(-1, 1, (30, 2))
    y = X @ [2.0, -1.0] + 0.5
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = train(X, y, ModelSpec(basis="linear", mode="gpm", standardize=False, n_starts=2))
    np.testing.assert_allclose(model.beta, [0.5, 2.0, -1.0], atol=1e-6)
    assert model.hp.noise_variance <= 1e-8 * max(np.var(y), 1.0)


def test_train_clean_modes_agree():
    rng = np.random.default_rng(15)
    X = rng.uniform(-1, 1, (40, 2))
    y = np.sin(2 * X[:, 0]) + X[:, 1] + rng.normal(scale=0.05, size=40)
    kw = dict(basis="linear", huber_c=10.0, ps_b=1e6, n_starts=2)
    rpm = train(X, y, ModelSpec(mode="rpm", **kw))
    gpm = train(X, y, ModelSpec(mode="gpm", **kw))
    assert np.all(rpm.q_weights == 1.0) and np.all(rpm.weights.w == 1.0)
    assert np.max(np.abs(rpm.beta - gpm.beta)) / np.max(np.abs(gpm.beta)) < 1e-3


def test_model_invariants_and_round_trip(tmp_path):
    rng = np.random.default_rng(16)
    X = rng.uniform(-1, 1, (30, 2))
    y = X[:, 0] ** 2 + rng.normal(scale=0.05, size=30)
    model = train(X, y, ModelSpec(basis="linear", n_starts=1))
    L = model.chol_sigma
    assert np.linalg.norm(L @ L.T - model.sigma) <= 1e-8 * np.linalg.norm(model.sigma)
    with pytest.raises(ValueError):
        model.beta[0] = 1.0
    path = tmp_path / "m.json"
    save_model(model, path)
    again = load_model(path)
    Xs = rng.uniform(-1, 1, (5, 2))
    np.testing.assert_array_equal(predict(again, Xs).mean, predict(model, Xs).mean)
    assert again.to_json() == model.to_json()
    doc = json.loads(path.read_text())
    assert "weights" in doc
    gpm = train(X, y, ModelSpec(basis="linear", mode="gpm", n_starts=1))
    assert "weights" not in gpm.to_dict()
    assert TrainedModel.from_dict(gpm.to_dict()).weights is None


def test_influence_diagnostic():
    rng = np.random.default_rng(17)
    X = rng.normal(size=(40, 1))
    X[0] = 12.0
    y = X[:, 0] + rng.normal(scale=0.1, size=40)
    y[1] += 50.0
    model = train(X, y, ModelSpec(basis="linear", n_starts=1, standardize=False))
    i = 0
    w = model.weights.w[i]
    assert w < 1.0
    _, _, total = influence_diagnostic(model, i)
    _, _, total1 = influence_diagnostic(model, i, weight_override=1.0)
    np.testing.assert_allclose(total, w * total1, rtol=1e-12)
    _, _, quarter = influence_diagnostic(model, i, weight_override=0.25)
    assert np.linalg.norm(quarter) == pytest.approx(0.25 * np.linalg.norm(total1))
    ir, _, _ = influence_diagnostic(model, 1)
    assert abs(ir) == pytest.approx(1.5 / 0.8663855974622838, rel=1e-12)
    with pytest.raises(IndexError):
        influence_diagnostic(model, 40)
    gpm = train(X, y, ModelSpec(basis="linear", mode="gpm", n_starts=1))
    with pytest.raises(ConfigError):
        influence_diagnostic(gpm, 0)


def test_train_errors():
    with pytest.raises(DegreesOfFreedomError):
        train(np.zeros((4, 2)), np.zeros(4), ModelSpec(basis="linear"))
    with pytest.raises(InputShapeError):
        train(np.zeros((10, 2)), np.zeros(9), ModelSpec(basis="constant"))
    with pytest.raises(ConfigError):
        ModelSpec(mode="robustish")
    model = fixed_model(np.arange(6.0)[:, None], np.arange(6.0), "rbf", [1.0], 1.0, 0.1, "constant")
    with pytest.raises(InputShapeError):
        predict(model, np.zeros((2, 3)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_predictive_covariance_psd(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, (10, 2))
    y = rng.normal(size=10)
    model = fixed_model(X, y, KINDS[seed % 4], rng.uniform(0.3, 2, 2), 1.0, rng.uniform(0, 0.1))
    pred = predict(model, rng.uniform(-3, 3, (6, 2)))
    assert np.array_equal(pred.covariance, pred.covariance.T)
    assert np.linalg.eigvalsh(pred.covariance).min() >= -1e-10


def test_default_hyperparameters_positive():
    hp = default_hyperparameters(np.zeros((5, 2)), np.zeros(5))
    assert np.all(hp.length_scales > 0) and hp.signal_variance > 0
