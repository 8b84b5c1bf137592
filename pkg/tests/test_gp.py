import numpy as np
import pytest

from gpcbf.gp import AffineResidualGP, ResidualDataset
from gpcbf.kernels import (AffineDotProductKernel, ConstantKernel,
                           SquaredExponentialKernel, augment_controls)


def constant_adp(m):
    return AffineDotProductKernel([ConstantKernel(1.0) for _ in range(m + 1)])


def random_adp(rng, n, m):
    return AffineDotProductKernel([
        SquaredExponentialKernel(rng.uniform(0.3, 2.0),
                                 rng.uniform(0.5, 3.0, size=n))
        for _ in range(m + 1)
    ])


def fit_gp(kernel, X, U, z, noise_std=0.1, beta=2.0, control_dim=None):
    m = U.shape[1] if control_dim is None else control_dim
    gp = AffineResidualGP(kernel=kernel, control_dim=m, noise_std=noise_std,
                          beta=beta)
    gp.fit(np.hstack([X, U]), z)
    return gp


def generic_gp_oracle(kernel, X, Y, z, noise_std, x_star, y_star):
    """Plain GP posterior treating the compound kernel as a monolithic
    kernel on stacked (state, augmented control) inputs."""
    N = X.shape[0]
    K = np.empty((N, N))
    for i in range(N):
        for j in range(N):
            K[i, j] = kernel(X[i], Y[i], X[j], Y[j])
    ks = np.array([kernel(x_star, y_star, X[j], Y[j]) for j in range(N)])
    kss = kernel(x_star, y_star, x_star, y_star)
    A = K + noise_std**2 * np.eye(N)
    sol = np.linalg.solve(A, ks)
    mean = float(z @ np.linalg.solve(A, ks))
    var = float(kss - ks @ sol)
    return mean, var


class TestFit:
    def test_empty_dataset_gives_prior(self):
        gp = AffineResidualGP(kernel=constant_adp(1), control_dim=1,
                              noise_std=1.0)
        gp.fit(np.zeros((0, 2)), np.zeros(0))
        pred = gp.predict_affine(np.array([0.7]))
        assert np.allclose(pred.b, 0.0)
        assert np.allclose(pred.C, np.eye(2))

    def test_single_point_constant_kernel_alpha(self):
        # K_c = [1 1] Diag(1,1) [1;1] = 2, plus unit noise gives alpha = z/3
        gp = fit_gp(constant_adp(1), np.zeros((1, 1)), np.array([[1.0]]),
                    np.array([3.0]), noise_std=1.0)
        assert gp.alpha_ == pytest.approx([1.0])

    def test_single_point_affine_prediction(self):
        gp = fit_gp(constant_adp(1), np.zeros((1, 1)), np.array([[1.0]]),
                    np.array([3.0]), noise_std=1.0)
        pred = gp.predict_affine(np.array([5.0]))
        assert pred.b == pytest.approx([1.0, 1.0])
        assert pred.C == pytest.approx(np.array([[2 / 3, -1 / 3],
                                                 [-1 / 3, 2 / 3]]))

    def test_duplicate_points_jitter_fit(self):
        X = np.zeros((4, 1))
        U = np.ones((4, 1))
        z = np.full(4, 2.0)
        gp = fit_gp(constant_adp(1), X, U, z, noise_std=0.0)
        assert gp.jitter_used_ > 0.0
        mean, var = gp.predict_mean_var(np.zeros(1), np.ones(1))
        assert np.isfinite(mean) and np.isfinite(var)

    def test_factor_reconstructs_gram(self):
        rng = np.random.default_rng(0)
        kernel = random_adp(rng, 2, 1)
        X = rng.normal(size=(8, 2))
        U = rng.normal(size=(8, 1))
        z = rng.normal(size=8)
        gp = fit_gp(kernel, X, U, z, noise_std=0.3)
        K = kernel.gram(X, augment_controls(U)) + 0.09 * np.eye(8)
        rec = gp.chol_lower_ @ gp.chol_lower_.T
        assert np.allclose(rec, K, rtol=1e-8)

    def test_rejects_negative_noise_and_bad_kernel(self):
        gp = AffineResidualGP(kernel=constant_adp(2), control_dim=1)
        with pytest.raises(ValueError):
            gp.fit(np.zeros((1, 2)), np.zeros(1))
        gp = AffineResidualGP(control_dim=1, noise_std=-1.0)
        with pytest.raises(ValueError):
            gp.fit(np.zeros((1, 2)), np.zeros(1))


class TestPrediction:
    def test_single_point_mean_var_at_zero_control(self):
        gp = fit_gp(constant_adp(1), np.zeros((1, 1)), np.array([[1.0]]),
                    np.array([3.0]), noise_std=1.0)
        mean, var = gp.predict_mean_var(np.zeros(1), np.zeros(1))
        assert mean == pytest.approx(1.0)
        assert var == pytest.approx(2 / 3)

    def test_prior_mean_var_expansion(self):
        gp = AffineResidualGP(kernel=constant_adp(2), control_dim=2,
                              noise_std=0.5)
        gp.fit(np.zeros((0, 3)), np.zeros(0))
        u = np.array([1.5, -0.3])
        mean, var = gp.predict_mean_var(np.zeros(1), u)
        assert mean == 0.0
        assert var == pytest.approx(1.0 + np.sum(u**2), rel=1e-12)

    def test_variance_equals_squared_root_norm(self):
        rng = np.random.default_rng(1)
        kernel = random_adp(rng, 2, 2)
        gp = fit_gp(kernel, rng.normal(size=(10, 2)), rng.normal(size=(10, 2)),
                    rng.normal(size=10), noise_std=0.2)
        for _ in range(5):
            x = rng.normal(size=2)
            u = rng.normal(size=2)
            pred = gp.predict_affine(x)
            _, var = gp.predict_mean_var(x, u)
            y = np.concatenate([[1.0], u])
            assert var == pytest.approx(np.linalg.norm(pred.G @ y) ** 2,
                                        rel=1e-9, abs=1e-12)

    def test_root_squares_to_covariance(self):
        rng = np.random.default_rng(2)
        kernel = random_adp(rng, 1, 1)
        gp = fit_gp(kernel, rng.normal(size=(6, 1)), rng.normal(size=(6, 1)),
                    rng.normal(size=6), noise_std=0.4)
        pred = gp.predict_affine(rng.normal(size=1))
        assert np.allclose(pred.G @ pred.G, pred.C, rtol=1e-8, atol=1e-12)
        assert np.allclose(pred.G, pred.G.T)

    def test_mean_affine_in_control(self):
        rng = np.random.default_rng(3)
        kernel = random_adp(rng, 2, 3)
        gp = fit_gp(kernel, rng.normal(size=(12, 2)), rng.normal(size=(12, 3)),
                    rng.normal(size=12), noise_std=0.2)
        x = rng.normal(size=2)
        u1, u2 = rng.normal(size=3), rng.normal(size=3)
        for alpha in (0.0, 0.3, 0.9):
            u = alpha * u1 + (1 - alpha) * u2
            m, _ = gp.predict_mean_var(x, u)
            m1, _ = gp.predict_mean_var(x, u1)
            m2, _ = gp.predict_mean_var(x, u2)
            assert m == pytest.approx(alpha * m1 + (1 - alpha) * m2, abs=1e-10)

    def test_variance_quadratic_form_consistency(self):
        rng = np.random.default_rng(4)
        kernel = random_adp(rng, 1, 2)
        gp = fit_gp(kernel, rng.normal(size=(9, 1)), rng.normal(size=(9, 2)),
                    rng.normal(size=9), noise_std=0.3)
        x = rng.normal(size=1)
        pred = gp.predict_affine(x)
        for _ in range(5):
            u = rng.normal(size=2)
            y = np.concatenate([[1.0], u])
            _, var = gp.predict_mean_var(x, u)
            assert var == pytest.approx(float(y @ pred.C @ y), abs=1e-10)

    def test_posterior_variance_below_prior(self):
        rng = np.random.default_rng(5)
        kernel = random_adp(rng, 2, 1)
        X = rng.normal(size=(15, 2))
        U = rng.normal(size=(15, 1))
        z = rng.normal(size=15)
        gp = fit_gp(kernel, X, U, z, noise_std=0.2)
        prior = AffineResidualGP(kernel=kernel, control_dim=1, noise_std=0.2)
        prior.fit(np.zeros((0, 3)), np.zeros(0))
        for _ in range(20):
            x = rng.normal(size=2)
            u = rng.normal(size=1)
            _, var_post = gp.predict_mean_var(x, u)
            _, var_prior = prior.predict_mean_var(x, u)
            assert var_post <= var_prior + 1e-8

    def test_interpolation_small_noise(self):
        rng = np.random.default_rng(6)
        kernel = random_adp(rng, 1, 1)
        X = np.linspace(-2, 2, 7)[:, None]
        U = rng.normal(size=(7, 1))
        z = rng.normal(size=7)
        noise = 1e-5
        gp = fit_gp(kernel, X, U, z, noise_std=noise)
        for j in range(7):
            mean, _ = gp.predict_mean_var(X[j], U[j])
            assert abs(mean - z[j]) <= 3 * noise

    def test_generic_gp_oracle_equivalence(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n = int(rng.integers(1, 4))
            m = int(rng.integers(1, 4))
            N = int(rng.integers(1, 21))
            kernel = random_adp(rng, n, m)
            X = rng.normal(size=(N, n))
            U = rng.normal(size=(N, m))
            z = rng.normal(size=N)
            noise = rng.uniform(0.05, 0.5)
            gp = fit_gp(kernel, X, U, z, noise_std=noise)
            Y = augment_controls(U)
            for _ in range(3):
                x_star = rng.normal(size=n)
                u_star = rng.normal(size=m)
                mean, var = gp.predict_mean_var(x_star, u_star)
                y_star = np.concatenate([[1.0], u_star])
                mean_o, var_o = generic_gp_oracle(kernel, X, Y, z, noise,
                                                  x_star, y_star)
                assert mean == pytest.approx(mean_o, rel=1e-8, abs=1e-10)
                assert var == pytest.approx(var_o, rel=1e-8, abs=1e-10)


class TestConfidenceInterval:
    def test_zero_multiplier_collapses(self):
        gp = fit_gp(constant_adp(1), np.zeros((1, 1)), np.array([[1.0]]),
                    np.array([3.0]), noise_std=1.0, beta=0.0)
        lo, hi = gp.confidence_interval(np.zeros(1), np.zeros(1))
        assert lo == hi == pytest.approx(1.0)

    def test_single_point_interval(self):
        gp = fit_gp(constant_adp(1), np.zeros((1, 1)), np.array([[1.0]]),
                    np.array([3.0]), noise_std=1.0, beta=2.0)
        lo, hi = gp.confidence_interval(np.zeros(1), np.zeros(1))
        half = 2.0 * np.sqrt(2 / 3)
        assert lo == pytest.approx(1.0 - half)
        assert hi == pytest.approx(1.0 + half)

    def test_monte_carlo_coverage(self):
        # in-model affine truth, bounded noise: beta=2 band covers >= 95%
        rng = np.random.default_rng(8)
        kernel = AffineDotProductKernel([
            SquaredExponentialKernel(1.0, [1.0, 1.0]),
            SquaredExponentialKernel(1.0, [1.0, 1.0]),
        ])
        centers = rng.uniform(-2, 2, size=(4, 2))
        coef = rng.normal(scale=0.4, size=(2, 4))

        def truth(x, u):
            k0 = [kernel.components[0](x, c) for c in centers]
            k1 = [kernel.components[1](x, c) for c in centers]
            return coef[0] @ k0 + (coef[1] @ k1) * u[0]

        noise = 0.05
        N = 30
        X = rng.uniform(-2, 2, size=(N, 2))
        U = rng.uniform(-2, 2, size=(N, 1))
        z = np.array([truth(X[i], U[i]) for i in range(N)])
        z += noise * rng.uniform(-1, 1, size=N)
        gp = fit_gp(kernel, X, U, z, noise_std=noise, beta=2.0)
        hits = 0
        trials = 200
        for _ in range(trials):
            x = rng.uniform(-2, 2, size=2)
            u = rng.uniform(-2, 2, size=1)
            lo, hi = gp.confidence_interval(x, u)
            hits += lo <= truth(x, u) <= hi
        assert hits / trials >= 0.95


class TestSklearnSurface:
    def test_predict_batch_matches_pointwise(self):
        rng = np.random.default_rng(9)
        kernel = random_adp(rng, 2, 1)
        gp = fit_gp(kernel, rng.normal(size=(8, 2)), rng.normal(size=(8, 1)),
                    rng.normal(size=8), noise_std=0.2)
        Xq = rng.normal(size=(6, 3))
        means, stds = gp.predict(Xq, return_std=True)
        for i in range(6):
            m, v = gp.predict_mean_var(Xq[i, :2], Xq[i, 2:])
            assert means[i] == pytest.approx(m)
            assert stds[i] == pytest.approx(np.sqrt(v))

    def test_get_params_round_trip(self):
        gp = AffineResidualGP(control_dim=2, noise_std=0.3, beta=1.5)
        params = gp.get_params()
        clone = AffineResidualGP(**params)
        assert clone.control_dim == 2
        assert clone.noise_std == 0.3
        assert clone.beta == 1.5

    def test_predict_before_fit_raises(self):
        from sklearn.exceptions import NotFittedError
        gp = AffineResidualGP(control_dim=1)
        with pytest.raises(NotFittedError):
            gp.predict_affine(np.zeros(2))

    def test_score_is_regression_r2(self):
        rng = np.random.default_rng(10)
        kernel = random_adp(rng, 1, 1)
        X = rng.normal(size=(20, 1))
        U = rng.normal(size=(20, 1))
        z = np.sin(X[:, 0]) + 0.5 * U[:, 0]
        gp = fit_gp(kernel, X, U, z, noise_std=0.05)
        score = gp.score(np.hstack([X, U]), z)
        assert score > 0.9


class TestResidualDataset:
    def test_append_and_features(self):
        ds = ResidualDataset(2, 1)
        ds.append([1.0, 2.0], [3.0], 0.1, -0.2)
        ds.append([4.0, 5.0], [6.0], 0.3, 0.4)
        assert len(ds) == 2
        feats = ds.features()
        assert feats.shape == (2, 3)
        assert np.allclose(feats[1], [4.0, 5.0, 6.0])

    def test_csv_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(11)
        ds = ResidualDataset(2, 1)
        for _ in range(17):
            ds.append(rng.normal(size=2) * 1e3, rng.normal(size=1) / 7,
                      rng.normal() * np.pi, rng.normal() / 3)
        path = tmp_path / "data.csv"
        ds.save_csv(path)
        back = ResidualDataset.load_csv(path, 2, 1)
        assert np.array_equal(back.states, ds.states)
        assert np.array_equal(back.controls, ds.controls)
        assert np.array_equal(back.z_clf, ds.z_clf)
        assert np.array_equal(back.z_cbf, ds.z_cbf)

    def test_load_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            ResidualDataset.load_csv(path, 2, 1)
