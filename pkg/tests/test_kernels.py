import numpy as np
import pytest

from gpcbf.kernels import (AffineDotProductKernel, ConstantKernel,
                           SquaredExponentialKernel, augment_controls)


def test_se_kernel_diagonal_is_signal_variance():
    k = SquaredExponentialKernel(signal_variance=1.0, lengthscales=1.0)
    assert k([0.0], [0.0]) == 1.0
    k2 = SquaredExponentialKernel(signal_variance=3.5, lengthscales=[2.0, 0.5])
    x = np.array([1.0, -2.0])
    assert k2(x, x) == pytest.approx(3.5)


def test_constant_kernel_everywhere():
    k = ConstantKernel(1.0)
    assert k([0.0], [5.0]) == 1.0
    assert k([1.0, 2.0], [-3.0, 4.0]) == 1.0


def test_se_kernel_hand_value():
    # exp(-||x - x'||^2 / (2 l^2)) at distance 2 with unit lengthscale
    k = SquaredExponentialKernel(1.0, 1.0)
    assert k([0.0], [2.0]) == pytest.approx(np.exp(-2.0), rel=1e-12)


def test_se_kernel_rejects_bad_parameters():
    with pytest.raises(ValueError):
        SquaredExponentialKernel(signal_variance=0.0)
    with pytest.raises(ValueError):
        SquaredExponentialKernel(lengthscales=[1.0, -1.0])
    k = SquaredExponentialKernel(1.0, [1.0, 1.0])
    with pytest.raises(ValueError):
        k([0.0], [0.0])


def constant_adp(m):
    return AffineDotProductKernel([ConstantKernel(1.0) for _ in range(m + 1)])


def test_adp_eval_constant_components():
    kc = constant_adp(1)
    x = np.array([0.3])
    assert kc(x, [1.0, 1.0], x, [1.0, 1.0]) == pytest.approx(2.0)


def test_adp_eval_first_component_only():
    comps = [SquaredExponentialKernel(1.7, [1.0, 1.0]),
             ConstantKernel(0.5), ConstantKernel(2.0)]
    kc = AffineDotProductKernel(comps)
    x, xp = np.array([0.1, 0.2]), np.array([-0.4, 1.0])
    y = np.array([1.0, 0.0, 0.0])
    assert kc(x, y, xp, y) == pytest.approx(comps[0](x, xp), rel=1e-12)


def test_adp_eval_dot_product_expansion():
    kc = constant_adp(1)
    x = np.zeros(1)
    for u, up in [(0.5, -2.0), (3.0, 3.0), (0.0, 7.0)]:
        val = kc(x, [1.0, u], x, [1.0, up])
        assert val == pytest.approx(1.0 + u * up, rel=1e-12)


def test_adp_symmetry():
    rng = np.random.default_rng(0)
    kc = AffineDotProductKernel([
        SquaredExponentialKernel(1.3, [0.7, 2.0]),
        SquaredExponentialKernel(0.4, [1.5, 0.9]),
        ConstantKernel(2.0),
    ])
    for _ in range(50):
        x, xp = rng.normal(size=2), rng.normal(size=2)
        y = np.array([1.0, rng.normal(), rng.normal()])
        yp = np.array([1.0, rng.normal(), rng.normal()])
        a = kc(x, y, xp, yp)
        b = kc(xp, yp, x, y)
        assert a == pytest.approx(b, rel=1e-12)


def test_adp_bilinear_in_augmented_inputs():
    # scaling y scales the value linearly (y[0] == 1 relaxed on purpose)
    rng = np.random.default_rng(1)
    kc = AffineDotProductKernel([
        SquaredExponentialKernel(1.0, [1.0]),
        SquaredExponentialKernel(2.0, [3.0]),
    ])
    for _ in range(20):
        x, xp = rng.normal(size=1), rng.normal(size=1)
        y, yp = rng.normal(size=2), rng.normal(size=2)
        alpha = rng.normal()
        base = kc(x, y, xp, yp)
        assert kc(x, alpha * y, xp, yp) == pytest.approx(alpha * base, rel=1e-10)
        assert kc(x, y, xp, alpha * yp) == pytest.approx(alpha * base, rel=1e-10)


def test_gram_single_input():
    kc = constant_adp(1)
    K = kc.gram(np.zeros((1, 1)), np.array([[1.0, 1.0]]))
    assert K.shape == (1, 1)
    assert K[0, 0] == pytest.approx(2.0)


def test_gram_duplicate_inputs_rank_deficient():
    kc = AffineDotProductKernel([
        SquaredExponentialKernel(1.0, [1.0, 1.0]),
        SquaredExponentialKernel(1.0, [1.0, 1.0]),
    ])
    X = np.array([[0.5, -1.0], [0.5, -1.0]])
    Y = augment_controls(np.array([[2.0], [2.0]]))
    K = kc.gram(X, Y)
    eigs = np.linalg.eigvalsh(K)
    assert eigs[0] == pytest.approx(0.0, abs=1e-10 * eigs[-1])


def test_gram_matches_pairwise_eval():
    rng = np.random.default_rng(2)
    kc = AffineDotProductKernel([
        SquaredExponentialKernel(0.8, [1.0, 2.0]),
        SquaredExponentialKernel(1.5, [0.5, 1.0]),
        ConstantKernel(0.3),
    ])
    X = rng.normal(size=(3, 2))
    Y = augment_controls(rng.normal(size=(3, 2)))
    K = kc.gram(X, Y)
    for i in range(3):
        for j in range(3):
            assert K[i, j] == pytest.approx(kc(X[i], Y[i], X[j], Y[j]),
                                            rel=1e-12, abs=1e-14)


def test_gram_positive_semidefinite_random_sets():
    rng = np.random.default_rng(3)
    for trial in range(20):
        m = int(rng.integers(1, 4))
        n = int(rng.integers(1, 4))
        comps = [SquaredExponentialKernel(rng.uniform(0.2, 2.0),
                                          rng.uniform(0.5, 3.0, size=n))
                 for _ in range(m + 1)]
        kc = AffineDotProductKernel(comps)
        N = int(rng.integers(2, 12))
        X = rng.normal(size=(N, n))
        Y = augment_controls(rng.normal(size=(N, m)))
        K = kc.gram(X, Y)
        eigs = np.linalg.eigvalsh(K)
        assert eigs[0] >= -1e-8 * max(np.max(np.diag(K)), 1e-30)


def test_gram_rejects_empty_input():
    kc = constant_adp(1)
    with pytest.raises(ValueError):
        kc.gram(np.zeros((0, 1)), np.zeros((0, 2)))


def test_cross_section_shape_and_values():
    rng = np.random.default_rng(4)
    kc = AffineDotProductKernel([
        SquaredExponentialKernel(1.0, [1.0]),
        SquaredExponentialKernel(0.5, [2.0]),
    ])
    X = rng.normal(size=(5, 1))
    Y = augment_controls(rng.normal(size=(5, 1)))
    x_star = np.array([0.2])
    Kxy = kc.cross_section(x_star, X, Y)
    assert Kxy.shape == (2, 5)
    for j in range(5):
        for i, comp in enumerate(kc.components):
            assert Kxy[i, j] == pytest.approx(comp(x_star, X[j]) * Y[j, i],
                                              rel=1e-12)


def test_augment_controls_leading_ones():
    U = np.array([[1.5], [-2.0], [0.0]])
    Y = augment_controls(U)
    assert Y.shape == (3, 2)
    assert np.all(Y[:, 0] == 1.0)
    assert np.all(Y[:, 1] == U[:, 0])
