"""Base kernels on state space and the affine dot product compound kernel.

The compound kernel acts on pairs ``(x, y)`` where ``x`` is a state and
``y = [1, u^T]^T`` is an augmented control.  It is built from ``m + 1``
scalar kernels on the state space:

    k_c((x, y), (x', y')) = sum_i k_i(x, x') * y_i * y'_i

which makes GP posterior means affine and variances quadratic in the
control ``u``.  That structure is what the downstream second-order cone
controllers rely on.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SquaredExponentialKernel",
    "ConstantKernel",
    "AffineDotProductKernel",
    "augment_controls",
]


def _as_2d(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[np.newaxis, :]
    return X


class SquaredExponentialKernel:
    """Squared-exponential kernel k(x, x') = s2 * exp(-0.5 * sum ((x-x')/l)^2).

    Parameters
    ----------
    signal_variance : float
        Prior variance s2 > 0; equals k(x, x).
    lengthscales : float or array-like
        One positive lengthscale per state dimension (a scalar is
        broadcast at evaluation time).
    """

    def __init__(self, signal_variance=1.0, lengthscales=1.0):
        if signal_variance <= 0:
            raise ValueError("signal_variance must be positive")
        ls = np.atleast_1d(np.asarray(lengthscales, dtype=float))
        if np.any(ls <= 0):
            raise ValueError("lengthscales must be positive")
        self.signal_variance = float(signal_variance)
        self.lengthscales = ls

    def _check_dim(self, d):
        if self.lengthscales.size not in (1, d):
            raise ValueError(
                f"kernel expects {self.lengthscales.size}-dimensional states, got {d}"
            )

    def __call__(self, x, xp):
        return float(self.cross(_as_2d(x), _as_2d(xp))[0, 0])

    def cross(self, X1, X2):
        """Kernel matrix between the rows of X1 (N1, d) and X2 (N2, d)."""
        X1, X2 = _as_2d(X1), _as_2d(X2)
        if X1.shape[1] != X2.shape[1]:
            raise ValueError("state dimension mismatch")
        self._check_dim(X1.shape[1])
        A = X1 / self.lengthscales
        B = X2 / self.lengthscales
        sq = (
            np.sum(A * A, axis=1)[:, None]
            - 2.0 * (A @ B.T)
            + np.sum(B * B, axis=1)[None, :]
        )
        return self.signal_variance * np.exp(-0.5 * np.maximum(sq, 0.0))

    def diag_value(self):
        return self.signal_variance

    def __repr__(self):
        return (
            f"SquaredExponentialKernel(signal_variance={self.signal_variance}, "
            f"lengthscales={self.lengthscales.tolist()})"
        )


class ConstantKernel:
    """Constant kernel k(x, x') = s2 for every pair of states."""

    def __init__(self, signal_variance=1.0):
        if signal_variance <= 0:
            raise ValueError("signal_variance must be positive")
        self.signal_variance = float(signal_variance)

    def __call__(self, x, xp):
        return self.signal_variance

    def cross(self, X1, X2):
        X1, X2 = _as_2d(X1), _as_2d(X2)
        return np.full((X1.shape[0], X2.shape[0]), self.signal_variance)

    def diag_value(self):
        return self.signal_variance

    def __repr__(self):
        return f"ConstantKernel(signal_variance={self.signal_variance})"


def augment_controls(U):
    """Stack a leading column of ones onto a control matrix.

    U has shape (N, m); the result Y has shape (N, m + 1) with
    Y[:, 0] == 1, i.e. each row is y = [1, u^T].
    """
    U = _as_2d(U)
    return np.hstack([np.ones((U.shape[0], 1)), U])


class AffineDotProductKernel:
    """Compound kernel on (state, augmented control) pairs.

    Parameters
    ----------
    components : sequence
        m + 1 base kernels, one per entry of the augmented control
        y = [1, u^T]; ``components[0]`` weighs the drift part and
        ``components[i]`` the i-th control channel.
    """

    def __init__(self, components):
        components = list(components)
        if len(components) < 1:
            raise ValueError("need at least one component kernel")
        self.components = components

    @property
    def control_dim(self):
        return len(self.components) - 1

    def __call__(self, x, y, xp, yp):
        """Evaluate k_c((x, y), (x', y')) = sum_i k_i(x, x') y_i y'_i."""
        y = np.asarray(y, dtype=float)
        yp = np.asarray(yp, dtype=float)
        if y.shape != (len(self.components),) or yp.shape != (len(self.components),):
            raise ValueError(
                f"augmented controls must have length {len(self.components)}"
            )
        vals = np.array([k(x, xp) for k in self.components])
        return float(np.sum(vals * y * yp))

    def gram(self, X, Y):
        """Gram matrix over a dataset.

        X has shape (N, n) of states the rows of Y, shape (N, m + 1), are
        the matching augmented controls.  Entry (a, b) is
        k_c((x_a, y_a), (x_b, y_b)); the result is symmetric PSD.
        """
        X, Y = _as_2d(X), _as_2d(Y)
        N = X.shape[0]
        if N == 0:
            raise ValueError("gram matrix of an empty input set")
        if Y.shape != (N, len(self.components)):
            raise ValueError("Y must have shape (N, m + 1) matching the components")
        K = np.zeros((N, N))
        for i, k in enumerate(self.components):
            K += k.cross(X, X) * np.outer(Y[:, i], Y[:, i])
        return 0.5 * (K + K.T)

    def cross_section(self, x_star, X, Y):
        """Cross-covariance block between one query state and a dataset.

        Returns the (m + 1, N) matrix whose (i, j) entry is
        k_i(x_star, x_j) * Y[j, i]; contracting it with a query
        augmentation y_star on the left gives the usual kernel vector.
        """
        X, Y = _as_2d(X), _as_2d(Y)
        ks = np.vstack([k.cross(x_star, X)[0] for k in self.components])
        return ks * Y.T

    def prior_diag(self, x_star):
        """Diagonal of prior coefficient covariances [k_i(x, x)] at a state."""
        return np.array([k.diag_value() for k in self.components])

    def __repr__(self):
        return f"AffineDotProductKernel({self.components!r})"
