"""GP regression for control-affine dynamics residuals.

Fits a zero-mean GP with the affine dot product compound kernel to scalar
residual measurements z_j ~ D(x_j, u_j).  Because the kernel is affine in
the augmented control y = [1, u^T], the posterior at a query state x is
fully described by an (m+1)-vector b(x) and an (m+1)x(m+1) matrix C(x):

    mean(x, u)     = b(x)^T [1; u]
    variance(x, u) = [1 u^T] C(x) [1; u]

The estimator follows the scikit-learn fit/predict protocol so it can be
dropped into pipelines and model-selection tooling; rows of the feature
matrix are the stacked [state, control] coordinates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, LinAlgError
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .kernels import AffineDotProductKernel, SquaredExponentialKernel, augment_controls

__all__ = ["AffinePrediction", "AffineResidualGP", "ResidualDataset"]

FLOAT_FMT = "%.17g"  # round-trip exact for IEEE doubles


@dataclass(frozen=True)
class AffinePrediction:
    """Posterior at one state: affine mean and quadratic variance in u.

    b : (m+1,) mean coefficients
    C : (m+1, m+1) symmetric positive-definite coefficient covariance
    G : symmetric PSD square root of C (G @ G == C)
    """

    b: np.ndarray
    C: np.ndarray
    G: np.ndarray

    def mean(self, u):
        y = np.concatenate([[1.0], np.atleast_1d(np.asarray(u, dtype=float))])
        return float(self.b @ y)

    def variance(self, u):
        y = np.concatenate([[1.0], np.atleast_1d(np.asarray(u, dtype=float))])
        return float(y @ self.C @ y)


def _symmetric_sqrt(C, clamp=1e-12):
    """Symmetric PSD square root via eigendecomposition, clamping tiny
    negative eigenvalues produced by round-off."""
    vals, vecs = np.linalg.eigh(0.5 * (C + C.T))
    vals = np.maximum(vals, clamp)
    return (vecs * np.sqrt(vals)) @ vecs.T


class AffineResidualGP(BaseEstimator, RegressorMixin):
    """GP regressor for residuals that are affine in the control input.

    Parameters
    ----------
    kernel : AffineDotProductKernel or None
        Compound kernel with control_dim + 1 components.  When None, a
        default of squared-exponential components with unit variance and
        unit lengthscales is built at fit time.
    control_dim : int
        Number of control inputs m; the last m columns of the feature
        matrix passed to :meth:`fit` are the controls.
    noise_std : float
        Measurement noise standard deviation added to the Gram diagonal.
    beta : float
        Confidence multiplier for :meth:`confidence_interval`.
    jitter, max_jitter : float
        Initial and maximal diagonal jitter used when the Cholesky
        factorization of the Gram matrix fails.
    """

    def __init__(self, kernel=None, control_dim=1, noise_std=0.1, beta=2.0,
                 jitter=1e-10, max_jitter=1e-6):
        self.kernel = kernel
        self.control_dim = control_dim
        self.noise_std = noise_std
        self.beta = beta
        self.jitter = jitter
        self.max_jitter = max_jitter

    # -- fitting -----------------------------------------------------------

    def _split(self, X):
        m = self.control_dim
        if X.shape[1] <= m:
            raise ValueError(
                f"need at least {m + 1} feature columns (states + {m} controls)"
            )
        return X[:, : X.shape[1] - m], X[:, X.shape[1] - m:]

    def fit(self, X, y=None):
        """Fit the posterior to stacked [state, control] rows and residuals.

        An empty dataset (0 rows) is allowed and yields the prior.
        """
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            X = np.atleast_2d(X)
        if X.shape[0] == 0:
            if X.shape[1] <= self.control_dim:
                raise ValueError("empty dataset still needs feature columns")
            states = X[:, : X.shape[1] - self.control_dim]
            controls = X[:, X.shape[1] - self.control_dim:]
            y = np.zeros(0)
        else:
            X = check_array(X)
            y = np.asarray(y, dtype=float).ravel()
            if y.shape[0] != X.shape[0]:
                raise ValueError("X and y have inconsistent lengths")
            states, controls = self._split(X)

        self.n_features_in_ = X.shape[1]
        self.state_dim_ = X.shape[1] - self.control_dim
        kernel = self.kernel
        if kernel is None:
            kernel = AffineDotProductKernel(
                [SquaredExponentialKernel(1.0, np.ones(self.state_dim_))
                 for _ in range(self.control_dim + 1)]
            )
        if kernel.control_dim != self.control_dim:
            raise ValueError(
                f"kernel has {kernel.control_dim + 1} components but "
                f"control_dim={self.control_dim} needs {self.control_dim + 1}"
            )
        self.kernel_ = kernel
        self.X_train_ = states
        self.Y_train_ = augment_controls(controls)
        self.z_train_ = y

        n = states.shape[0]
        if n == 0:
            self.chol_lower_ = np.zeros((0, 0))
            self.alpha_ = np.zeros(0)
            self.jitter_used_ = 0.0
            return self

        K = kernel.gram(states, self.Y_train_)
        K[np.diag_indices_from(K)] += self.noise_std**2
        lower, used = self._factorize(K)
        self.chol_lower_ = lower
        self.jitter_used_ = used
        self.alpha_ = cho_solve((lower, True), y)
        return self

    def _factorize(self, K):
        try:
            return cholesky(K, lower=True), 0.0
        except LinAlgError:
            pass
        jit = self.jitter
        while jit <= self.max_jitter:
            try:
                return cholesky(K + jit * np.eye(K.shape[0]), lower=True), jit
            except LinAlgError:
                jit *= 10.0
        raise np.linalg.LinAlgError(
            "Gram matrix is numerically degenerate even with "
            f"jitter up to {self.max_jitter}"
        )

    # -- prediction --------------------------------------------------------

    def _check_state(self, x):
        check_is_fitted(self, "kernel_")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.state_dim_,):
            raise ValueError(f"state must have dimension {self.state_dim_}")
        return x

    def predict_affine(self, x):
        """Mean coefficients b(x), covariance C(x) and its square root G(x)."""
        x = self._check_state(x)
        prior = np.diag(self.kernel_.prior_diag(x))
        if self.X_train_.shape[0] == 0:
            C = prior
            b = np.zeros(self.control_dim + 1)
        else:
            Kxy = self.kernel_.cross_section(x, self.X_train_, self.Y_train_)
            b = Kxy @ self.alpha_
            V = cho_solve((self.chol_lower_, True), Kxy.T)
            C = prior - Kxy @ V
            C = 0.5 * (C + C.T)
        return AffinePrediction(b=b, C=C, G=_symmetric_sqrt(C))

    def predict_mean_var(self, x, u):
        """Posterior mean and variance of the residual at (x, u)."""
        pred = self.predict_affine(x)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (self.control_dim,):
            raise ValueError(f"control must have dimension {self.control_dim}")
        return pred.mean(u), max(pred.variance(u), 0.0)

    def confidence_interval(self, x, u):
        """(mean - beta*std, mean + beta*std) at a query point."""
        mean, var = self.predict_mean_var(x, u)
        half = self.beta * np.sqrt(var)
        return mean - half, mean + half

    def predict(self, X, return_std=False):
        """Scikit-learn predict over stacked [state, control] rows."""
        check_is_fitted(self, "kernel_")
        X = check_array(X)
        means = np.empty(X.shape[0])
        stds = np.empty(X.shape[0])
        split = X.shape[1] - self.control_dim
        for i, row in enumerate(X):
            mean, var = self.predict_mean_var(row[:split], row[split:])
            means[i] = mean
            stds[i] = np.sqrt(var)
        if return_std:
            return means, stds
        return means

    @property
    def n_samples_(self):
        check_is_fitted(self, "kernel_")
        return self.X_train_.shape[0]


class ResidualDataset:
    """Paired residual measurements for the CLF and CBF channels.

    Stores per-sample state x_j, control u_j and the two scalar residual
    measurements z_V, z_B.  Rows accumulate across learning episodes.
    """

    def __init__(self, state_dim, control_dim):
        self.state_dim = int(state_dim)
        self.control_dim = int(control_dim)
        self.states = np.zeros((0, state_dim))
        self.controls = np.zeros((0, control_dim))
        self.z_clf = np.zeros(0)
        self.z_cbf = np.zeros(0)

    def __len__(self):
        return self.states.shape[0]

    def append(self, x, u, z_v, z_b):
        self.states = np.vstack([self.states, np.atleast_2d(x)])
        self.controls = np.vstack([self.controls, np.atleast_2d(u)])
        self.z_clf = np.append(self.z_clf, z_v)
        self.z_cbf = np.append(self.z_cbf, z_b)

    def extend(self, other):
        if (other.state_dim, other.control_dim) != (self.state_dim, self.control_dim):
            raise ValueError("dataset dimensions do not match")
        self.states = np.vstack([self.states, other.states])
        self.controls = np.vstack([self.controls, other.controls])
        self.z_clf = np.concatenate([self.z_clf, other.z_clf])
        self.z_cbf = np.concatenate([self.z_cbf, other.z_cbf])

    def features(self):
        """Stacked [state, control] rows for AffineResidualGP.fit."""
        return np.hstack([self.states, self.controls])

    def header(self):
        return (
            [f"x{i}" for i in range(self.state_dim)]
            + [f"u{i}" for i in range(self.control_dim)]
            + ["z_V", "z_B"]
        )

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            for i in range(len(self)):
                row = (
                    list(self.states[i]) + list(self.controls[i])
                    + [self.z_clf[i], self.z_cbf[i]]
                )
                writer.writerow([FLOAT_FMT % val for val in row])

    @classmethod
    def load_csv(cls, path, state_dim, control_dim):
        ds = cls(state_dim, control_dim)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ds.header():
                raise ValueError(f"unexpected dataset header {header!r} in {path}")
            rows = [[float(v) for v in row] for row in reader if row]
        if rows:
            data = np.array(rows)
            ds.states = data[:, :state_dim]
            ds.controls = data[:, state_dim:state_dim + control_dim]
            ds.z_clf = data[:, state_dim + control_dim]
            ds.z_cbf = data[:, state_dim + control_dim + 1]
        return ds
