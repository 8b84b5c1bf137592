"""Exact pointwise feasibility analysis of a single SOC constraint.

The chance-constrained controllers reduce to one hard constraint

    ||Q u + r|| <= w u + v

with Q of shape (m+1, m) and full column rank.  Whether some control u
satisfies it is decided exactly by the sign of the minimum eigenvalue of
F = Q^T Q - w^T w together with one scalar side condition per case:

  * lambda_min < 0  (hyperbolic): always feasible; the uncertainty growth
    along the best input direction is beaten by the constraint's linear
    gain, so scaling up that direction eventually satisfies it.
  * lambda_min > 0  (elliptic): the candidate set is bounded; feasible
    iff the quadratic form can be nonpositive at all (necessary
    condition) and the linear side v - w F^{-1} h is >= 0.
  * lambda_min = 0  (parabolic): feasible iff v + w u0 > 0 at the
    least-squares point u0 = -(Q^T Q)^{-1} Q^T r.

Every feasible verdict carries a witness control that satisfies the
constraint, so callers can cross-check the classification directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SocConstraint",
    "FeasibilityReport",
    "squared_constraint_matrix",
    "necessary_condition",
    "classify",
    "brute_force_feasible",
]

CASE_HYPERBOLIC = "hyperbolic"
CASE_ELLIPTIC = "elliptic"
CASE_PARABOLIC = "parabolic"
CASE_INFEASIBLE = "infeasible"

ALPHA_LIMIT = 1e12
WITNESS_TOL = 1e-8


@dataclass(frozen=True)
class SocConstraint:
    """Standard-form data (Q, r, w, v) of ||Q u + r|| <= w u + v.

    Q : (m+1, m) scaled square-root columns of the control channels
    r : (m+1,) scaled square-root column of the offset channel
    w : (m,) linear gain of the control
    v : float constant term
    """

    Q: np.ndarray
    r: np.ndarray
    w: np.ndarray
    v: float

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        r = np.asarray(self.r, dtype=float).ravel()
        w = np.atleast_1d(np.asarray(self.w, dtype=float)).ravel()
        if Q.shape != (w.shape[0] + 1, w.shape[0]):
            raise ValueError(
                f"Q must have shape (m+1, m) = ({w.shape[0] + 1}, {w.shape[0]})"
            )
        if r.shape[0] != Q.shape[0]:
            raise ValueError("r must have length m+1")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "v", float(self.v))

    @property
    def m(self):
        return self.w.shape[0]

    def margin(self, u):
        """Constraint slack w u + v - ||Q u + r|| at a control."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return float(self.w @ u + self.v - np.linalg.norm(self.Q @ u + self.r))

    def satisfied(self, u, tol=0.0):
        return self.margin(u) >= -tol


@dataclass
class FeasibilityReport:
    """Outcome of the exact feasibility classification at one state.

    ``case`` keeps the geometric label for feasible instances and
    collapses to "infeasible" otherwise.  ``certificate`` is a control
    satisfying the constraint whenever the verdict is feasible.
    """

    case: str
    feasible: bool
    lambda_min: float
    necessary_holds: bool
    necessary_value: float
    certificate: np.ndarray | None = None
    auxiliary: dict = field(default_factory=dict)


def squared_constraint_matrix(con):
    """(m+1)x(m+1) matrix M of the squared constraint.

    [1 u^T] M [1; u] = ||Q u + r||^2 - (w u + v)^2, so the constraint
    holds iff the form is nonpositive and w u + v >= 0.
    """
    Q, r, w, v = con.Q, con.r, con.w, con.v
    top = np.concatenate([[r @ r - v * v], Q.T @ r - w * v])
    bottom = Q.T @ Q - np.outer(w, w)
    H = np.zeros((con.m + 1, con.m + 1))
    H[0, :] = top
    H[1:, 0] = top[1:]
    H[1:, 1:] = bottom
    return H


def necessary_condition(con, beta, coeff_cov):
    """Necessary condition for feasibility from the mean/uncertainty ratio.

    Returns (holds, value) with value = psi C^-1 psi^T - beta^2 where
    psi = [v, w]; the condition holds iff value >= 0, equivalently iff
    the squared-constraint matrix is not positive definite.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    coeff_cov = np.asarray(coeff_cov, dtype=float)
    psi = np.concatenate([[con.v], con.w])
    try:
        sol = np.linalg.solve(coeff_cov, psi)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "coefficient covariance is singular; the GP noise level must be positive"
        ) from exc
    value = float(psi @ sol - beta * beta)
    return value >= 0.0, value


def _necessary_from_constraint(con):
    """Same condition computed from (Q, r, w, v) alone.

    [r Q]^T [r Q] equals beta^2 C, so psi ([r Q]^T[r Q])^-1 psi^T - 1 has
    the sign of the spec value without needing beta and C separately.
    """
    RQ = np.column_stack([con.r, con.Q])
    S = RQ.T @ RQ
    psi = np.concatenate([[con.v], con.w])
    try:
        value = float(psi @ np.linalg.solve(S, psi) - 1.0)
    except np.linalg.LinAlgError:
        # singular uncertainty: fall back to the eigenvalue form
        value = -float(np.linalg.eigvalsh(squared_constraint_matrix(con))[0])
    return value


def _escalate_direction(con, base, direction):
    """Scale ``direction`` up from ``base`` until the constraint holds.

    Termination is guaranteed off the parabolic boundary band; running
    into ALPHA_LIMIT is flagged to the caller by returning None.
    """
    alpha = 1.0
    while alpha <= ALPHA_LIMIT:
        u = base + alpha * direction
        if con.satisfied(u):
            return u, alpha
        alpha *= 2.0
    return None, alpha


def classify(con, eig_tol=None):
    """Exact feasibility trichotomy for one SOC constraint.

    eig_tol decides the parabolic band around lambda_min = 0; the default
    is 1e-9 relative to the norm of F.  Feasible verdicts always include
    a witness control in ``certificate``.
    """
    Q, r, w, v = con.Q, con.r, con.w, con.v
    F = Q.T @ Q - np.outer(w, w)
    fnorm = np.linalg.norm(F, 2)
    if eig_tol is None:
        eig_tol = 1e-9 * max(fnorm, 1e-30)
    elif eig_tol <= 0:
        raise ValueError("eig_tol must be positive")
    eigvals, eigvecs = np.linalg.eigh(F)
    lam_min = float(eigvals[0])
    e_min = eigvecs[:, 0]
    h = Q.T @ r - w * v
    necessary_value = _necessary_from_constraint(con)
    necessary_holds = necessary_value >= 0.0
    aux = {"e_min": e_min, "h": h}

    if lam_min < -eig_tol:
        # hyperbolic: guaranteed feasible along the most negative direction
        sign = 1.0 if w @ e_min >= 0 else -1.0
        u_c, alpha = _escalate_direction(con, np.zeros(con.m), sign * e_min)
        aux["alpha"] = alpha
        if u_c is None:
            return FeasibilityReport(
                case=CASE_HYPERBOLIC, feasible=True, lambda_min=lam_min,
                necessary_holds=necessary_holds, necessary_value=necessary_value,
                certificate=None, auxiliary=aux,
            )
        return FeasibilityReport(
            case=CASE_HYPERBOLIC, feasible=True, lambda_min=lam_min,
            necessary_holds=necessary_holds, necessary_value=necessary_value,
            certificate=u_c, auxiliary=aux,
        )

    if lam_min > eig_tol:
        # elliptic: candidate minimizer of the quadratic form
        u_center = -np.linalg.solve(F, h)
        side_value = float(v + w @ u_center)
        aux["u_center"] = u_center
        aux["side_value"] = side_value
        if necessary_holds and side_value >= 0.0:
            return FeasibilityReport(
                case=CASE_ELLIPTIC, feasible=True, lambda_min=lam_min,
                necessary_holds=necessary_holds, necessary_value=necessary_value,
                certificate=u_center, auxiliary=aux,
            )
        return FeasibilityReport(
            case=CASE_INFEASIBLE, feasible=False, lambda_min=lam_min,
            necessary_holds=necessary_holds, necessary_value=necessary_value,
            certificate=None, auxiliary=aux,
        )

    # parabolic band: the linear gain matches the uncertainty growth rate
    QtQ = Q.T @ Q
    qnorm = np.linalg.norm(Q)
    if qnorm < 1e-14 * max(1.0, abs(v), np.linalg.norm(w)) or \
            np.linalg.cond(QtQ) > 1e14:
        # no usable curvature: the constraint is effectively ||r|| <= w u + v
        if np.linalg.norm(w) > 0:
            sign_dir = w / np.linalg.norm(w)
            u_c, alpha = _escalate_direction(con, np.zeros(con.m), sign_dir)
            aux["alpha"] = alpha
            if u_c is not None:
                return FeasibilityReport(
                    case=CASE_PARABOLIC, feasible=True, lambda_min=lam_min,
                    necessary_holds=necessary_holds,
                    necessary_value=necessary_value,
                    certificate=u_c, auxiliary=aux,
                )
        feasible = con.satisfied(np.zeros(con.m))
        return FeasibilityReport(
            case=CASE_PARABOLIC if feasible else CASE_INFEASIBLE,
            feasible=feasible, lambda_min=lam_min,
            necessary_holds=necessary_holds, necessary_value=necessary_value,
            certificate=np.zeros(con.m) if feasible else None, auxiliary=aux,
        )
    u_ls = -np.linalg.solve(QtQ, Q.T @ r)
    p_scalar = float(v + w @ u_ls)
    aux["u_ls"] = u_ls
    aux["p_scalar"] = p_scalar
    if p_scalar > 0.0:
        sign = 1.0 if w @ e_min >= 0 else -1.0
        u_c, alpha = _escalate_direction(con, u_ls, sign * e_min)
        aux["alpha"] = alpha
        return FeasibilityReport(
            case=CASE_PARABOLIC, feasible=True, lambda_min=lam_min,
            necessary_holds=necessary_holds, necessary_value=necessary_value,
            certificate=u_c, auxiliary=aux,
        )
    return FeasibilityReport(
        case=CASE_INFEASIBLE, feasible=False, lambda_min=lam_min,
        necessary_holds=necessary_holds, necessary_value=necessary_value,
        certificate=None, auxiliary=aux,
    )


def brute_force_feasible(con, u_box, grid):
    """Grid-scan oracle: is some grid point in the box feasible?

    u_box is a (lo, hi) pair per control dimension (or one pair shared by
    all) and grid the number of points per axis.  Exact on the grid; used
    to cross-check :func:`classify` in tests.
    """
    m = con.m
    box = np.asarray(u_box, dtype=float)
    if box.ndim == 1:
        box = np.tile(box, (m, 1))
    if box.shape != (m, 2):
        raise ValueError("u_box must be (lo, hi) per control dimension")
    axes = [np.linspace(lo, hi, grid) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    lhs = np.linalg.norm(pts @ con.Q.T + con.r, axis=1)
    rhs = pts @ con.w + con.v
    return bool(np.any(lhs <= rhs))
