"""Min-norm safety-critical controllers.

Four pointwise controllers over a control-affine plant model:

  * clf_qp_step: min ||u||^2 under the exponential CLF decay constraint.
  * cbf_clf_qp_step: min ||u||^2 + p d^2 with a relaxed CLF constraint
    (slack d) and a hard CBF constraint, both from the supplied model's
    Lie derivatives (use the true plant for the oracle baseline, the
    nominal model for the uncertainty-blind baseline).
  * gp_clf_socp_step: CLF constraint widened by the GP confidence bound
    on the residual (hard, no slack).
  * gp_cbf_clf_socp_step: relaxed GP-CLF constraint plus hard GP-CBF
    chance constraint; the workhorse controller of the learning loop.

GP-backed constraints are second-order cones because the posterior mean
is affine and the standard deviation is a norm of an affine expression in
u.  Before invoking the conic solver, the hard constraint is classified
exactly; the solver only runs on certified-feasible programs, with its
own infeasibility detection as a backstop.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import lie_derivatives
from .feasibility import SocConstraint, classify
from .socp import SocConstraintRaw, SocProgram, quadratic_objective_to_cone, solve

__all__ = [
    "ControlStep",
    "build_soc_constraint",
    "build_clf_soc_constraint",
    "clf_qp_step",
    "cbf_clf_qp_step",
    "gp_clf_socp_step",
    "gp_cbf_clf_socp_step",
]

DEFAULT_SLACK_WEIGHT = 100.0


@dataclass
class ControlStep:
    """One controller evaluation.

    u is the chosen control, d the CLF slack (0 for controllers without
    one).  Margins are the constraint slacks at the solution: cbf_margin
    is the hard safety constraint value (nonnegative at an optimal step),
    clf_margin is d minus the CLF constraint left-hand side.
    """

    u: np.ndarray
    d: float
    status: str
    clf_margin: float = np.nan
    cbf_margin: float = np.nan
    solve_time: float = 0.0
    objective: float = np.nan
    feasibility: object = None
    program: SocProgram | None = None


def build_soc_constraint(gp_b, nominal, cbf, x):
    """Standard-form (Q, r, w, v) of the GP-CBF chance constraint at x.

    The constraint is beta*sigma_B(x, u) <= w u + v with
    w = LgB_nominal + mean actuation-residual coefficients and
    v = LfB_nominal + mean offset + decay budget; [r Q] = beta * G so
    ||Q u + r|| equals beta*sigma_B(x, u).
    """
    pred = gp_b.predict_affine(x)
    lf, lg = lie_derivatives(nominal, cbf, x)
    beta = gp_b.beta
    RQ = beta * pred.G
    w = lg + pred.b[1:]
    v = lf + pred.b[0] + cbf.decay(x)
    return SocConstraint(Q=RQ[:, 1:], r=RQ[:, 0], w=w, v=v)


def build_clf_soc_constraint(gp_v, nominal, clf, x):
    """GP-CLF chance constraint in the same (Q, r, w, v) standard form.

    The stability constraint is an upper bound, so the linear part enters
    with flipped sign: beta*sigma_V <= -(LfV + mean + rate*V) - (LgV +
    mean coefficients) u.  A relaxation slack is added by the caller.
    """
    pred = gp_v.predict_affine(x)
    lf, lg = lie_derivatives(nominal, clf, x)
    beta = gp_v.beta
    RQ = beta * pred.G
    w = -(lg + pred.b[1:])
    v = -(lf + pred.b[0] + clf.decay(x))
    return SocConstraint(Q=RQ[:, 1:], r=RQ[:, 0], w=w, v=v)


def _soc_to_raw(con, n_vars, u_idx, scale=1.0, extra=()):
    """Embed an (m+1)-dim SocConstraint over u into a larger variable
    vector whose control entries are u / scale; ``extra`` adds
    (index, coefficient) terms to the linear side."""
    m = con.m
    A = np.zeros((m + 1, n_vars))
    A[:, u_idx: u_idx + m] = scale * con.Q
    e = np.zeros(n_vars)
    e[u_idx: u_idx + m] = scale * con.w
    for idx, coef in extra:
        e[idx] = coef
    return SocConstraintRaw(A=A, b=con.r, e=e, d=con.v)


def _linear_raw(n_vars, coeffs, offset):
    """Linear inequality sum(coeffs[i] * x_i) + offset >= 0 as a cone."""
    e = np.zeros(n_vars)
    for idx, coef in coeffs:
        e[idx] = coef
    return SocConstraintRaw(A=np.zeros((0, n_vars)), b=np.zeros(0), e=e, d=offset)


def _finish(prog, m, has_slack, clf_lhs, cbf_value, t0, tol, max_iter,
            feas=None, scale=1.0, slack_scale=1.0):
    result = solve(prog, tol=tol, max_iter=max_iter)
    elapsed = time.perf_counter() - t0
    if result.status != "optimal":
        status = "infeasible" if result.status in ("infeasible", "unbounded") \
            else result.status
        return ControlStep(
            u=np.full(m, np.nan), d=np.nan, status=status,
            solve_time=elapsed, feasibility=feas, program=prog,
        )
    u = scale * result.x[:m]
    d = slack_scale * float(result.x[m]) if has_slack else 0.0
    return ControlStep(
        u=u, d=d, status="optimal",
        clf_margin=(d - clf_lhs(u)) if clf_lhs is not None else np.nan,
        cbf_margin=cbf_value(u) if cbf_value is not None else np.nan,
        solve_time=elapsed,
        objective=scale * scale * result.objective,
        feasibility=feas,
        program=prog,
    )


def clf_qp_step(plant_model, clf, x, tol=1e-8, max_iter=100, u_scale=1.0):
    """Min-norm control under the model-based CLF decay constraint.

    u_scale is the characteristic control magnitude; the solver works on
    u / u_scale so force-scale inputs stay well conditioned.
    """
    t0 = time.perf_counter()
    lf, lg = lie_derivatives(plant_model, clf, x)
    m = plant_model.m
    rhs = -(lf + clf.decay(x))
    if np.linalg.norm(lg) == 0.0 and rhs < 0:
        return ControlStep(u=np.full(m, np.nan), d=np.nan, status="infeasible",
                           solve_time=time.perf_counter() - t0)
    c, epi = quadratic_objective_to_cone([(1.0, i) for i in range(m)], m)
    n_vars = m + 1
    cones = [epi,
             _linear_raw(n_vars, [(i, -lg[i] * u_scale) for i in range(m)], rhs)]
    prog = SocProgram(c=c, cones=cones)

    def clf_lhs(u):
        return lf + float(lg @ u) + clf.decay(x)

    return _finish(prog, m, False, clf_lhs, None, t0, tol, max_iter,
                   scale=u_scale)


def cbf_clf_qp_step(plant_model, clf, cbf, x, slack_weight=DEFAULT_SLACK_WEIGHT,
                    tol=1e-8, max_iter=100, u_scale=1.0):
    """Safety-filtered min-norm control from one plant model's Lie
    derivatives: min ||u||^2 + p d^2 with relaxed CLF and hard CBF rows."""
    t0 = time.perf_counter()
    lf_v, lg_v = lie_derivatives(plant_model, clf, x)
    lf_b, lg_b = lie_derivatives(plant_model, cbf, x)
    m = plant_model.m
    cbf_rhs = lf_b + cbf.decay(x)
    if np.linalg.norm(lg_b) == 0.0 and cbf_rhs < 0:
        return ControlStep(u=np.full(m, np.nan), d=np.nan, status="infeasible",
                           solve_time=time.perf_counter() - t0)
    # variables [u/u_scale, d/d_scale, t]; d_scale absorbs the slack weight
    # so the epigraph cone has uniform unit weights
    d_scale = u_scale / np.sqrt(slack_weight)
    c, epi = quadratic_objective_to_cone([(1.0, i) for i in range(m + 1)], m + 1)
    n_vars = m + 2
    clf_cone = _linear_raw(
        n_vars,
        [(i, -lg_v[i] * u_scale) for i in range(m)] + [(m, d_scale)],
        -(lf_v + clf.decay(x)),
    )
    cbf_cone = _linear_raw(
        n_vars, [(i, lg_b[i] * u_scale) for i in range(m)], cbf_rhs
    )
    prog = SocProgram(c=c, cones=[epi, clf_cone, cbf_cone])

    def clf_lhs(u):
        return lf_v + float(lg_v @ u) + clf.decay(x)

    def cbf_value(u):
        return lf_b + float(lg_b @ u) + cbf.decay(x)

    return _finish(prog, m, True, clf_lhs, cbf_value, t0, tol, max_iter,
                   scale=u_scale, slack_scale=d_scale)


def gp_clf_socp_step(gp_v, nominal, clf, x, tol=1e-8, max_iter=100,
                     u_scale=1.0):
    """Min-norm control under the hard GP-CLF chance constraint."""
    t0 = time.perf_counter()
    con = build_clf_soc_constraint(gp_v, nominal, clf, x)
    report = classify(con)
    m = nominal.m
    if not report.feasible:
        return ControlStep(u=np.full(m, np.nan), d=np.nan, status="infeasible",
                           solve_time=time.perf_counter() - t0,
                           feasibility=report)
    c, epi = quadratic_objective_to_cone([(1.0, i) for i in range(m)], m)
    n_vars = m + 1
    prog = SocProgram(c=c, cones=[epi, _soc_to_raw(con, n_vars, 0, u_scale)])

    def clf_lhs(u):
        return -con.margin(u)

    return _finish(prog, m, False, clf_lhs, None, t0, tol, max_iter,
                   feas=report, scale=u_scale)


def gp_cbf_clf_socp_step(gp_v, gp_b, nominal, clf, cbf, x,
                         slack_weight=DEFAULT_SLACK_WEIGHT,
                         tol=1e-8, max_iter=100, u_scale=1.0):
    """Uncertainty-aware safety-critical control step.

    Minimizes ||u||^2 + p d^2 subject to the relaxed GP-CLF chance
    constraint and the hard GP-CBF chance constraint.  The CBF cone is
    classified exactly first; an infeasible verdict short-circuits the
    solve and is reported so the episode loop can stop the rollout.
    """
    t0 = time.perf_counter()
    cbf_con = build_soc_constraint(gp_b, nominal, cbf, x)
    report = classify(cbf_con)
    m = nominal.m
    if not report.feasible:
        return ControlStep(u=np.full(m, np.nan), d=np.nan, status="infeasible",
                           solve_time=time.perf_counter() - t0,
                           feasibility=report)
    clf_con = build_clf_soc_constraint(gp_v, nominal, clf, x)
    # variables [u/u_scale, d/d_scale, t]; d_scale absorbs the slack weight
    d_scale = u_scale / np.sqrt(slack_weight)
    c, epi = quadratic_objective_to_cone([(1.0, i) for i in range(m + 1)], m + 1)
    n_vars = m + 2
    cones = [
        epi,
        _soc_to_raw(clf_con, n_vars, 0, u_scale, extra=[(m, d_scale)]),
        _soc_to_raw(cbf_con, n_vars, 0, u_scale),
    ]
    prog = SocProgram(c=c, cones=cones)

    def clf_lhs(u):
        return -clf_con.margin(u)

    def cbf_value(u):
        return cbf_con.margin(u)

    return _finish(prog, m, True, clf_lhs, cbf_value, t0, tol, max_iter,
                   feas=report, scale=u_scale, slack_scale=d_scale)
