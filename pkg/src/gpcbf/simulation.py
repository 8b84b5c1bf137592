"""Closed-loop simulation, residual data collection, and episodic learning.

A rollout steps the true plant under a pointwise controller, recording
the certificate values and collecting residual measurements along the
way.  The episodic protocol alternates rollouts with GP refits: the
first episode runs the nominal-model safety filter (which fails under
model mismatch), every later episode refits both residual GPs on all
retained data and rolls out the uncertainty-aware controller, stopping
on infeasibility or a safety violation.  Learning ends at the first
fully feasible full-horizon rollout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .controllers import cbf_clf_qp_step, gp_cbf_clf_socp_step
from .dynamics import measure_residuals
from .feasibility import classify
from .controllers import build_soc_constraint
from .gp import FLOAT_FMT, AffineResidualGP, ResidualDataset

__all__ = [
    "EpisodeConfig",
    "RolloutLog",
    "EpisodeResult",
    "integrate_step",
    "rollout",
    "episodic_learning",
    "feasibility_map",
    "save_rollout_csv",
    "save_feasibility_csv",
]

TERMINATION_HORIZON = "horizon"
TERMINATION_UNSAFE = "unsafe"
TERMINATION_INFEASIBLE = "infeasible"


def integrate_step(plant, x, u, dt):
    """One classical fourth-order Runge-Kutta step with u held constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    k1 = plant.xdot(x, u)
    k2 = plant.xdot(x + 0.5 * dt * k1, u)
    k3 = plant.xdot(x + 0.5 * dt * k2, u)
    k4 = plant.xdot(x + dt * k3, u)
    x_next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise FloatingPointError("state became non-finite during integration")
    return x_next


@dataclass(frozen=True)
class EpisodeConfig:
    """Rollout settings shared by every episode."""

    x0: np.ndarray
    dt: float = 0.02
    horizon: float = 20.0
    retention: int = 5  # keep every k-th residual sample
    max_episodes: int = 15
    noise_std: float = 0.0  # optional measurement-noise injection
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon < self.dt:
            raise ValueError("horizon must cover at least one step")
        if self.retention < 1:
            raise ValueError("retention must be a positive stride")

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))


@dataclass
class RolloutLog:
    """Closed-loop trace of one rollout plus its residual-data increment."""

    t: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    slacks: np.ndarray
    clf_values: np.ndarray
    cbf_values: np.ndarray
    statuses: list
    cases: list
    cbf_margins: np.ndarray
    solve_times: np.ndarray
    termination: str
    data: ResidualDataset

    @property
    def min_cbf(self):
        return float(np.min(self.cbf_values))

    def violation_time(self):
        """First time the barrier goes negative, or None."""
        idx = np.nonzero(self.cbf_values < 0.0)[0]
        return float(self.t[idx[0]]) if idx.size else None


def rollout(cfg, true_plant, controller, clf, cbf, nominal_plant, rng=None):
    """Simulate the true plant under ``controller`` from cfg.x0.

    ``controller`` maps a state to a ControlStep.  The rollout stops at
    the horizon, at the first infeasible controller step, or as soon as
    the recorded barrier value goes negative.  Residual measurements are
    collected every cfg.retention-th step against the nominal model.
    """
    n_steps = cfg.n_steps
    x = cfg.x0.copy()
    data = ResidualDataset(true_plant.n, true_plant.m)
    ts, xs, us, ds_, vs, bs = [], [], [], [], [], []
    statuses, cases = [], []
    margins, times = [], []
    termination = TERMINATION_HORIZON
    for k in range(n_steps + 1):
        t = k * cfg.dt
        ts.append(t)
        xs.append(x.copy())
        vs.append(clf.value(x))
        bs.append(cbf.value(x))
        if bs[-1] < 0.0:
            us.append(np.full(true_plant.m, np.nan))
            ds_.append(np.nan)
            statuses.append("unsafe")
            cases.append("")
            margins.append(np.nan)
            times.append(0.0)
            termination = TERMINATION_UNSAFE
            break
        if k == n_steps:
            us.append(np.full(true_plant.m, np.nan))
            ds_.append(np.nan)
            statuses.append("horizon")
            cases.append("")
            margins.append(np.nan)
            times.append(0.0)
            break
        step = controller(x)
        statuses.append(step.status)
        cases.append(step.feasibility.case if step.feasibility is not None else "")
        times.append(step.solve_time)
        if step.status != "optimal":
            us.append(np.full(true_plant.m, np.nan))
            ds_.append(np.nan)
            margins.append(np.nan)
            termination = TERMINATION_INFEASIBLE
            break
        us.append(step.u)
        ds_.append(step.d)
        margins.append(step.cbf_margin)
        x_next = integrate_step(true_plant, x, step.u, cfg.dt)
        if k % cfg.retention == 0:
            x_mid, u_mid, z_v, z_b = measure_residuals(
                x, x_next, step.u, cfg.dt, clf, cbf, nominal_plant
            )
            if cfg.noise_std > 0.0 and rng is not None:
                z_v += cfg.noise_std * rng.uniform(-1.0, 1.0)
                z_b += cfg.noise_std * rng.uniform(-1.0, 1.0)
            data.append(x_mid, u_mid, z_v, z_b)
        x = x_next
    return RolloutLog(
        t=np.array(ts),
        states=np.array(xs),
        controls=np.array(us),
        slacks=np.array(ds_),
        clf_values=np.array(vs),
        cbf_values=np.array(bs),
        statuses=statuses,
        cases=cases,
        cbf_margins=np.array(margins),
        solve_times=np.array(times),
        termination=termination,
        data=data,
    )


@dataclass
class EpisodeResult:
    """Outcome of the episodic learning loop."""

    logs: list
    dataset: ResidualDataset
    gp_clf: AffineResidualGP | None
    gp_cbf: AffineResidualGP | None
    converged: bool
    dataset_sizes: list = field(default_factory=list)


def _fit_pair(dataset, kernel_clf, kernel_cbf, noise_std, beta):
    features = dataset.features()
    gp_v = AffineResidualGP(kernel=kernel_clf, control_dim=dataset.control_dim,
                            noise_std=noise_std, beta=beta)
    gp_v.fit(features, dataset.z_clf)
    gp_b = AffineResidualGP(kernel=kernel_cbf, control_dim=dataset.control_dim,
                            noise_std=noise_std, beta=beta)
    gp_b.fit(features, dataset.z_cbf)
    return gp_v, gp_b


def episodic_learning(cfg, true_plant, nominal_plant, clf, cbf,
                      kernel_clf, kernel_cbf, noise_std, beta,
                      slack_weight=100.0, u_scale=1.0, solver_tol=1e-8,
                      max_iter=100):
    """Alternate rollouts and GP refits until a rollout is fully feasible.

    Episode 1 runs the nominal-model safety filter on the true plant
    (collecting the initial data as it fails); later episodes refit both
    GPs on all retained data and roll out the uncertainty-aware SOCP
    controller.  Returns per-episode logs, the cumulative dataset, the
    final GPs, and whether a fully feasible episode was reached.
    """
    rng = np.random.default_rng(cfg.seed)
    dataset = ResidualDataset(true_plant.n, true_plant.m)
    logs = []
    sizes = []
    gp_v = gp_b = None
    converged = False
    for episode in range(cfg.max_episodes):
        if episode == 0:
            def controller(x):
                return cbf_clf_qp_step(
                    nominal_plant, clf, cbf, x, slack_weight=slack_weight,
                    tol=solver_tol, max_iter=max_iter, u_scale=u_scale,
                )
        else:
            gp_v, gp_b = _fit_pair(dataset, kernel_clf, kernel_cbf,
                                   noise_std, beta)

            def controller(x, gp_v=gp_v, gp_b=gp_b):
                return gp_cbf_clf_socp_step(
                    gp_v, gp_b, nominal_plant, clf, cbf, x,
                    slack_weight=slack_weight, tol=solver_tol,
                    max_iter=max_iter, u_scale=u_scale,
                )

        log = rollout(cfg, true_plant, controller, clf, cbf, nominal_plant,
                      rng=rng)
        logs.append(log)
        dataset.extend(log.data)
        sizes.append(len(dataset))
        if episode > 0 and log.termination == TERMINATION_HORIZON:
            converged = True
            break
    return EpisodeResult(logs=logs, dataset=dataset, gp_clf=gp_v, gp_cbf=gp_b,
                         converged=converged, dataset_sizes=sizes)


def feasibility_map(gp_b, nominal_plant, cbf, grid_states):
    """Classify the safety chance constraint on a batch of states.

    Returns a list of (state, FeasibilityReport) pairs; grid_states is
    any iterable of state vectors (use a meshgrid flattened to rows for
    the rectangular maps).
    """
    out = []
    for x in grid_states:
        con = build_soc_constraint(gp_b, nominal_plant, cbf, np.asarray(x))
        out.append((np.asarray(x, dtype=float), classify(con)))
    return out


def save_rollout_csv(log, path):
    n = log.states.shape[1]
    m = log.controls.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)]
            + ["d", "V", "B", "status", "case"]
        )
        for i in range(log.t.shape[0]):
            row = [FLOAT_FMT % log.t[i]]
            row += [FLOAT_FMT % v for v in log.states[i]]
            row += [FLOAT_FMT % v for v in log.controls[i]]
            row += [FLOAT_FMT % log.slacks[i], FLOAT_FMT % log.clf_values[i],
                    FLOAT_FMT % log.cbf_values[i]]
            row += [log.statuses[i], log.cases[i]]
            writer.writerow(row)


def save_feasibility_csv(entries, path):
    if not entries:
        raise ValueError("empty feasibility map")
    n = entries[0][0].shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(n)]
                        + ["lambda_min", "case", "feasible"])
        for state, report in entries:
            writer.writerow(
                [FLOAT_FMT % v for v in state]
                + [FLOAT_FMT % report.lambda_min, report.case,
                   int(report.feasible)]
            )
