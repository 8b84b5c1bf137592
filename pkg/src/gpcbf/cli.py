"""Command-line entry point.

Subcommands:

  simulate         one closed-loop rollout of a named controller
  episodes         the episodic learning protocol until full feasibility
  feasibility-map  classify the safety constraint over a state grid

Exit codes are stable so scripts can dispatch on them:

  0  run completed (horizon reached / artifacts written)
  2  configuration or input error
  3  rollout terminated unsafe (barrier went negative)
  4  rollout terminated infeasible (controller had no certified control)
  5  episode budget exhausted before a fully feasible rollout
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, DEFAULT_CONFIG, load_config
from .controllers import (cbf_clf_qp_step, clf_qp_step, gp_cbf_clf_socp_step,
                          gp_clf_socp_step)
from .gp import FLOAT_FMT, AffineResidualGP, ResidualDataset
from .simulation import (TERMINATION_HORIZON, TERMINATION_INFEASIBLE,
                         TERMINATION_UNSAFE, episodic_learning,
                         feasibility_map, rollout, save_feasibility_csv,
                         save_rollout_csv)
from .socp import format_program

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSAFE = 3
EXIT_INFEASIBLE = 4
EXIT_BUDGET = 5

CONTROLLERS = (
    "clf-qp",
    "cbf-clf-qp-nominal",
    "cbf-clf-qp-oracle",
    "gp-clf-socp",
    "gp-cbf-clf-socp",
)

_TERMINATION_EXIT = {
    TERMINATION_HORIZON: EXIT_OK,
    TERMINATION_UNSAFE: EXIT_UNSAFE,
    TERMINATION_INFEASIBLE: EXIT_INFEASIBLE,
}


def _write_summary(path, entries):
    with open(path, "w") as fh:
        for key, value in entries:
            if isinstance(value, float):
                value = FLOAT_FMT % value
            fh.write(f"{key} = {value}\n")


def _fit_gps(cfg, dataset):
    gp_v = AffineResidualGP(kernel=cfg.clf_kernel(), control_dim=1,
                            noise_std=cfg.noise_std, beta=cfg.beta)
    gp_v.fit(dataset.features(), dataset.z_clf)
    gp_b = AffineResidualGP(kernel=cfg.cbf_kernel(), control_dim=1,
                            noise_std=cfg.noise_std, beta=cfg.beta)
    gp_b.fit(dataset.features(), dataset.z_cbf)
    return gp_v, gp_b


def _load_dataset(cfg, dataset_path):
    if dataset_path is None:
        return ResidualDataset(2, 1)
    return ResidualDataset.load_csv(dataset_path, 2, 1)


def _make_controller(name, cfg, dataset):
    true_plant = cfg.true_plant()
    nominal = cfg.nominal_plant()
    clf = cfg.clf()
    cbf = cfg.cbf()
    kw = dict(tol=cfg.solver_tol, max_iter=cfg.solver_max_iter,
              u_scale=cfg.u_scale)
    if name == "clf-qp":
        return lambda x: clf_qp_step(nominal, clf, x, **kw)
    if name == "cbf-clf-qp-nominal":
        return lambda x: cbf_clf_qp_step(
            nominal, clf, cbf, x, slack_weight=cfg.slack_weight, **kw)
    if name == "cbf-clf-qp-oracle":
        return lambda x: cbf_clf_qp_step(
            true_plant, clf, cbf, x, slack_weight=cfg.slack_weight, **kw)
    gp_v, gp_b = _fit_gps(cfg, dataset)
    if name == "gp-clf-socp":
        return lambda x: gp_clf_socp_step(gp_v, nominal, clf, x, **kw)
    if name == "gp-cbf-clf-socp":
        return lambda x: gp_cbf_clf_socp_step(
            gp_v, gp_b, nominal, clf, cbf, x,
            slack_weight=cfg.slack_weight, **kw)
    raise ConfigError(f"unknown controller {name!r}")


def cmd_simulate(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    dataset = _load_dataset(cfg, args.dataset)
    controller = _make_controller(args.controller, cfg, dataset)
    ep_cfg = cfg.episode_config()
    rng = np.random.default_rng(ep_cfg.seed)
    log = rollout(ep_cfg, cfg.true_plant(), controller, cfg.clf(), cfg.cbf(),
                  cfg.nominal_plant(), rng=rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_rollout_csv(log, out / "rollout.csv")
    log.data.save_csv(out / "rollout_data.csv")
    viol = log.violation_time()
    _write_summary(out / "summary.txt", [
        ("controller", args.controller),
        ("termination", log.termination),
        ("steps", log.t.shape[0]),
        ("final_time", float(log.t[-1])),
        ("min_barrier", log.min_cbf),
        ("violation_time", viol if viol is not None else "none"),
        ("mean_solve_time", float(np.nanmean(log.solve_times))),
        ("samples_collected", len(log.data)),
    ])
    if args.dump_socp:
        _dump_program_for_state(cfg, dataset, args.controller, log,
                                out / args.dump_socp)
    print(f"{args.controller}: {log.termination} at t={log.t[-1]:.2f}, "
          f"min B = {log.min_cbf:.4f} -> {out}")
    return _TERMINATION_EXIT[log.termination]


def _dump_program_for_state(cfg, dataset, controller_name, log, path):
    """Rebuild the conic program at the rollout's final state and dump it."""
    controller = _make_controller(controller_name, cfg, dataset)
    step = controller(log.states[-1])
    with open(path, "w") as fh:
        fh.write(f"state = {np.array2string(log.states[-1], precision=17)}\n")
        fh.write(f"status = {step.status}\n")
        if step.program is not None:
            fh.write(format_program(step.program))
        elif step.feasibility is not None:
            fh.write(f"classifier = {step.feasibility.case}\n")


def cmd_episodes(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    result = episodic_learning(
        cfg.episode_config(), cfg.true_plant(), cfg.nominal_plant(),
        cfg.clf(), cfg.cbf(), cfg.clf_kernel(), cfg.cbf_kernel(),
        noise_std=cfg.noise_std, beta=cfg.beta,
        slack_weight=cfg.slack_weight, u_scale=cfg.u_scale,
        solver_tol=cfg.solver_tol, max_iter=cfg.solver_max_iter,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, log in enumerate(result.logs):
        save_rollout_csv(log, out / f"episode_{i + 1:02d}.csv")
    result.dataset.save_csv(out / "dataset.csv")
    final = result.logs[-1]
    entries = [
        ("episodes", len(result.logs)),
        ("converged", int(result.converged)),
        ("final_dataset_size", len(result.dataset)),
        ("dataset_sizes", ",".join(str(n) for n in result.dataset_sizes)),
        ("final_termination", final.termination),
        ("final_min_barrier", final.min_cbf),
    ]
    viol = result.logs[0].violation_time()
    entries.append(("nominal_violation_time", viol if viol is not None else "none"))
    _write_summary(out / "summary.txt", entries)
    print(f"episodes: {len(result.logs)}, converged: {result.converged}, "
          f"final N = {len(result.dataset)} -> {out}")
    return EXIT_OK if result.converged else EXIT_BUDGET


def _parse_grid(arg):
    parts = arg.split(",")
    if len(parts) != 6:
        raise ConfigError(
            "--grid expects v_min,v_max,v_points,z_min,z_max,z_points")
    v_lo, v_hi, z_lo, z_hi = map(float, (parts[0], parts[1], parts[3], parts[4]))
    nv, nz = int(parts[2]), int(parts[5])
    vs = np.linspace(v_lo, v_hi, nv)
    zs = np.linspace(z_lo, z_hi, nz)
    VV, ZZ = np.meshgrid(vs, zs, indexing="ij")
    return np.stack([VV.ravel(), ZZ.ravel()], axis=1)


def cmd_feasibility_map(args):
    cfg = load_config(args.config)
    dataset = _load_dataset(cfg, args.dataset)
    _, gp_b = _fit_gps(cfg, dataset)
    states = _parse_grid(args.grid) if args.grid else cfg.grid_states()
    entries = feasibility_map(gp_b, cfg.nominal_plant(), cfg.cbf(), states)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_feasibility_csv(entries, out / "feasibility_map.csv")
    frac = float(np.mean([rep.feasible for _, rep in entries]))
    _write_summary(out / "summary.txt", [
        ("grid_points", len(entries)),
        ("feasible_fraction", frac),
        ("dataset_size", len(dataset)),
    ])
    print(f"feasibility map: {len(entries)} points, "
          f"feasible fraction {frac:.3f} -> {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gpcbf",
        description="GP-based uncertainty-aware safety-critical control "
                    "experiments (cruise-control study)",
    )
    parser.add_argument("--print-default-config", action="store_true",
                        help="print the built-in configuration and exit")
    sub = parser.add_subparsers(dest="command")

    p_sim = sub.add_parser("simulate", help="run one closed-loop rollout")
    p_sim.add_argument("--config", help="configuration file (INI)")
    p_sim.add_argument("--controller", required=True, choices=CONTROLLERS)
    p_sim.add_argument("--out", default="out", help="output directory")
    p_sim.add_argument("--dataset", help="residual dataset CSV for GP controllers")
    p_sim.add_argument("--seed", type=int, help="override the configured seed")
    p_sim.add_argument("--dump-socp", metavar="FILE",
                       help="dump the conic program at the final state")
    p_sim.set_defaults(func=cmd_simulate)

    p_ep = sub.add_parser("episodes", help="run the episodic learning protocol")
    p_ep.add_argument("--config", help="configuration file (INI)")
    p_ep.add_argument("--out", default="out", help="output directory")
    p_ep.add_argument("--seed", type=int, help="override the configured seed")
    p_ep.set_defaults(func=cmd_episodes)

    p_map = sub.add_parser("feasibility-map",
                           help="classify the safety constraint over a grid")
    p_map.add_argument("--config", help="configuration file (INI)")
    p_map.add_argument("--dataset", help="residual dataset CSV (omit for prior)")
    p_map.add_argument("--grid",
                       help="v_min,v_max,v_points,z_min,z_max,z_points")
    p_map.add_argument("--out", default="out", help="output directory")
    p_map.set_defaults(func=cmd_feasibility_map)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_default_config:
        print(DEFAULT_CONFIG, end="")
        return EXIT_OK
    if not getattr(args, "func", None):
        parser.print_help()
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
