"""Experiment configuration: INI-style file with one section per concern.

The default configuration reproduces the cruise-control study: a heavy
true plant behind a light nominal model, velocity-tracking CLF, safe
headway CBF, and the episodic learning settings.  Every numeric field is
validated at load so downstream code can assume well-formed parameters.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .dynamics import AccParams, acc_cbf, acc_clf, acc_plant
from .kernels import AffineDotProductKernel, SquaredExponentialKernel
from .simulation import EpisodeConfig

__all__ = ["ExperimentConfig", "ConfigError", "DEFAULT_CONFIG", "load_config"]


class ConfigError(ValueError):
    """Raised for unparseable or inconsistent configuration files."""


DEFAULT_CONFIG = """\
[plant.true]
mass = 3300.0
f0 = 0.2
f1 = 10.0
f2 = 0.5

[plant.nominal]
mass = 1650.0
f0 = 0.1
f1 = 5.0
f2 = 0.25

[certificates]
front_speed = 14.0
desired_speed = 24.0
headway_time = 1.8
clf_rate = 1.0
cbf_rate = 1.0

[gp]
noise_std = 0.01
beta = 2.0
delta = 0.05
clf_signal_variance = 1.0
clf_input_variance = 1e-4
cbf_signal_variance = 0.25
cbf_input_variance = 4e-6
lengthscales = 2.0, 10.0

[controller]
slack_weight = 1e5
u_scale = 2000.0
solver_tol = 1e-8
solver_max_iter = 100

[simulation]
x0 = 20.0, 100.0
dt = 0.02
horizon = 20.0
episodes = 15
retention = 10
seed = 0
noise_injection = 0.0

[grid]
v_min = 14.0
v_max = 25.0
v_points = 23
z_min = 20.0
z_max = 100.0
z_points = 17
"""


@dataclass
class ExperimentConfig:
    """Typed view of the configuration file."""

    true_params: AccParams
    nominal_params: AccParams
    clf_rate: float
    cbf_rate: float
    noise_std: float
    beta: float
    delta: float
    clf_signal_variance: float
    clf_input_variance: float
    cbf_signal_variance: float
    cbf_input_variance: float
    lengthscales: np.ndarray
    slack_weight: float
    u_scale: float
    solver_tol: float
    solver_max_iter: int
    x0: np.ndarray
    dt: float
    horizon: float
    episodes: int
    retention: int
    seed: int
    noise_injection: float
    grid_v: tuple
    grid_z: tuple

    # -- constructed objects ------------------------------------------------

    def true_plant(self):
        return acc_plant(self.true_params, "true")

    def nominal_plant(self):
        return acc_plant(self.nominal_params, "nominal")

    def clf(self):
        return acc_clf(self.nominal_params, rate=self.clf_rate)

    def cbf(self):
        return acc_cbf(self.nominal_params, rate=self.cbf_rate)

    def clf_kernel(self):
        return AffineDotProductKernel([
            SquaredExponentialKernel(self.clf_signal_variance, self.lengthscales),
            SquaredExponentialKernel(self.clf_input_variance, self.lengthscales),
        ])

    def cbf_kernel(self):
        return AffineDotProductKernel([
            SquaredExponentialKernel(self.cbf_signal_variance, self.lengthscales),
            SquaredExponentialKernel(self.cbf_input_variance, self.lengthscales),
        ])

    def episode_config(self, seed=None):
        return EpisodeConfig(
            x0=self.x0, dt=self.dt, horizon=self.horizon,
            retention=self.retention, max_episodes=self.episodes,
            noise_std=self.noise_injection,
            seed=self.seed if seed is None else seed,
        )

    def grid_states(self):
        """Rectangular (v, z) grid flattened to state rows."""
        v_lo, v_hi, nv = self.grid_v
        z_lo, z_hi, nz = self.grid_z
        vs = np.linspace(v_lo, v_hi, nv)
        zs = np.linspace(z_lo, z_hi, nz)
        VV, ZZ = np.meshgrid(vs, zs, indexing="ij")
        return np.stack([VV.ravel(), ZZ.ravel()], axis=1)


def _get_float(section, key, positive=False, nonnegative=False):
    try:
        value = float(section[key])
    except KeyError as exc:
        raise ConfigError(f"missing key '{key}' in [{section.name}]") from exc
    except ValueError as exc:
        raise ConfigError(
            f"key '{key}' in [{section.name}] is not a number: {section[key]!r}"
        ) from exc
    if positive and value <= 0:
        raise ConfigError(f"key '{key}' in [{section.name}] must be positive")
    if nonnegative and value < 0:
        raise ConfigError(f"key '{key}' in [{section.name}] must be nonnegative")
    return value


def _get_int(section, key, minimum=None):
    value = _get_float(section, key)
    if value != int(value):
        raise ConfigError(f"key '{key}' in [{section.name}] must be an integer")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"key '{key}' in [{section.name}] must be >= {minimum}")
    return value


def _get_vector(section, key, length=None):
    try:
        parts = [float(p) for p in section[key].split(",")]
    except KeyError as exc:
        raise ConfigError(f"missing key '{key}' in [{section.name}]") from exc
    except ValueError as exc:
        raise ConfigError(f"key '{key}' in [{section.name}] is not a vector") from exc
    if length is not None and len(parts) != length:
        raise ConfigError(
            f"key '{key}' in [{section.name}] needs {length} components"
        )
    return np.array(parts)


def _acc_params(section, certs):
    return AccParams(
        mass=_get_float(section, "mass", positive=True),
        f0=_get_float(section, "f0"),
        f1=_get_float(section, "f1"),
        f2=_get_float(section, "f2"),
        v0=_get_float(certs, "front_speed"),
        v_d=_get_float(certs, "desired_speed"),
        t_headway=_get_float(certs, "headway_time", positive=True),
    )


def load_config(path=None, text=None):
    """Parse a configuration file (or literal text) into ExperimentConfig.

    Unspecified sections and keys fall back to the shipped defaults.
    """
    parser = configparser.ConfigParser()
    parser.read_string(DEFAULT_CONFIG)
    if text is not None:
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed configuration: {exc}") from exc
    elif path is not None:
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed configuration {path}: {exc}") from exc

    certs = parser["certificates"]
    gp = parser["gp"]
    ctrl = parser["controller"]
    sim = parser["simulation"]
    grid = parser["grid"]
    return ExperimentConfig(
        true_params=_acc_params(parser["plant.true"], certs),
        nominal_params=_acc_params(parser["plant.nominal"], certs),
        clf_rate=_get_float(certs, "clf_rate", positive=True),
        cbf_rate=_get_float(certs, "cbf_rate", positive=True),
        noise_std=_get_float(gp, "noise_std", nonnegative=True),
        beta=_get_float(gp, "beta", positive=True),
        delta=_get_float(gp, "delta", positive=True),
        clf_signal_variance=_get_float(gp, "clf_signal_variance", positive=True),
        clf_input_variance=_get_float(gp, "clf_input_variance", positive=True),
        cbf_signal_variance=_get_float(gp, "cbf_signal_variance", positive=True),
        cbf_input_variance=_get_float(gp, "cbf_input_variance", positive=True),
        lengthscales=_get_vector(gp, "lengthscales", length=2),
        slack_weight=_get_float(ctrl, "slack_weight", positive=True),
        u_scale=_get_float(ctrl, "u_scale", positive=True),
        solver_tol=_get_float(ctrl, "solver_tol", positive=True),
        solver_max_iter=_get_int(ctrl, "solver_max_iter", minimum=1),
        x0=_get_vector(sim, "x0", length=2),
        dt=_get_float(sim, "dt", positive=True),
        horizon=_get_float(sim, "horizon", positive=True),
        episodes=_get_int(sim, "episodes", minimum=1),
        retention=_get_int(sim, "retention", minimum=1),
        seed=_get_int(sim, "seed"),
        noise_injection=_get_float(sim, "noise_injection", nonnegative=True),
        grid_v=(
            _get_float(grid, "v_min"), _get_float(grid, "v_max"),
            _get_int(grid, "v_points", minimum=1),
        ),
        grid_z=(
            _get_float(grid, "z_min"), _get_float(grid, "z_max"),
            _get_int(grid, "z_points", minimum=1),
        ),
    )
