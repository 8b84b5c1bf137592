"""Control-affine plant models, CLF/CBF certificate functions, and
residual measurement generation.

Plants have the form xdot = f(x) + g(x) u.  A certificate is a scalar
function with gradient (a Lyapunov function V for tracking, a barrier
function B for safety) whose derivative along the dynamics,
Lf + Lg u, is affine in the control.  The residual of a certificate
between two plants is therefore also affine in u, which is the structure
the compound-kernel GP exploits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "PlantModel",
    "CertificateFunction",
    "AccParams",
    "lie_derivatives",
    "certificate_rate",
    "residual_truth",
    "measure_residuals",
    "acc_plant",
    "acc_clf",
    "acc_cbf",
    "ACC_TRUE",
    "ACC_NOMINAL",
]


@dataclass(frozen=True)
class PlantModel:
    """Control-affine plant xdot = f(x) + g(x) u.

    f maps a state (n,) to a drift vector (n,); g maps a state to an
    (n, m) input matrix.  ``label`` distinguishes the true plant from the
    nominal model used by controllers.
    """

    n: int
    m: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    label: str = "true"

    def xdot(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return self.f(x) + self.g(x) @ u


@dataclass(frozen=True)
class CertificateFunction:
    """Scalar certificate with gradient and a linear class-K rate.

    kind is "clf" or "cbf".  For a CLF the rate is the exponential decay
    coefficient in Vdot + rate * V <= 0; for a CBF it is the coefficient
    of the linear decay budget in Bdot + rate * B >= 0.
    """

    kind: str
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    rate: float

    def __post_init__(self):
        if self.kind not in ("clf", "cbf"):
            raise ValueError("kind must be 'clf' or 'cbf'")
        if self.rate <= 0:
            raise ValueError("rate must be positive")

    def decay(self, x):
        """Linear class-K budget evaluated at the certificate value."""
        return self.rate * self.value(np.asarray(x, dtype=float))


def lie_derivatives(plant, cert, x):
    """Directional derivatives of the certificate along f and g.

    Returns (Lf, Lg) with Lf scalar and Lg a length-m row vector, so the
    certificate derivative under control u is Lf + Lg @ u.
    """
    x = np.asarray(x, dtype=float)
    grad = cert.gradient(x)
    return float(grad @ plant.f(x)), grad @ plant.g(x)


def certificate_rate(plant, cert, x, u):
    """Certificate time derivative Lf + Lg u at (x, u)."""
    lf, lg = lie_derivatives(plant, cert, x)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return lf + float(lg @ u)


def residual_truth(true_plant, nominal_plant, cert, x, u):
    """Exact certificate-rate error of the nominal model at (x, u)."""
    if (true_plant.n, true_plant.m) != (nominal_plant.n, nominal_plant.m):
        raise ValueError("plants must share state and control dimensions")
    return certificate_rate(true_plant, cert, x, u) - certificate_rate(
        nominal_plant, cert, x, u
    )


def measure_residuals(x_t, x_next, u, dt, cert_clf, cert_cbf, nominal_plant):
    """Residual measurements from one trajectory segment.

    The finite difference of the certificate over [t, t+dt) minus the
    nominal-model rate at the segment midpoint approximates the residual
    there; u is the (zero-order-held) control over the segment.

    Returns (x_mid, u, z_V, z_B).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x_t = np.asarray(x_t, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    x_mid = 0.5 * (x_t + x_next)
    z_v = (cert_clf.value(x_next) - cert_clf.value(x_t)) / dt - certificate_rate(
        nominal_plant, cert_clf, x_mid, u
    )
    z_b = (cert_cbf.value(x_next) - cert_cbf.value(x_t)) / dt - certificate_rate(
        nominal_plant, cert_cbf, x_mid, u
    )
    return x_mid, u, z_v, z_b


# -- adaptive cruise control ------------------------------------------------


@dataclass(frozen=True)
class AccParams:
    """Longitudinal car-following model parameters.

    State is x = [v, z]: ego velocity and gap to the front car.  The
    control is the wheel force.  Rolling resistance is the polynomial
    F_r(v) = f0 + f1 v + f2 v^2; the front car drives at constant v0.
    v_d is the ego speed command and t_headway the lookahead time in the
    safe-distance constraint z >= t_headway * v.
    """

    mass: float = 1650.0
    f0: float = 0.1
    f1: float = 5.0
    f2: float = 0.25
    v0: float = 14.0
    v_d: float = 24.0
    t_headway: float = 1.8

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.t_headway <= 0:
            raise ValueError("t_headway must be positive")

    def rolling_resistance(self, v):
        return self.f0 + self.f1 * v + self.f2 * v * v


ACC_NOMINAL = AccParams(mass=1650.0, f0=0.1, f1=5.0, f2=0.25)
ACC_TRUE = AccParams(mass=3300.0, f0=0.2, f1=10.0, f2=0.5)


def acc_plant(params, label="true"):
    """Cruise-control plant with state [v, z] and wheel-force input.

    vdot = (u - F_r(v)) / mass, zdot = v0 - v; the force enters the
    velocity equation so g(x) = [1/mass, 0].
    """

    def f(x):
        v = x[0]
        return np.array([-params.rolling_resistance(v) / params.mass,
                         params.v0 - v])

    def g(x):
        return np.array([[1.0 / params.mass], [0.0]])

    return PlantModel(n=2, m=1, f=f, g=g, label=label)


def acc_clf(params, rate=1.0):
    """Velocity-tracking Lyapunov function V(x) = (v - v_d)^2."""
    v_d = params.v_d

    def value(x):
        return float((x[0] - v_d) ** 2)

    def gradient(x):
        return np.array([2.0 * (x[0] - v_d), 0.0])

    return CertificateFunction(kind="clf", value=value, gradient=gradient, rate=rate)


def acc_cbf(params, rate=1.0):
    """Safe-distance barrier B(x) = z - t_headway * v."""
    th = params.t_headway

    def value(x):
        return float(x[1] - th * x[0])

    def gradient(x):
        return np.array([-th, 1.0])

    return CertificateFunction(kind="cbf", value=value, gradient=gradient, rate=rate)
