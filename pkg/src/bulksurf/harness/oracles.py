"""Closed-form reference dynamics for radially symmetric runs.

For a ball of radius R centred at the origin with a constant source
Q, the radial solution of the coupled bulk/interface problem has

    u(x) = (|x|^2 - R^2)/6 + (Q - R/3 + beta*2/R)/alpha  on the ball,
    V    = Q - R/3                                        on the sphere,

independent of alpha and beta: the curvature term beta*H entering the
flux balance is cancelled by the -beta*H term in the velocity law, so
the interface obeys the ODE

    dR/dt = Q - R/3,   R(0) = R0,

with the exact solution

    R(t) = 3Q + (R0 - 3Q) * exp(-t/3).

``radial_oracle`` evaluates that closed form; ``radial_oracle_ode``
integrates the same ODE numerically with a high-order adaptive scheme
and serves as an independent cross-check of the algebra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp


@dataclass(frozen=True)
class RadialOracle:
    """Exact radius/velocity history of the spherical solution."""

    q_const: float
    r0: float

    def radius(self, t):
        t = np.asarray(t, dtype=float)
        limit = 3.0 * self.q_const
        return limit + (self.r0 - limit) * np.exp(-t / 3.0)

    def velocity(self, t):
        """Normal velocity V(t) = Q - R(t)/3 (positive = outward)."""
        return self.q_const - self.radius(t) / 3.0

    def trace_value(self, t, alpha, beta):
        """Boundary value of u for the radial solution at time t.

        From the flux balance du/dn + alpha*u = Q + beta*H on the sphere
        of radius R(t): u_Gamma = (Q - R/3 + 2*beta/R)/alpha.
        """
        r = self.radius(t)
        return (self.q_const - r / 3.0 + 2.0 * beta / r) / alpha


def radial_oracle(q_const: float, r0: float, t: float) -> float:
    """R(t) = 3Q + (R0 - 3Q) exp(-t/3)."""
    return 3.0 * q_const + (r0 - 3.0 * q_const) * math.exp(-t / 3.0)


def radial_oracle_ode(q_const: float, r0: float, t: float,
                      rtol: float = 1e-12, atol: float = 1e-14) -> float:
    """Integrate dR/dt = Q - R/3 numerically (cross-check of the closed form)."""
    if t == 0.0:
        return r0
    sol = solve_ivp(lambda _t, r: q_const - r / 3.0, (0.0, t), [r0],
                    method="DOP853", rtol=rtol, atol=atol, dense_output=False)
    if not sol.success:  # pragma: no cover - defensive
        raise RuntimeError(f"radial ODE integration failed: {sol.message}")
    return float(sol.y[0, -1])
