"""Time stepping for the coupled bulk-surface free-boundary flow.

Each step works on the current configuration x^m:

1. assemble all operators at x^m,
2. solve the Robin problem  L u = f_u(x, H),
3. normal velocity law      V = -beta H + alpha u on the boundary,
4. advance the surface fields with a linearly implicit Euler step
   (matrices frozen at x^m, nonlinear loads evaluated at the old state):
       (M + tau beta A) n+ = M n + tau (f_n(x, n) - alpha D u_G)
       (M + tau beta A) H+ = M H + tau (f_H(x, n, V) + alpha A u_G)
5. boundary velocity v_G = V * n (componentwise nodal product; the
   post-update normal is used by default, see ``velocity_normal``),
6. harmonic extension of v_G into the bulk:  A_ii v_i = -A_ig v_G,
7. move the nodes: x^{m+1} = x^m + tau v.

The nodal normal field is never renormalized; |n_j| - 1 is monitored as a
drift diagnostic.  An explicit fourth-order Runge-Utta mode integrating
the same spatial semi-discretization is available for time-refinement
studies.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import hashlib
import numpy as np
from scipy.sparse.linalg import splu

from .assembly import (assemble_operator_set, load_f_H, load_f_n, load_f_u)
from .geometry import init_surface_fields
from .mesh import bulk_geometry, surface_geometry, radius_ratios


class LinearSolveError(RuntimeError):
    """A linear solve failed to reach the requested residual tolerance."""


class QualityAbort(RuntimeError):
    """Mesh quality fell below the configured abort thresholds."""


@dataclass
class StepperConfig:
    alpha: float = 1.0
    beta: float = 1.0
    tau: float = 1e-3
    t_end: float = 1.0
    scheme: str = "semi_implicit"      # "semi_implicit" | "rk4"
    velocity_normal: str = "post"      # "post" | "pre" update normal in v_G
    quadrature_order: Optional[int] = None
    solver_tol: float = 1e-11
    min_radius_ratio: float = 0.05
    min_jacobian: float = 1e-12
    normal_drift_budget: float = 0.05
    store_states: str = "ends"         # "all" | "ends"

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.alpha <= 0 or self.beta < 0:
            raise ValueError("alpha must be positive, beta nonnegative")
        if self.scheme not in ("semi_implicit", "rk4"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.velocity_normal not in ("post", "pre"):
            raise ValueError(f"unknown velocity_normal {self.velocity_normal!r}")


@dataclass
class NodalState:
    """All nodal unknowns at one time (boundary-first node ordering)."""

    t: float
    x: np.ndarray      # (N, 3) node positions
    u: np.ndarray      # (N,) bulk pressure-like unknown
    n: np.ndarray      # (n_surface, 3) evolving normal field
    H: np.ndarray      # (n_surface,) evolving mean curvature
    V: np.ndarray      # (n_surface,) normal velocity
    v: np.ndarray      # (N, 3) nodal velocity


@dataclass
class Trajectory:
    states: list
    diagnostics: dict
    failure: Optional[str] = None

    @property
    def final(self) -> NodalState:
        return self.states[-1]


def _solve_checked(mat, rhs, tol, what):
    lu = splu(mat.tocsc())
    rhs = np.asarray(rhs, dtype=float)
    squeeze = rhs.ndim == 1
    b = rhs[:, None] if squeeze else rhs
    x = lu.solve(b)
    res = np.linalg.norm(mat @ x - b, axis=0)
    scale = np.linalg.norm(b, axis=0)
    bad = res > tol * np.maximum(scale, 1e-300)
    if np.any(bad & (scale > 0)):
        raise LinearSolveError(
            f"{what}: relative residual {res.max() / max(scale.max(), 1e-300):.2e} "
            f"exceeds tol {tol:.1e}")
    return x[:, 0] if squeeze else x


def solve_robin(ops, f_u, tol=1e-11):
    """Solve the Robin problem L u = f_u on the current configuration."""
    return _solve_checked(ops.L, f_u, tol, "Robin solve")


def compute_normal_velocity(H, u_trace, alpha, beta):
    """Forced mean curvature flow law V = -beta H + alpha u on the boundary."""
    return -beta * np.asarray(H, float) + alpha * np.asarray(u_trace, float)


def assemble_boundary_velocity(V, n):
    """Nodal boundary velocity v_j = V_j n_j, shape (n_surface, 3)."""
    return np.asarray(V, float)[:, None] * np.asarray(n, float)


def harmonic_extension(ops, v_gamma, tol=1e-11):
    """Extend boundary velocity into the bulk: A_ii v_i = -A_ig v_G.

    Componentwise discrete harmonic extension; returns the full (N, 3)
    velocity with the boundary rows equal to v_gamma.
    """
    v_gamma = np.asarray(v_gamma, dtype=float)
    n_i = ops.A_bulk.shape[0] - ops.n_surface
    out = np.empty((ops.A_bulk.shape[0], 3))
    out[:ops.n_surface] = v_gamma
    if n_i:
        rhs = -(ops.A_ig @ v_gamma)
        out[ops.n_surface:] = _solve_checked(ops.A_ii, rhs, tol,
                                             "harmonic extension")
    return out


def advance_surface_fields(ops, mesh, state, u, V, tau, alpha, beta,
                           geo_surf=None, tol=1e-11):
    """One linearly implicit Euler step of the normal/curvature system."""
    ng = ops.n_surface
    u_g = u[:ng]
    fn = load_f_n(mesh, state.n, beta, geo_surf=geo_surf)
    fH = load_f_H(mesh, state.n, V, geo_surf=geo_surf)
    Du = ops.D @ u_g
    Au = ops.A_surf @ u_g
    lhs = (ops.M_surf + tau * beta * ops.A_surf).tocsc()
    lu = splu(lhs)
    n_new = np.empty_like(state.n)
    for l in range(3):
        rhs = ops.M_surf @ state.n[:, l] + tau * (fn[l * ng:(l + 1) * ng]
                                                  - alpha * Du[l * ng:(l + 1) * ng])
        n_new[:, l] = lu.solve(rhs)
    rhs_H = ops.M_surf @ state.H + tau * (fH + alpha * Au)
    H_new = lu.solve(rhs_H)
    res = np.linalg.norm(lhs @ H_new - rhs_H) / max(np.linalg.norm(rhs_H), 1e-300)
    if res > tol:
        raise LinearSolveError(f"surface-field solve residual {res:.2e}")
    return n_new, H_new


def _check_quality(mesh, config, det):
    if det.min() <= config.min_jacobian:
        raise QualityAbort(f"Jacobian determinant {det.min():.3e} below "
                           f"threshold {config.min_jacobian:.1e}")
    ratio = float(radius_ratios(mesh).min())
    if ratio < config.min_radius_ratio:
        raise QualityAbort(f"radius ratio {ratio:.3f} below "
                           f"threshold {config.min_radius_ratio}")
    return ratio, float(det.min())


def step(mesh, state, config, q_fun):
    """Advance one time step (mesh nodes are updated in place)."""
    if config.scheme == "rk4":
        return _step_rk4(mesh, state, config, q_fun)
    order = config.quadrature_order
    geo_b = bulk_geometry(mesh, order=order)
    geo_s = surface_geometry(mesh, order=order)
    _check_quality(mesh, config, geo_b["det"])
    ops = assemble_operator_set(mesh, config.alpha, order=order,
                                geo_bulk=geo_b, geo_surf=geo_s)
    ng = mesh.n_surface
    Q = q_fun(mesh.nodes[:ng], state.t)
    f_u = load_f_u(mesh, state.H, Q, config.beta, geo_bulk=geo_b,
                   geo_surf=geo_s)
    u = solve_robin(ops, f_u, config.solver_tol)
    V = compute_normal_velocity(state.H, u[:ng], config.alpha, config.beta)
    n_new, H_new = advance_surface_fields(ops, mesh, state, u, V, config.tau,
                                          config.alpha, config.beta,
                                          geo_surf=geo_s, tol=config.solver_tol)
    drift = float(np.abs(np.linalg.norm(n_new, axis=1) - 1.0).max())
    if drift > config.normal_drift_budget:
        raise QualityAbort(f"normal drift {drift:.3f} exceeds budget "
                           f"{config.normal_drift_budget}")
    n_for_velocity = n_new if config.velocity_normal == "post" else state.n
    v_gamma = assemble_boundary_velocity(V, n_for_velocity)
    v = harmonic_extension(ops, v_gamma, config.solver_tol)
    x_new = state.x + config.tau * v
    mesh.move_nodes(x_new)
    return NodalState(t=state.t + config.tau, x=x_new, u=u, n=n_new,
                      H=H_new, V=V, v=v)


def _rates(mesh, t, x, n, H, config, q_fun):
    """Instantaneous rates (dx/dt, dn/dt, dH/dt) of the semi-discretization."""
    mesh.move_nodes(x)
    order = config.quadrature_order
    geo_b = bulk_geometry(mesh, order=order)
    geo_s = surface_geometry(mesh, order=order)
    _check_quality(mesh, config, geo_b["det"])
    ops = assemble_operator_set(mesh, config.alpha, order=order,
                                geo_bulk=geo_b, geo_surf=geo_s)
    ng = mesh.n_surface
    Q = q_fun(mesh.nodes[:ng], t)
    f_u = load_f_u(mesh, H, Q, config.beta, geo_bulk=geo_b, geo_surf=geo_s)
    u = solve_robin(ops, f_u, config.solver_tol)
    V = compute_normal_velocity(H, u[:ng], config.alpha, config.beta)
    fn = load_f_n(mesh, n, config.beta, geo_surf=geo_s)
    fH = load_f_H(mesh, n, V, geo_surf=geo_s)
    Du = ops.D @ u[:ng]
    Au = ops.A_surf @ u[:ng]
    lu = splu(ops.M_surf.tocsc())
    n_dot = np.empty_like(n)
    for l in range(3):
        n_dot[:, l] = lu.solve(fn[l * ng:(l + 1) * ng]
                               - config.alpha * Du[l * ng:(l + 1) * ng]
                               - config.beta * (ops.A_surf @ n[:, l]))
    H_dot = lu.solve(fH + config.alpha * Au - config.beta * (ops.A_surf @ H))
    v = harmonic_extension(ops, assemble_boundary_velocity(V, n),
                           config.solver_tol)
    return v, n_dot, H_dot, u, V


def _step_rk4(mesh, state, config, q_fun):
    tau = config.tau
    t, x, n, H = state.t, state.x, state.n, state.H
    k1 = _rates(mesh, t, x, n, H, config, q_fun)
    k2 = _rates(mesh, t + tau / 2, x + tau / 2 * k1[0], n + tau / 2 * k1[1],
                H + tau / 2 * k1[2], config, q_fun)
    k3 = _rates(mesh, t + tau / 2, x + tau / 2 * k2[0], n + tau / 2 * k2[1],
                H + tau / 2 * k2[2], config, q_fun)
    k4 = _rates(mesh, t + tau, x + tau * k3[0], n + tau * k3[1],
                H + tau * k3[2], config, q_fun)
    x_new = x + tau / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    n_new = n + tau / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    H_new = H + tau / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    drift = float(np.abs(np.linalg.norm(n_new, axis=1) - 1.0).max())
    if drift > config.normal_drift_budget:
        raise QualityAbort(f"normal drift {drift:.3f} exceeds budget "
                           f"{config.normal_drift_budget}")
    v_new, _, _, u_new, V_new = _rates(mesh, t + tau, x_new, n_new, H_new,
                                       config, q_fun)
    mesh.move_nodes(x_new)
    return NodalState(t=t + tau, x=x_new, u=u_new, n=n_new, H=H_new,
                      V=V_new, v=v_new)


def initial_state(mesh, config, q_fun, surface=None) -> NodalState:
    """State at t = 0: exact nodal geometry fields plus a consistent
    Robin solve, velocity law and harmonic extension (no motion yet)."""
    n0, H0 = init_surface_fields(mesh, surface)
    order = config.quadrature_order
    geo_b = bulk_geometry(mesh, order=order)
    geo_s = surface_geometry(mesh, order=order)
    ops = assemble_operator_set(mesh, config.alpha, order=order,
                                geo_bulk=geo_b, geo_surf=geo_s)
    ng = mesh.n_surface
    Q = q_fun(mesh.nodes[:ng], 0.0)
    f_u = load_f_u(mesh, H0, Q, config.beta, geo_bulk=geo_b, geo_surf=geo_s)
    u = solve_robin(ops, f_u, config.solver_tol)
    V = compute_normal_velocity(H0, u[:ng], config.alpha, config.beta)
    v = harmonic_extension(ops, assemble_boundary_velocity(V, n0),
                           config.solver_tol)
    return NodalState(t=0.0, x=mesh.nodes.copy(), u=u, n=n0, H=H0, V=V, v=v)


def run(mesh, config, q_fun, surface=None) -> Trajectory:
    """Integrate to t_end, recording per-step diagnostics.

    On a quality abort the trajectory computed so far is returned with the
    failure message in ``failure``; linear solver errors propagate.
    """
    from .mesh import mean_surface_radius

    n_steps = int(round(config.t_end / config.tau))
    if abs(n_steps * config.tau - config.t_end) > 1e-9 * max(config.t_end, 1.0):
        raise ValueError("t_end must be an integer multiple of tau")
    state = initial_state(mesh, config, q_fun, surface)
    keep_all = config.store_states == "all"
    states = [state]
    diag = {k: [] for k in ("t", "mean_radius", "normal_drift",
                            "min_jacobian", "min_radius_ratio")}
    failure = None

    def record(st):
        diag["t"].append(st.t)
        diag["mean_radius"].append(mean_surface_radius(mesh,
                                                       config.quadrature_order))
        diag["normal_drift"].append(
            float(np.abs(np.linalg.norm(st.n, axis=1) - 1.0).max()))
        det = bulk_geometry(mesh, order=1)["det"]
        diag["min_jacobian"].append(float(det.min()))
        diag["min_radius_ratio"].append(float(radius_ratios(mesh).min()))

    record(state)
    for m in range(n_steps):
        try:
            state = step(mesh, state, config, q_fun)
        except QualityAbort as exc:
            failure = str(exc)
            break
        record(state)
        if keep_all:
            states.append(state)
    if not keep_all:
        states.append(state)
    return Trajectory(states=states, diagnostics=diag, failure=failure)


def trajectory_digest(traj: Trajectory, decimals: int = 8) -> str:
    """Order-sensitive hash of the final state and radius history,
    rounded to make the digest robust to last-bit noise."""
    h = hashlib.sha256()
    st = traj.final
    for arr in (st.x, st.u, st.n, st.H, st.V, st.v):
        h.update(np.round(np.asarray(arr, float), decimals).tobytes())
    h.update(np.round(np.asarray(traj.diagnostics["mean_radius"]),
                      decimals).tobytes())
    return h.hexdigest()


def constant_source(value):
    """Spatially constant mass-exchange term Q."""
    val = float(value)

    def q_fun(points, t):
        return np.full(len(points), val)

    return q_fun
