"""Task-space torque synthesis.

Two routes from a centroidal command to joint torques:

* feedback linearization, ``tau = A_G' Lam (u - Adot qd + A_G H^-1 (C qd + tau_g))``
  with ``Lam = (A_G H^-1 A_G')^-1``, plus a posture torque pushed through the
  dynamically consistent null-space projector;
* the baseline tracking QP over ``(qdd, tau, corner forces)``.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NearSingularTaskInertia
from .numerics import QpProblem, QpStatus, solve_qp
from .rigid_body import compute_dynamics, spatial_force_transform


@dataclass
class WholeBodyCommand:
    tau: np.ndarray
    u_task_applied: np.ndarray
    nullspace_tau: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def _task_inertia(dyn, cond_cap, strict):
    HinvAT = np.linalg.solve(dyn.H, dyn.A_G.T)
    Lam_inv = dyn.A_G @ HinvAT
    Lam_inv = 0.5 * (Lam_inv + Lam_inv.T)
    cond = np.linalg.cond(Lam_inv)
    regularized = False
    if not np.isfinite(cond) or cond > cond_cap:
        if strict:
            raise NearSingularTaskInertia(f"task inertia condition number {cond:.3g}")
        delta = 1e-8 * np.trace(Lam_inv) / 3.0
        Lam_inv = Lam_inv + delta * np.eye(3)
        regularized = True
    Lam = np.linalg.inv(Lam_inv)
    return Lam, HinvAT, cond, regularized


def feedback_linearize(model, s, u_task, dyn=None, cond_cap=1e8, strict=False):
    """Torques that make ``hdot_G`` equal ``u_task`` on the model."""
    if dyn is None:
        dyn = compute_dynamics(model, s)
    u_task = np.asarray(u_task, float)
    Lam, HinvAT, cond, reg = _task_inertia(dyn, cond_cap, strict)
    bias = dyn.Cqd + dyn.tau_g
    rhs = u_task - dyn.Adot_qd + HinvAT.T @ bias  # A_G H^-1 = (H^-1 A_G')'
    tau = dyn.A_G.T @ (Lam @ rhs)
    return WholeBodyCommand(
        tau=tau,
        u_task_applied=u_task,
        nullspace_tau=np.zeros(model.n),
        diagnostics={"lambda_cond": float(cond), "regularized": reg},
    )


def nullspace_projector(dyn, cond_cap=1e8):
    """``N = I - A_G' Lam A_G H^-1``; ``A_G H^-1 N = 0``."""
    Lam, HinvAT, _, _ = _task_inertia(dyn, cond_cap, strict=False)
    return np.eye(dyn.H.shape[0]) - dyn.A_G.T @ Lam @ HinvAT.T


def posture_torque(s, q_nom, Kp0, Kd0):
    return -np.asarray(Kp0) * (s.q - np.asarray(q_nom, float)) - np.asarray(Kd0) * s.qd


def nullspace_posture(model, s, q_nom, Kp0, Kd0, dyn=None, cond_cap=1e8):
    """Posture PD torque projected so it has no centroidal effect."""
    if dyn is None:
        dyn = compute_dynamics(model, s)
    return nullspace_projector(dyn, cond_cap) @ posture_torque(s, q_nom, Kp0, Kd0)


def proposed_torques(model, s, u_task, q_nom, Kp0, Kd0, dyn=None, cond_cap=1e8, use_nullspace=True):
    if dyn is None:
        dyn = compute_dynamics(model, s)
    cmd = feedback_linearize(model, s, u_task, dyn=dyn, cond_cap=cond_cap)
    if use_nullspace:
        cmd.nullspace_tau = nullspace_posture(model, s, q_nom, Kp0, Kd0, dyn=dyn, cond_cap=cond_cap)
        cmd.tau = cmd.tau + cmd.nullspace_tau
    return cmd


# --- baseline -------------------------------------------------------------


@dataclass(frozen=True)
class BaselineQpConfig:
    w: float = 0.1
    tau_min: tuple = (-200.0, -200.0, -200.0, -200.0)
    tau_max: tuple = (200.0, 200.0, 200.0, 200.0)
    Kp0: float = 50.0
    Kd0: float = 10.0
    K_P: tuple = ((10.0, 0.0), (0.0, 10.0))
    K_D: tuple = ((10.2, 0.0), (0.0, 10.2))
    K_ang: float = 10.0
    force_weight: float = 1e-8  # picks the minimum-norm split between heel and toe

    def __post_init__(self):
        if self.w < 0:
            raise ValueError("w must be nonnegative")
        if np.any(np.asarray(self.tau_min) >= np.asarray(self.tau_max)):
            raise ValueError("tau_min must be below tau_max")


@dataclass
class BaselineResult:
    tau: np.ndarray
    status: QpStatus
    qdd: np.ndarray = None
    contact_forces: np.ndarray = None
    ground_wrench: np.ndarray = None
    solve_time: float = 0.0


def _corner_wrench_map(d):
    """3x4 map from stacked heel/toe forces ``(f_x, f_z)`` to the wrench at the origin."""
    W = np.zeros((3, 4))
    for j, px in enumerate((-d, d)):
        W[:, 2 * j : 2 * j + 2] = [[0.0, -px], [1.0, 0.0], [0.0, 1.0]]
    return W


def baseline_qp_control(model, s, u_com, cfg, cwc, q_nom, dyn=None):
    """Solve the tracking QP; returns a :class:`BaselineResult`."""
    if dyn is None:
        dyn = compute_dynamics(model, s)
    n = model.n
    nv = 2 * n + 4
    iq, it, ic = slice(0, n), slice(n, 2 * n), slice(2 * n, nv)
    J, bJ = dyn.J_com, dyn.Jdot_com_qd
    qdd_des = -cfg.Kp0 * (s.q - np.asarray(q_nom, float)) - cfg.Kd0 * s.qd

    H = np.zeros((nv, nv))
    g = np.zeros(nv)
    H[iq, iq] = 2.0 * (J.T @ J + cfg.w * np.eye(n))
    g[iq] = 2.0 * (J.T @ (bJ - np.asarray(u_com, float)) - cfg.w * qdd_des)
    H[ic, ic] = 2.0 * cfg.force_weight * np.eye(4)

    # H qdd - tau = -(C qd + tau_g);  W f_c - X A_G qdd = X (Adot qd - w_g) + w_foot
    X = spatial_force_transform(dyn.p_G)
    w_g = np.array([0.0, 0.0, -dyn.mass * model.gravity])
    A_eq = np.zeros((n + 3, nv))
    b_eq = np.zeros(n + 3)
    A_eq[:n, iq] = dyn.H
    A_eq[:n, it] = -np.eye(n)
    b_eq[:n] = -(dyn.Cqd + dyn.tau_g)
    A_eq[n:, ic] = _corner_wrench_map(cwc.half_length)
    A_eq[n:, iq] = -X @ dyn.A_G
    b_eq[n:] = X @ (dyn.Adot_qd - w_g) + cwc.base_wrench

    mu = cwc.mu
    rows, rhs = [], []
    for j in range(2):
        fx, fz = 2 * n + 2 * j, 2 * n + 2 * j + 1
        for row in ((1.0, -mu), (-1.0, -mu), (0.0, -1.0)):
            r = np.zeros(nv)
            r[fx], r[fz] = row
            rows.append(r)
            rhs.append(0.0)
    for i in range(n):
        r = np.zeros(nv)
        r[n + i] = 1.0
        rows.append(r)
        rhs.append(cfg.tau_max[i])
        rows.append(-r)
        rhs.append(-cfg.tau_min[i])

    t0 = time.perf_counter()
    out = solve_qp(QpProblem(H=H, g=g, A_eq=A_eq, b_eq=b_eq, A_ineq=np.array(rows), b_ineq=np.array(rhs)))
    elapsed = time.perf_counter() - t0
    if not out.optimal:
        return BaselineResult(tau=None, status=out.status, solve_time=elapsed)
    z = out.x
    fc = z[ic]
    return BaselineResult(
        tau=z[it].copy(),
        status=out.status,
        qdd=z[iq].copy(),
        contact_forces=fc.reshape(2, 2),
        ground_wrench=_corner_wrench_map(cwc.half_length) @ fc,
        solve_time=elapsed,
    )


def template_tracking_ucom(x_lip, u_lip, x_task, K_P, K_D, K_ang, omega, m):
    """PD tracking of the pendulum: returns ``(u_com, kdot)``.

    ``u_com = [xdd_lip; 0] + K_D (v_lip - v_G) + K_P (p_lip - p_G)`` and
    ``kdot = -K_ang k_G``.
    """
    x_lip = np.asarray(x_lip, float)
    x_task = np.asarray(x_task, float)
    ff = np.array([omega**2 * (x_lip[0] - float(np.squeeze(u_lip))), 0.0])
    v_lip = x_lip[3:5] / m
    v_G = x_task[3:5] / m
    u_com = ff + np.asarray(K_D, float) @ (v_lip - v_G) + np.asarray(K_P, float) @ (x_lip[:2] - x_task[:2])
    return u_com, -float(K_ang) * x_task[2]
