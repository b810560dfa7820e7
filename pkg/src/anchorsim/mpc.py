"""Template MPC with the interface and contact constraints as QP rows.

Decision vector, stage by stage::

    [x_lip^1..N (5N), u_lip^0..N-1 (N), x_task^1..N (5N), u_task^0..N-1 (3N)]

Both models are discretized with forward Euler.  The cost penalizes the
pendulum only: stage terms for ``t = 1..N-1`` and a terminal term with
``Q_f`` at ``t = N``.  Contact rows and the momentum-rate box apply at stages
``0..N-1``.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch
from .numerics import QpProblem, QpStatus, solve_qp


@dataclass(frozen=True)
class MpcConfig:
    N: int = 5
    dt: float = 0.05
    Q_mpc: np.ndarray = field(default_factory=lambda: np.diag([10.0, 0.0, 0.0, 10.0, 0.0]))
    R_mpc: float = 5.0
    Q_f: np.ndarray = None
    ldot_max: float = 5.0
    cop_bound: float = None  # optional explicit |u_lip| <= cop_bound

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("horizon must be at least 2")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        Q = np.asarray(self.Q_mpc, float)
        object.__setattr__(self, "Q_mpc", Q)
        if self.Q_f is None:
            object.__setattr__(self, "Q_f", 100.0 * Q)
        else:
            object.__setattr__(self, "Q_f", np.asarray(self.Q_f, float))
        for W in (self.Q_mpc, self.Q_f):
            if W.shape != (5, 5) or np.linalg.eigvalsh(0.5 * (W + W.T)).min() < -1e-12:
                raise ValueError("weights must be 5x5 PSD")
        if self.R_mpc < 0:
            raise ValueError("R_mpc must be nonnegative")


@dataclass(frozen=True)
class Layout:
    N: int

    def x_lip(self, t):  # t = 1..N
        return slice(5 * (t - 1), 5 * t)

    def u_lip(self, t):  # t = 0..N-1
        return 5 * self.N + t

    def x_task(self, t):
        o = 6 * self.N
        return slice(o + 5 * (t - 1), o + 5 * t)

    def u_task(self, t):
        o = 11 * self.N
        return slice(o + 3 * t, o + 3 * (t + 1))

    @property
    def size(self):
        return 14 * self.N


@dataclass
class MpcSolution:
    status: QpStatus
    u_lip_0: float = None
    x_lip: np.ndarray = None  # (N+1, 5), row 0 is the initial state
    u_lip: np.ndarray = None  # (N,)
    x_task: np.ndarray = None
    u_task: np.ndarray = None  # (N, 3)
    objective: float = None
    solve_time: float = 0.0
    violations: dict = None

    @property
    def optimal(self):
        return self.status is QpStatus.OPTIMAL


def _check(lip, task, rel, lcwc, x_lip0, x_task0):
    if np.shape(x_lip0) != (5,) or np.shape(x_task0) != (5,):
        raise DimensionMismatch("initial states must have 5 entries")
    if lip.A.shape != (5, 5) or lip.B.shape != (5, 1) or task.B.shape != (5, 3):
        raise DimensionMismatch("unexpected system dimensions")
    if rel.K.shape != (3, 5) or lcwc.A.shape[1] != 8:
        raise DimensionMismatch("unexpected gain or contact-row dimensions")


def assemble(cfg, lip, task, rel, lcwc, x_lip0, x_task0):
    """Build the QP for one control tick."""
    x_lip0 = np.asarray(x_lip0, float)
    x_task0 = np.asarray(x_task0, float)
    _check(lip, task, rel, lcwc, x_lip0, x_task0)
    N, dt = cfg.N, cfg.dt
    L = Layout(N)
    nv = L.size
    I5 = np.eye(5)
    Al, Bl = I5 + dt * lip.A, dt * lip.B[:, 0]
    At, Bt = I5 + dt * task.A, dt * task.B
    QmKP = rel.Q - rel.K @ rel.P

    H = np.zeros((nv, nv))
    for t in range(1, N):
        H[L.x_lip(t), L.x_lip(t)] = 2.0 * cfg.Q_mpc
        H[L.u_lip(t), L.u_lip(t)] = 2.0 * cfg.R_mpc
    H[L.x_lip(N), L.x_lip(N)] = 2.0 * cfg.Q_f
    g = np.zeros(nv)

    eq_rows, eq_rhs = [], []

    def block(n_rows):
        return np.zeros((n_rows, nv))

    for t in range(N):
        # template: x^{t+1} = Al x^t + Bl u^t
        A = block(5)
        A[:, L.x_lip(t + 1)] = I5
        A[:, L.u_lip(t)] = -Bl
        rhs = np.zeros(5)
        if t == 0:
            rhs = Al @ x_lip0
        else:
            A[:, L.x_lip(t)] = -Al
        eq_rows.append(A)
        eq_rhs.append(rhs)
        # task: x^{t+1} = At x^t + Bt u^t
        A = block(5)
        A[:, L.x_task(t + 1)] = I5
        A[:, L.u_task(t)] = -Bt
        rhs = np.zeros(5)
        if t == 0:
            rhs = At @ x_task0
        else:
            A[:, L.x_task(t)] = -At
        eq_rows.append(A)
        eq_rhs.append(rhs)
        # interface: u_task = R u_lip + (Q - K P) x_lip + K x_task
        A = block(3)
        A[:, L.u_task(t)] = np.eye(3)
        A[:, L.u_lip(t)] = -rel.R[:, 0]
        rhs = np.zeros(3)
        if t == 0:
            rhs = QmKP @ x_lip0 + rel.K @ x_task0
        else:
            A[:, L.x_lip(t)] = -QmKP
            A[:, L.x_task(t)] = -rel.K
        eq_rows.append(A)
        eq_rhs.append(rhs)

    in_rows, in_rhs = [], []
    Ax, Au = lcwc.A_x, lcwc.A_u
    box = np.array([[0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
    for t in range(N):
        A = block(Ax.shape[0])
        A[:, L.u_task(t)] = Au
        rhs = lcwc.b.copy()
        if t == 0:
            rhs = rhs - Ax @ x_task0
        else:
            A[:, L.x_task(t)] = Ax
        in_rows.append(A)
        in_rhs.append(rhs)
        A = block(4)
        A[:, L.u_task(t)] = box
        in_rows.append(A)
        in_rhs.append(np.full(4, lcwc.ldot_max))
        if cfg.cop_bound is not None:
            A = block(2)
            A[0, L.u_lip(t)], A[1, L.u_lip(t)] = 1.0, -1.0
            in_rows.append(A)
            in_rhs.append(np.full(2, cfg.cop_bound))

    return QpProblem(
        H=H,
        g=g,
        A_eq=np.vstack(eq_rows),
        b_eq=np.concatenate(eq_rhs),
        A_ineq=np.vstack(in_rows),
        b_ineq=np.concatenate(in_rhs),
    )


def unpack(cfg, z, x_lip0, x_task0):
    L = Layout(cfg.N)
    N = cfg.N
    x_lip = np.vstack([x_lip0] + [z[L.x_lip(t)] for t in range(1, N + 1)])
    x_task = np.vstack([x_task0] + [z[L.x_task(t)] for t in range(1, N + 1)])
    u_lip = np.array([z[L.u_lip(t)] for t in range(N)])
    u_task = np.vstack([z[L.u_task(t)] for t in range(N)])
    return x_lip, u_lip, x_task, u_task


def plan_violations(cfg, lip, task, rel, lcwc, x_lip, u_lip, x_task, u_task):
    """Largest violation of each constraint group over the plan."""
    dt = cfg.dt
    dyn_l = dyn_t = iface = cwc = box = 0.0
    for t in range(cfg.N):
        dyn_l = max(dyn_l, np.abs(x_lip[t + 1] - x_lip[t] - dt * (lip.A @ x_lip[t] + lip.B[:, 0] * u_lip[t])).max())
        dyn_t = max(dyn_t, np.abs(x_task[t + 1] - x_task[t] - dt * (task.A @ x_task[t] + task.B @ u_task[t])).max())
        ui = rel.R[:, 0] * u_lip[t] + rel.Q @ x_lip[t] + rel.K @ (x_task[t] - rel.P @ x_lip[t])
        iface = max(iface, np.abs(u_task[t] - ui).max())
        cwc = max(cwc, lcwc.residual(x_task[t], u_task[t]).max())
        box = max(box, lcwc.box_residual(u_task[t]).max())
    return {
        "template_dynamics": float(dyn_l),
        "task_dynamics": float(dyn_t),
        "interface": float(iface),
        "cwc": float(max(cwc, 0.0)),
        "ldot_box": float(max(box, 0.0)),
    }


def step(cfg, lip, task, rel, lcwc, x_lip0, x_task0):
    """Solve one tick; infeasibility is reported through ``status``."""
    t0 = time.perf_counter()
    qp = assemble(cfg, lip, task, rel, lcwc, x_lip0, x_task0)
    out = solve_qp(qp)
    elapsed = time.perf_counter() - t0
    if not out.optimal:
        return MpcSolution(status=out.status, solve_time=elapsed)
    x_lip, u_lip, x_task, u_task = unpack(cfg, out.x, np.asarray(x_lip0, float), np.asarray(x_task0, float))
    return MpcSolution(
        status=out.status,
        u_lip_0=float(u_lip[0]),
        x_lip=x_lip,
        u_lip=u_lip,
        x_task=x_task,
        u_task=u_task,
        objective=float(out.objective),
        solve_time=elapsed,
        violations=plan_violations(cfg, lip, task, rel, lcwc, x_lip, u_lip, x_task, u_task),
    )
