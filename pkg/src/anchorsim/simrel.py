"""Approximate simulation of the pendulum template by the centroidal task model.

The task model is a chain of integrators: momentum rates are the inputs and
the CoM moves with ``p / m``.  A gain ``K`` that makes ``A_task + B_task K``
decay faster than ``lam`` yields a matrix ``M`` and the simulation function
``V = sqrt(e' M e)`` with ``e = x_task - P x_lip``.  The interface

    u_task = R u_lip + Q x_lip + K (x_task - P x_lip)

keeps ``V`` bounded by ``max(V(0), gamma * sup|u_lip|)``.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DecayTooFast, DimensionMismatch
from .numerics import solve_care
from .numerics.matrix_eq import _lyap
from .template import X, embedding_matrix

# margins that turn the strict matrix inequalities into equalities we can solve
LYAP_MARGIN = 1e-6
FLOOR_MARGIN = 1e-9


@dataclass(frozen=True)
class TaskSystem:
    A: np.ndarray
    B: np.ndarray
    m: float

    @property
    def C(self):
        return np.eye(5)


def build_task_system(m):
    if m <= 0:
        raise ValueError("mass must be positive")
    A = np.zeros((5, 5))
    A[0, 3] = A[1, 4] = 1.0 / m
    B = np.zeros((5, 3))
    B[2:, :] = np.eye(3)
    return TaskSystem(A=A, B=B, m=float(m))


def synthesize_gain(task, Qc=None, Rc=None):
    """LQR gain ``K`` (``u = K x``) for the task model."""
    Qc = np.eye(5) if Qc is None else np.asarray(Qc, float)
    Rc = 0.01 * np.eye(3) if Rc is None else np.asarray(Rc, float)
    if Qc.shape != (5, 5) or Rc.shape != (3, 3):
        raise DimensionMismatch("Qc must be 5x5 and Rc 3x3")
    _, K = solve_care(task.A, task.B, Qc, Rc)
    return K


def pd_gain(K_ang, K_P, K_D, m):
    """Feedback gain equivalent to momentum PD tracking of the template.

    ``K_ang`` acts on angular momentum, ``K_P`` (2x2) on CoM position error and
    ``K_D`` (2x2) on CoM velocity error.  Velocity error is momentum error over
    ``m``, so the momentum block is ``-K_D`` and the position block ``-m K_P``.
    """
    K_P = np.atleast_2d(np.asarray(K_P, float))
    K_D = np.atleast_2d(np.asarray(K_D, float))
    K = np.zeros((3, 5))
    K[0, 2] = -float(K_ang)
    K[1:, 0:2] = -m * K_P
    K[1:, 3:5] = -K_D
    return K


def build_PQR(task, lip):
    """Embedding ``P`` and interface matrices ``Q`` (3x5), ``R`` (3x1)."""
    if not np.isclose(task.m, lip.m):
        raise DimensionMismatch("task and template masses differ")
    mw2 = lip.m * lip.omega**2
    P = embedding_matrix()
    Q = np.zeros((3, 5))
    Q[1, X] = mw2
    R = np.zeros((3, 1))
    R[1, 0] = -mw2
    return P, Q, R


def spectral_abscissa(A):
    return float(np.linalg.eigvals(A).real.max())


def compute_M(task, K, lam):
    """Solve ``(A_cl + lam I)' M0 + M0 (A_cl + lam I) = -(1 + margin) I`` and lift ``M >= I``."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    A_cl = task.A + task.B @ K
    a = spectral_abscissa(A_cl)
    if a >= -lam:
        raise DecayTooFast(f"closed-loop abscissa {a:.4g} does not beat -lam = {-lam:.4g}")
    n = A_cl.shape[0]
    F = A_cl + lam * np.eye(n)
    M0 = _lyap(F, (1.0 + LYAP_MARGIN) * np.eye(n))
    M0 = 0.5 * (M0 + M0.T)
    alpha = max(1.0, (1.0 + FLOOR_MARGIN) / np.linalg.eigvalsh(M0).min())
    return alpha * M0


def _sqrtm_psd(M):
    w, V = np.linalg.eigh(M)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


@dataclass(frozen=True)
class SimRelation:
    task: TaskSystem
    lip: object
    K: np.ndarray
    M: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    lam: float

    @property
    def sqrt_M(self):
        return _sqrtm_psd(self.M)

    @property
    def gamma_slope(self):
        """Gain from ``sup|u_lip|`` to the bound on ``V``."""
        D = self.task.B @ self.R - self.P @ self.lip.B
        return float(np.linalg.norm(self.sqrt_M @ D, 2) / self.lam)

    def lmi_residuals(self):
        """Largest eigenvalue of each matrix inequality (all should be <= 0)."""
        A_cl = self.task.A + self.task.B @ self.K
        lyap = A_cl.T @ self.M + self.M @ A_cl + 2 * self.lam * self.M
        return {
            "decay": float(np.linalg.eigvalsh(0.5 * (lyap + lyap.T)).max()),
            "floor": float(np.linalg.eigvalsh(np.eye(5) - self.M).max()),
        }

    def interface_residuals(self):
        """Norms of ``C_task P - C_lip``, ``P A_lip - A_task P - B_task Q`` and ``B_task R - P B_lip``."""
        t, l = self.task, self.lip
        return {
            "output": float(np.linalg.norm(t.C @ self.P - l.C)),
            "drift": float(np.linalg.norm(self.P @ l.A - t.A @ self.P - t.B @ self.Q)),
            "input": float(np.linalg.norm(t.B @ self.R - self.P @ l.B)),
        }


def build_relation(task, lip, K, lam):
    M = compute_M(task, K, lam)
    P, Q, R = build_PQR(task, lip)
    return SimRelation(task=task, lip=lip, K=np.asarray(K, float), M=M, P=P, Q=Q, R=R, lam=float(lam))


def simulation_fn(rel, x_task, x_lip):
    e = np.asarray(x_task, float) - rel.P @ np.asarray(x_lip, float)
    return float(np.sqrt(max(e @ rel.M @ e, 0.0)))


def output_error(rel, x_task, x_lip):
    return float(np.linalg.norm(rel.task.C @ np.asarray(x_task, float) - rel.lip.C @ np.asarray(x_lip, float)))


def interface(rel, x_lip, u_lip, x_task):
    x_lip = np.asarray(x_lip, float)
    u = np.atleast_1d(np.asarray(u_lip, float))
    return rel.R @ u + rel.Q @ x_lip + rel.K @ (np.asarray(x_task, float) - rel.P @ x_lip)


@dataclass(frozen=True)
class EpsilonCertificate:
    V0: float
    gamma_slope: float
    u_sup: float
    epsilon: float


def epsilon_bound(rel, x_task0, x_lip0, u_sup):
    """Bound on ``V`` (and hence on the output error) for ``|u_lip| <= u_sup``."""
    if u_sup < 0:
        raise ValueError("u_sup must be nonnegative")
    V0 = simulation_fn(rel, x_task0, x_lip0)
    gam = rel.gamma_slope
    return EpsilonCertificate(V0=V0, gamma_slope=gam, u_sup=float(u_sup), epsilon=max(V0, gam * u_sup))


def closed_loop_error_matrix(rel):
    """Error dynamics ``e' = (A_task + B_task K) e`` under the interface."""
    return rel.task.A + rel.task.B @ rel.K
