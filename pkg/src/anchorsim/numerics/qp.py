"""Dense convex QP solver.

Equality constraints are eliminated with a null-space basis; the reduced
inequality-constrained problem is solved with the Goldfarb-Idnani dual
active-set method.  Primal infeasibility is reported together with a
verified Farkas certificate.

Problem form::

    minimize    0.5 x' H x + g' x
    subject to  A_eq x  = b_eq
                A_ineq x <= b_ineq
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..exceptions import DimensionMismatch


class QpStatus(str, Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    MAX_ITERATIONS = "MaxIterations"


def _as_rows(A, b, n):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.asarray(A, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float).reshape(-1)
    return A, b


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    A_ineq: np.ndarray = None
    b_ineq: np.ndarray = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = self.H.shape[0]
        if self.H.shape != (n, n):
            raise DimensionMismatch(f"H must be square, got {self.H.shape}")
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        if self.g.shape != (n,):
            raise DimensionMismatch(f"g has {self.g.size} entries, expected {n}")
        self.A_eq, self.b_eq = _as_rows(self.A_eq, self.b_eq, n)
        self.A_ineq, self.b_ineq = _as_rows(self.A_ineq, self.b_ineq, n)
        if self.A_eq.shape[0] != self.b_eq.size or self.A_ineq.shape[0] != self.b_ineq.size:
            raise DimensionMismatch("constraint matrix and bound row counts differ")
        scale = max(1.0, np.abs(self.H).max(initial=0.0))
        if np.abs(self.H - self.H.T).max(initial=0.0) > 1e-12 * scale:
            raise ValueError("H must be symmetric")
        self.H = 0.5 * (self.H + self.H.T)
        if n and np.linalg.eigvalsh(self.H).min() < -1e-10 * scale:
            raise ValueError("H must be positive semidefinite")

    @property
    def n(self):
        return self.H.shape[0]

    def objective(self, x):
        return 0.5 * x @ self.H @ x + self.g @ x


@dataclass
class QpOutcome:
    status: QpStatus
    x: np.ndarray = None
    objective: float = None
    iterations: int = 0
    multipliers: np.ndarray = None  # inequality multipliers, >= 0
    certificate: np.ndarray = field(default=None, repr=False)

    @property
    def optimal(self):
        return self.status is QpStatus.OPTIMAL


class _Infeasible(Exception):
    def __init__(self, weights):
        self.weights = weights


class _IterationCap(Exception):
    pass


def _goldfarb_idnani(G, a, C, d, tol, budget):
    """min 0.5 y'Gy + a'y  s.t.  C y <= d, for positive definite G.

    Returns (y, multipliers, iterations).  Raises _Infeasible with
    nonnegative row weights w such that w @ C = 0 and w @ d < 0.
    """
    n = G.shape[0]
    m = C.shape[0]
    Ginv = np.linalg.inv(G)
    Ginv = 0.5 * (Ginv + Ginv.T)
    # GI works with normals N_i' y >= b_i
    Nrm = -C
    bnd = -d
    row_scale = np.maximum(np.linalg.norm(C, axis=1), 1e-300)

    y = -Ginv @ a
    active = []
    u = np.zeros(0)
    it = 0
    while True:
        slack = Nrm @ y - bnd
        viol = -slack / row_scale
        if active:
            viol[active] = -np.inf
        if m == 0 or viol.max() <= tol:
            mult = np.zeros(m)
            mult[active] = u
            return y, mult, it
        p = int(np.argmax(viol))  # lowest index wins ties
        u_plus = np.append(u, 0.0)
        n_p = Nrm[p]
        while True:
            it += 1
            if it > budget:
                raise _IterationCap()
            if active:
                Na = Nrm[active].T
                Mk = Na.T @ Ginv @ Na
                r = np.linalg.solve(Mk, Na.T @ Ginv @ n_p)
                z = Ginv @ (n_p - Na @ r)
            else:
                r = np.zeros(0)
                z = Ginv @ n_p
            zn = z @ n_p
            znorm = n_p @ Ginv @ n_p
            full_ok = zn > 1e-13 * max(znorm, 1e-300)

            t1, k_drop = np.inf, -1
            for j, rj in enumerate(r):
                if rj > 1e-14:
                    tj = u_plus[j] / rj
                    if tj < t1:
                        t1, k_drop = tj, j
            t2 = -(n_p @ y - bnd[p]) / zn if full_ok else np.inf

            if not np.isfinite(t1) and not np.isfinite(t2):
                w = np.zeros(m)
                w[p] = 1.0
                for j, idx in enumerate(active):
                    w[idx] = max(-r[j], 0.0)
                raise _Infeasible(w)

            t = min(t1, t2)
            if not full_ok:
                # dual-only step, then drop the blocking constraint
                u_plus[:-1] -= t * r
                u_plus[-1] += t
                del active[k_drop]
                u_plus = np.delete(u_plus, k_drop)
                continue

            y = y + t * z
            u_plus[:-1] -= t * r
            u_plus[-1] += t
            if t2 <= t1:
                active.append(p)
                u = u_plus
                break
            del active[k_drop]
            u_plus = np.delete(u_plus, k_drop)


def _null_space(A, tol):
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(n), 0
    U, s, Vt = np.linalg.svd(A)
    rank = int(np.sum(s > tol * max(1.0, s[0] if s.size else 0.0)))
    return Vt[rank:].T, rank


def solve_qp(problem, tol=1e-9, max_iter=4000):
    """Solve a convex QP; see the module docstring for the problem form."""
    p = problem
    n = p.n

    # equality elimination: x = x0 + Z y
    if p.A_eq.shape[0]:
        x0, *_ = np.linalg.lstsq(p.A_eq, p.b_eq, rcond=None)
        eq_res = p.A_eq @ x0 - p.b_eq
        if np.abs(eq_res).max() > tol * max(1.0, np.abs(p.b_eq).max()):
            return QpOutcome(QpStatus.PRIMAL_INFEASIBLE, certificate=eq_res)
        Z, _ = _null_space(p.A_eq, 1e-12)
    else:
        x0 = np.zeros(n)
        Z = np.eye(n)

    k = Z.shape[1]
    Hr = Z.T @ p.H @ Z
    gr = Z.T @ (p.H @ x0 + p.g)
    Cr = p.A_ineq @ Z
    dr = p.b_ineq - p.A_ineq @ x0

    # rows that vanish after elimination are either redundant or infeasible
    row_norm = np.linalg.norm(Cr, axis=1)
    dead = row_norm <= 1e-12 * np.maximum(1.0, np.linalg.norm(p.A_ineq, axis=1))
    if np.any(dead & (dr < -tol)):
        w = np.zeros(p.A_ineq.shape[0])
        w[np.argmax(np.where(dead, -dr, -np.inf))] = 1.0
        return QpOutcome(QpStatus.PRIMAL_INFEASIBLE, certificate=w)
    live = ~dead
    Cl, dl = Cr[live], dr[live]

    if k == 0:
        y = np.zeros(0)
        mult = np.zeros(p.A_ineq.shape[0])
        return _finish(p, x0, Z, y, mult, 0, tol)

    scale = max(1.0, np.abs(Hr).max(initial=0.0))
    lam_min = np.linalg.eigvalsh(Hr).min()
    try:
        if lam_min > 1e-10 * scale:
            y, mult_l, its = _goldfarb_idnani(Hr, gr, Cl, dl, tol, max_iter)
        else:
            y, mult_l, its = _proximal(Hr, gr, Cl, dl, tol, max_iter, scale)
    except _Infeasible as exc:
        w = np.zeros(p.A_ineq.shape[0])
        w[live] = exc.weights
        if not _verify_farkas(Cl, dl, exc.weights, tol):
            return QpOutcome(QpStatus.MAX_ITERATIONS, certificate=w)
        return QpOutcome(QpStatus.PRIMAL_INFEASIBLE, certificate=w)
    except _IterationCap:
        return QpOutcome(QpStatus.MAX_ITERATIONS, iterations=max_iter)
    mult = np.zeros(p.A_ineq.shape[0])
    mult[live] = mult_l
    return _finish(p, x0, Z, y, mult, its, tol)


def _proximal(Hr, gr, C, d, tol, budget, scale):
    # proximal-point outer loop for singular reduced Hessians
    rho = 1e-4 * scale
    G = Hr + rho * np.eye(Hr.shape[0])
    y = np.zeros(Hr.shape[0])
    used = 0
    for _ in range(500):
        y_new, mult, its = _goldfarb_idnani(G, gr - rho * y, C, d, tol, budget - used)
        used += its
        step = np.linalg.norm(y_new - y)
        y = y_new
        if step <= 1e-2 * tol * (1.0 + np.linalg.norm(y)):
            return y, mult, used
    raise _IterationCap()


def _verify_farkas(C, d, w, tol):
    if np.any(w < 0) or w.sum() <= 0:
        return False
    w = w / w.sum()
    lhs = np.abs(w @ C).max(initial=0.0)
    gap = w @ d
    scale = max(1.0, np.abs(C).max(initial=0.0))
    return lhs <= 1e-7 * scale and gap < -0.1 * tol


def _finish(p, x0, Z, y, mult, its, tol):
    x = x0 + Z @ y
    return QpOutcome(
        QpStatus.OPTIMAL,
        x=x,
        objective=float(p.objective(x)),
        iterations=its,
        multipliers=mult,
    )


def kkt_residuals(problem, outcome):
    """Max-abs residuals (equality, inequality violation) of an outcome."""
    x = outcome.x
    eq = np.abs(problem.A_eq @ x - problem.b_eq).max(initial=0.0)
    ineq = np.maximum(problem.A_ineq @ x - problem.b_ineq, 0.0).max(initial=0.0)
    return eq, ineq
