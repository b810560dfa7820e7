"""Dense Lyapunov and Riccati solvers for small systems."""

import numpy as np
import scipy.linalg

from ..exceptions import NotHurwitz, NotStabilizable, Singular


def _sym(X):
    return 0.5 * (X + X.T)


def _lyap(A, W):
    # A^T M + M A = -W through the Kronecker form (I kron A^T + A^T kron I) vec(M) = -vec(W)
    n = A.shape[0]
    eye = np.eye(n)
    L = np.kron(eye, A.T) + np.kron(A.T, eye)
    lu, piv = scipy.linalg.lu_factor(L, check_finite=False)
    diag = np.abs(np.diag(lu))
    if diag.min() <= 1e-14 * max(1.0, diag.max()):
        raise Singular("Lyapunov operator is rank-deficient")
    vec = scipy.linalg.lu_solve((lu, piv), -W.reshape(-1, order="F"), check_finite=False)
    return _sym(vec.reshape(n, n, order="F"))


def solve_lyapunov(A, W):
    """Solve ``A.T @ M + M @ A = -W`` for symmetric positive definite ``M``.

    ``A`` must be Hurwitz and ``W`` symmetric positive definite.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if A.shape[0] != A.shape[1] or W.shape != A.shape:
        raise ValueError(f"incompatible shapes {A.shape} and {W.shape}")
    abscissa = np.linalg.eigvals(A).real.max()
    if abscissa >= -1e-12:
        raise NotHurwitz(f"spectral abscissa {abscissa:.3g} is not negative")
    if not np.allclose(W, W.T, rtol=1e-12, atol=1e-12):
        raise ValueError("W must be symmetric")
    if np.linalg.eigvalsh(_sym(W)).min() <= 0.0:
        raise ValueError("W must be positive definite")
    return _lyap(A, _sym(W))


def riccati_residual(A, B, Qc, Rc, S):
    return A.T @ S + S @ A - S @ B @ np.linalg.solve(Rc, B.T @ S) + Qc


def _controllable_split(A, B, tol=1e-9):
    """Orthogonal Kalman decomposition; returns (T, r) with the first r columns
    of T spanning the controllable subspace."""
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    ctrb = np.hstack(blocks)
    U, s, _ = np.linalg.svd(ctrb)
    r = int(np.sum(s > tol * max(1.0, s[0])))
    return U, r


def stabilizing_seed(A, B):
    """A gain ``K`` with ``A + B K`` Hurwitz.

    The controllable part is shifted with the Bass construction; the
    uncontrollable part must already be stable.
    """
    n = A.shape[0]
    T, r = _controllable_split(A, B)
    At = T.T @ A @ T
    Bt = T.T @ B
    if r < n:
        Auu = At[r:, r:]
        if np.linalg.eigvals(Auu).real.max() >= -1e-12:
            raise NotStabilizable("uncontrollable modes are not stable")
    if r == 0:
        return np.zeros((B.shape[1], n))
    Acc, Bc = At[:r, :r], Bt[:r]
    beta = 1.0 + max(0.0, -np.linalg.eigvals(Acc).real.min())
    # -(Acc + beta I) is Hurwitz, so this Lyapunov problem has a PD solution
    # whenever (Acc, Bc) is controllable.
    F = -(Acc + beta * np.eye(r))
    P = _lyap(F.T, 2.0 * Bc @ Bc.T)
    Kc = -Bc.T @ np.linalg.inv(P)
    Kt = np.hstack([Kc, np.zeros((B.shape[1], n - r))])
    return Kt @ T.T


def solve_care(A, B, Qc, Rc, tol=1e-10, max_iter=100):
    """Continuous-time algebraic Riccati equation by Kleinman-Newton iteration.

    Returns ``(S, K)`` with ``K = -Rc^{-1} B^T S``, so the optimal feedback is
    ``u = K x``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Qc = np.atleast_2d(np.asarray(Qc, dtype=float))
    Rc = np.atleast_2d(np.asarray(Rc, dtype=float))
    if np.linalg.eigvalsh(_sym(Rc)).min() <= 0:
        raise ValueError("Rc must be positive definite")
    if np.linalg.eigvalsh(_sym(Qc)).min() < -1e-12:
        raise ValueError("Qc must be positive semidefinite")

    K = stabilizing_seed(A, B)
    scale = 1.0 + np.linalg.norm(Qc)
    S = None
    for _ in range(max_iter):
        Acl = A + B @ K
        if np.linalg.eigvals(Acl).real.max() >= 0:
            raise NotStabilizable("Kleinman iterate lost stability")
        S = _lyap(Acl, _sym(Qc + K.T @ Rc @ K))
        K = -np.linalg.solve(Rc, B.T @ S)
        if np.linalg.norm(riccati_residual(A, B, Qc, Rc, S)) <= tol * scale:
            break
    Acl = A + B @ K
    if S is None or np.linalg.eigvals(Acl).real.max() >= 0:
        raise NotStabilizable("no stabilizing Riccati solution found")
    return S, K
