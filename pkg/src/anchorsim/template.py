"""Linear inverted pendulum template in planar task coordinates.

States are 5-vectors ordered ``[x, z, k, p_x, p_z]`` (CoM position, angular
momentum about the CoM, linear momentum).  For the pendulum ``z = h`` and
``k = p_z = 0`` always; the input is the centre-of-pressure position.
"""

from dataclasses import dataclass

import numpy as np

X, Z, K, PX, PZ = range(5)


@dataclass(frozen=True)
class LipParams:
    h: float
    g: float
    m: float

    def __post_init__(self):
        if self.h <= 0 or self.g <= 0 or self.m <= 0:
            raise ValueError("height, gravity and mass must be positive")

    @property
    def omega(self):
        return float(np.sqrt(self.g / self.h))


@dataclass(frozen=True)
class LipSystem:
    params: LipParams
    A: np.ndarray
    B: np.ndarray  # (5, 1)

    @property
    def C(self):
        return np.eye(5)

    @property
    def omega(self):
        return self.params.omega

    @property
    def m(self):
        return self.params.m


def lip_state(x_com, xdot_com, params):
    """Pendulum state with the structural entries filled in."""
    return np.array([x_com, params.h, 0.0, params.m * xdot_com, 0.0])


def check_lip_state(x, params, tol=1e-9):
    x = np.asarray(x, float)
    if x.shape != (5,):
        raise ValueError("pendulum state must have 5 entries")
    if abs(x[Z] - params.h) > tol * max(1.0, params.h) or abs(x[K]) > tol or abs(x[PZ]) > tol:
        raise ValueError(f"not a valid pendulum state: z={x[Z]}, k={x[K]}, p_z={x[PZ]}")
    return x


def build_lip(params):
    m, w2 = params.m, params.omega**2
    A = np.zeros((5, 5))
    A[X, PX] = 1.0 / m
    # z' = p_z / m keeps the position rows identical to the task model; inert since p_z = 0
    A[Z, PZ] = 1.0 / m
    A[PX, X] = m * w2
    B = np.zeros((5, 1))
    B[PX, 0] = -m * w2
    return LipSystem(params=params, A=A, B=B)


def lip_derivative(sys, x, u):
    return sys.A @ x + sys.B[:, 0] * float(u)


def propagate_exact(sys, x0, u, T):
    """Closed-form pendulum flow over ``T`` seconds with the CoP held at ``u``."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    x0 = np.asarray(x0, float)
    w, m = sys.omega, sys.m
    xc, xd = x0[X] - u, x0[PX] / m
    ch, sh = np.cosh(w * T), np.sinh(w * T)
    out = x0.copy()
    out[X] = u + xc * ch + xd / w * sh
    out[PX] = m * (xc * w * sh + xd * ch)
    out[Z] = x0[Z] + x0[PZ] / m * T
    return out


def propagate_euler(sys, x0, u, T, dt):
    """Forward-Euler propagation; checks the structural zeros every step."""
    steps = int(round(T / dt))
    x = np.asarray(x0, float).copy()
    for _ in range(steps):
        x = x + dt * lip_derivative(sys, x, u)
        if x[K] != 0.0 or x[PZ] != 0.0:
            raise AssertionError("pendulum structural zeros drifted")
    return x


def task_embedding(x_lip):
    """Map a pendulum state into task coordinates (the identity here)."""
    return embedding_matrix() @ np.asarray(x_lip, float)


def embedding_matrix():
    return np.eye(5)
