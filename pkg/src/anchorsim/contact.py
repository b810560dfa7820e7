"""Contact wrench cone of a flat foot and its linearization in task space.

Ground wrenches are ``[tau_y, f_x, f_z]`` at the ground origin, which sits
under the foot centre.  Corner contacts sit at ``x = -d`` (heel) and ``x = +d``
(toe).  The cone of wrenches the foot can transmit is ``A_cone w <= 0``.

In task space the ground wrench is

    w_0 = X(p_G) (u_task - w_g) + w_foot,      X(p) = [[1, p_z, -p_x], [0, 1, 0], [0, 0, 1]]

which is bilinear in ``p_G`` and the linear momentum rate.  The linearization
enumerates the corners of the box ``|ldot| <= ldot_max`` and substitutes each
corner for ``ldot``, giving constraints on ``(p_G, kdot)`` that hold for every
``ldot`` inside the box.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.optimize import linprog

from .numerics import rays_to_facets
from .rigid_body import cross_y, spatial_force_transform


@dataclass(frozen=True)
class CwcModel:
    A_cone: np.ndarray  # (r, 3)
    generators: np.ndarray  # (4, 3)
    mu: float
    half_length: float
    mass: float
    gravity: float
    base_wrench: np.ndarray  # foot weight, carried at the ground origin

    @property
    def gravity_wrench(self):
        return np.array([0.0, 0.0, -self.mass * self.gravity])


def cone_generators(d, mu):
    gens = []
    for px, fx in product((-d, d), (-mu, mu)):
        f = np.array([fx, 1.0])
        gens.append([cross_y((px, 0.0), f), f[0], f[1]])
    return np.array(gens)


def build_cwc(d, mu, mass=0.0, gravity=9.81, base_wrench=None):
    """Face form of the flat-foot wrench cone with half-length ``d`` and friction ``mu``."""
    if d <= 0:
        raise ValueError("foot half-length must be positive")
    if mu <= 0:
        raise ValueError("friction coefficient must be positive")
    G = cone_generators(d, mu)
    cone = rays_to_facets(G)
    bw = np.zeros(3) if base_wrench is None else np.asarray(base_wrench, float)
    return CwcModel(
        A_cone=cone.facets, generators=G, mu=float(mu), half_length=float(d),
        mass=float(mass), gravity=float(gravity), base_wrench=bw,
    )


def cwc_for_model(model, mu):
    return build_cwc(model.foot.half_length, mu, model.mass, model.gravity, model.foot_wrench)


def com_transform(p_G):
    return spatial_force_transform(p_G)


def ground_wrench(cwc, x_task, u_task):
    x_task = np.asarray(x_task, float)
    return com_transform(x_task[:2]) @ (np.asarray(u_task, float) - cwc.gravity_wrench) + cwc.base_wrench


def cwc_residual(cwc, x_task, u_task):
    """``A_cone w_0``; nonpositive entries mean the wrench is transmittable."""
    return cwc.A_cone @ ground_wrench(cwc, x_task, u_task)


@dataclass(frozen=True)
class LinearizedCwc:
    A: np.ndarray  # (rows, 8) over [x_task, u_task]
    b: np.ndarray
    ldot_max: float

    @property
    def A_x(self):
        return self.A[:, :5]

    @property
    def A_u(self):
        return self.A[:, 5:]

    def residual(self, x_task, u_task):
        return self.A @ np.concatenate([x_task, u_task]) - self.b

    def box_residual(self, u_task):
        return np.abs(np.asarray(u_task, float)[1:]) - self.ldot_max


def linearize_cwc(cwc, ldot_max):
    """Corner-enumerated linear constraints ``A [x_task; u_task] <= b``.

    For a cone row ``a`` and box corner ``v = (v_x, v_z)`` the row reads

        a0 (kdot + p_z v_x - p_x (v_z + m g)) + a1 v_x + a2 (v_z + m g) + a . w_foot <= 0
    """
    if ldot_max < 0:
        raise ValueError("ldot_max must be nonnegative")
    mg = cwc.mass * cwc.gravity
    rows, rhs = [], []
    corners = sorted(set(product((-ldot_max, ldot_max), repeat=2)))
    for a in cwc.A_cone:
        for vx, vz in corners:
            row = np.zeros(8)
            row[0] = -a[0] * (vz + mg)
            row[1] = a[0] * vx
            row[5] = a[0]
            c = a[1] * vx + a[2] * (vz + mg) + a @ cwc.base_wrench
            key = np.append(row, -c)
            if any(np.allclose(key, np.append(r, b), atol=1e-12) for r, b in zip(rows, rhs)):
                continue
            rows.append(row)
            rhs.append(-c)
    return LinearizedCwc(A=np.array(rows), b=np.array(rhs), ldot_max=float(ldot_max))


def chebyshev_radius(lcwc, p_G):
    """Radius of the largest ball of task inputs satisfying the linearized cone at ``p_G``.

    Returns ``-inf`` when the constraint set is empty.
    """
    x = np.zeros(5)
    x[:2] = p_G
    A_u = lcwc.A_u
    b = lcwc.b - lcwc.A_x @ x
    box = np.array([[0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
    A = np.vstack([A_u, box])
    b = np.concatenate([b, np.full(4, lcwc.ldot_max)])
    norms = np.linalg.norm(A, axis=1)
    keep = norms > 0
    if np.any(b[~keep] < 0):
        return -np.inf
    A, b, norms = A[keep], b[keep], norms[keep]
    # maximize r s.t. A u + r |a_i| <= b
    res = linprog(
        np.r_[0, 0, 0, -1.0],
        A_ub=np.hstack([A, norms[:, None]]),
        b_ub=b,
        bounds=[(None, None)] * 3 + [(None, None)],
        method="highs",
    )
    if res.status == 2:
        return -np.inf
    if res.status == 3:
        return np.inf
    return float(res.x[-1])
