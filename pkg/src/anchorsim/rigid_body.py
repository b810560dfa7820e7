"""Planar fixed-base kinematic-tree dynamics.

Conventions: x points right, z points up, joint angles are relative to the
parent body and positive counterclockwise.  Moments are the y-component of
``r x f``, i.e. ``tau_y = r_z f_x - r_x f_z``; angular momentum uses the same
component, so a body spinning counterclockwise has negative ``k``.  Planar
wrenches and momenta are ordered ``[moment, x, z]``.

The foot is the grounded base: it adds weight to the ground reaction but no
degrees of freedom.  The centroidal quantities (``p_G``, ``h_G``) and the
mass ``m`` that goes with them refer to the moving links.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericalBlowup

BASE = -1


@dataclass(frozen=True)
class Link:
    name: str
    length: float
    mass: float
    com_offset: float = None
    inertia: float = None

    def __post_init__(self):
        if self.length <= 0 or self.mass <= 0:
            raise ValueError(f"link {self.name!r} needs positive length and mass")
        # uniform rod unless overridden
        if self.com_offset is None:
            object.__setattr__(self, "com_offset", 0.5 * self.length)
        if self.inertia is None:
            object.__setattr__(self, "inertia", self.mass * self.length**2 / 12.0)


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int  # link index, or BASE
    attach_point: float  # along the parent from its proximal end (foot: from its centre)


@dataclass(frozen=True)
class Foot:
    length: float
    mass: float
    com_x: float = 0.0

    @property
    def half_length(self):
        return 0.5 * self.length


@dataclass(frozen=True)
class RobotModel:
    links: tuple
    joints: tuple
    foot: Foot
    gravity: float = 9.81
    _mask: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "joints", tuple(self.joints))
        n = len(self.links)
        if len(self.joints) != n or n == 0:
            raise ValueError("need exactly one joint per link")
        if self.foot.length <= 0 or self.foot.mass <= 0 or self.gravity <= 0:
            raise ValueError("foot length, foot mass and gravity must be positive")
        mask = np.zeros((n, n))
        for i, j in enumerate(self.joints):
            if j.parent != BASE and not 0 <= j.parent < i:
                raise ValueError(f"joint {j.name!r}: parent must precede its child")
            mask[i, i] = 1.0
            if j.parent != BASE:
                mask[i] += mask[j.parent]
        object.__setattr__(self, "_mask", mask)

    @property
    def n(self):
        return len(self.links)

    @property
    def ancestor_mask(self):
        """``mask[i, k] == 1`` when joint ``k`` moves link ``i``."""
        return self._mask

    @property
    def mass(self):
        """Mass of the moving links (the centroidal mass)."""
        return float(sum(l.mass for l in self.links))

    @property
    def total_mass(self):
        return self.mass + self.foot.mass

    @property
    def foot_wrench(self):
        """Ground wrench needed to hold up the foot, at the ground origin."""
        w = self.foot.mass * self.gravity
        return np.array([-self.foot.com_x * w, 0.0, w])


@dataclass
class JointState:
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).copy()
        self.qd = np.asarray(self.qd, dtype=float).copy()
        if self.q.shape != self.qd.shape:
            raise ValueError("q and qd must have the same length")


@dataclass(frozen=True)
class ExternalForce:
    """Point force on ``link`` at ``offset`` metres from its proximal end."""

    link: int
    offset: float
    force: np.ndarray


@dataclass
class DynamicsQuantities:
    H: np.ndarray
    Cqd: np.ndarray
    tau_g: np.ndarray
    A_G: np.ndarray
    Adot_qd: np.ndarray
    p_G: np.ndarray
    J_com: np.ndarray
    Jdot_com_qd: np.ndarray
    mass: float


def _u(th):
    return np.array([np.cos(th), np.sin(th)])


def _perp(v):
    return np.array([-v[1], v[0]])


def cross_y(r, f):
    """y-component of the planar cross product ``r x f`` with r, f in (x, z)."""
    return r[1] * f[0] - r[0] * f[1]


def spatial_force_transform(p):
    """Transform taking a wrench at point ``p`` to the same wrench at the origin."""
    return np.array([[1.0, p[1], -p[0]], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


class _Kin:
    """Per-state kinematic cache shared by the dynamics routines."""

    __slots__ = ("theta", "omega", "origins", "coms", "J", "acc_c", "acc_o")

    def __init__(self, model, q, qd):
        n = model.n
        mask = model.ancestor_mask
        self.theta = mask @ q
        self.omega = mask @ qd
        self.origins = np.zeros((n, 2))
        self.coms = np.zeros((n, 2))
        self.acc_o = np.zeros((n, 2))
        self.acc_c = np.zeros((n, 2))
        for i, (link, joint) in enumerate(zip(model.links, model.joints)):
            if joint.parent == BASE:
                self.origins[i] = (joint.attach_point, 0.0)
            else:
                p = joint.parent
                e = _u(self.theta[p])
                self.origins[i] = self.origins[p] + joint.attach_point * e
                self.acc_o[i] = self.acc_o[p] - joint.attach_point * self.omega[p] ** 2 * e
            e = _u(self.theta[i])
            self.coms[i] = self.origins[i] + link.com_offset * e
            self.acc_c[i] = self.acc_o[i] - link.com_offset * self.omega[i] ** 2 * e
        # J[i] is the 2 x n Jacobian of link i's centre of mass
        rel = self.coms[:, None, :] - self.origins[None, :, :]  # (i, k, 2)
        self.J = np.stack([-rel[..., 1], rel[..., 0]], axis=1) * mask[:, None, :]


def point_position(model, q, link, offset):
    kin = _Kin(model, np.asarray(q, float), np.zeros(model.n))
    return kin.origins[link] + offset * _u(kin.theta[link])


def point_jacobian(model, q, link, offset):
    q = np.asarray(q, float)
    kin = _Kin(model, q, np.zeros(model.n))
    p = kin.origins[link] + offset * _u(kin.theta[link])
    rel = p[None, :] - kin.origins
    return np.stack([-rel[:, 1], rel[:, 0]]) * model.ancestor_mask[link][None, :]


def _mass_terms(model, kin):
    masses = np.array([l.mass for l in model.links])
    inert = np.array([l.inertia for l in model.links])
    mask = model.ancestor_mask
    J = kin.J
    H = np.einsum("i,iak,ial->kl", masses, J, J) + (mask.T * inert) @ mask
    Cqd = np.einsum("i,iak,ia->k", masses, J, kin.acc_c)
    tau_g = model.gravity * masses @ J[:, 1, :]
    return masses, inert, H, Cqd, tau_g


def compute_dynamics(model, s):
    """Mass matrix, bias forces, gravity torques and centroidal quantities."""
    q, qd = np.asarray(s.q, float), np.asarray(s.qd, float)
    kin = _Kin(model, q, qd)
    masses, inert, H, Cqd, tau_g = _mass_terms(model, kin)
    m = masses.sum()
    mask = model.ancestor_mask
    p_G = masses @ kin.coms / m
    J_com = np.einsum("i,iak->ak", masses, kin.J) / m
    Jdot_com_qd = masses @ kin.acc_c / m
    r = kin.coms - p_G
    A_k = np.einsum("i,ik->k", masses * r[:, 1], kin.J[:, 0, :]) - np.einsum(
        "i,ik->k", masses * r[:, 0], kin.J[:, 1, :]
    )
    A_k -= inert @ mask
    A_G = np.vstack([A_k, m * J_com])
    kdot_bias = np.sum(masses * (r[:, 1] * kin.acc_c[:, 0] - r[:, 0] * kin.acc_c[:, 1]))
    Adot_qd = np.concatenate([[kdot_bias], m * Jdot_com_qd])
    return DynamicsQuantities(
        H=H,
        Cqd=Cqd,
        tau_g=tau_g,
        A_G=A_G,
        Adot_qd=Adot_qd,
        p_G=p_G,
        J_com=J_com,
        Jdot_com_qd=Jdot_com_qd,
        mass=m,
    )


def task_state(model, s, dyn=None):
    """Task coordinates ``[x_G, z_G, k_G, l_x, l_z]``."""
    if dyn is None:
        dyn = compute_dynamics(model, s)
    return np.concatenate([dyn.p_G, dyn.A_G @ s.qd])


def _external_torque(model, q, f_ext):
    if f_ext is None:
        return 0.0
    Jp = point_jacobian(model, q, f_ext.link, f_ext.offset)
    return Jp.T @ np.asarray(f_ext.force, float)


def forward_dynamics(model, s, tau, f_ext=None):
    """Joint accelerations from ``H qdd + C qd + tau_g = tau + Jp^T F``."""
    q, qd = np.asarray(s.q, float), np.asarray(s.qd, float)
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (model.n,):
        raise ValueError(f"tau must have {model.n} entries")
    kin = _Kin(model, q, qd)
    _, _, H, Cqd, tau_g = _mass_terms(model, kin)
    rhs = tau - Cqd - tau_g + _external_torque(model, q, f_ext)
    return np.linalg.solve(H, rhs)


def external_wrench_at_origin(model, q, f_ext):
    if f_ext is None:
        return np.zeros(3)
    p = point_position(model, q, f_ext.link, f_ext.offset)
    F = np.asarray(f_ext.force, float)
    return np.array([cross_y(p, F), F[0], F[1]])


def ground_reaction_wrench(model, s, qdd, f_ext=None, dyn=None):
    """Wrench the ground exerts on the foot, expressed at the ground origin."""
    if dyn is None:
        dyn = compute_dynamics(model, s)
    hdot = dyn.A_G @ qdd + dyn.Adot_qd
    gravity = np.array([0.0, 0.0, -dyn.mass * model.gravity])
    f0 = spatial_force_transform(dyn.p_G) @ (hdot - gravity) + model.foot_wrench
    return f0 - external_wrench_at_origin(model, s.q, f_ext)


def kinetic_energy(model, s):
    kin = _Kin(model, np.asarray(s.q, float), np.asarray(s.qd, float))
    masses, inert, H, _, _ = _mass_terms(model, kin)
    return 0.5 * s.qd @ H @ s.qd


def potential_energy(model, q):
    kin = _Kin(model, np.asarray(q, float), np.zeros(model.n))
    masses = np.array([l.mass for l in model.links])
    return model.gravity * masses @ kin.coms[:, 1]


def integrate(model, s, tau_fn, f_ext_fn=None, dt_sim=1e-3, steps=1, t0=0.0, qd_cap=1e3, record=True):
    """Fixed-step RK4 integration of the joint state.

    ``tau_fn(t, q, qd)`` returns joint torques and ``f_ext_fn(t)`` an
    :class:`ExternalForce` or ``None``.  The external force is sampled once
    per step at its midpoint so short pulses aligned with the step grid are
    applied for an exact number of steps.  Returns the list of states after each
    step (or only the final state when ``record`` is false).
    """
    if dt_sim <= 0:
        raise ValueError("dt_sim must be positive")
    n = model.n
    x = np.concatenate([s.q, s.qd]).astype(float)
    if f_ext_fn is None:
        f_ext_fn = lambda t: None

    def deriv(t, x, fe):
        q, qd = x[:n], x[n:]
        st = JointState.__new__(JointState)
        st.q, st.qd = q, qd
        qdd = forward_dynamics(model, st, tau_fn(t, q, qd), fe)
        return np.concatenate([qd, qdd])

    out = []
    t = t0
    for _ in range(steps):
        fe = f_ext_fn(t + 0.5 * dt_sim)
        k1 = deriv(t, x, fe)
        k2 = deriv(t + 0.5 * dt_sim, x + 0.5 * dt_sim * k1, fe)
        k3 = deriv(t + 0.5 * dt_sim, x + 0.5 * dt_sim * k2, fe)
        k4 = deriv(t + dt_sim, x + dt_sim * k3, fe)
        x = x + dt_sim / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt_sim
        speed = np.linalg.norm(x[n:])
        if not np.isfinite(speed) or speed > qd_cap:
            raise NumericalBlowup(t, speed)
        if record:
            out.append(JointState(x[:n], x[n:]))
    if not record:
        out.append(JointState(x[:n], x[n:]))
    return out


def pose_for_com(model, target, q_guess, free=(0, 1), tol=1e-12, max_iter=50):
    """Adjust the joints listed in ``free`` so the link CoM sits at ``target``."""
    q = np.asarray(q_guess, float).copy()
    free = list(free)
    target = np.asarray(target, float)
    for _ in range(max_iter):
        dyn = compute_dynamics(model, JointState(q, np.zeros(model.n)))
        err = dyn.p_G - target
        if np.linalg.norm(err) < tol:
            return q
        step = np.linalg.lstsq(dyn.J_com[:, free], -err, rcond=None)[0]
        q[free] += step
    raise RuntimeError("CoM pose solve did not converge")
