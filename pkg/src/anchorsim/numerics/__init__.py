"""Numerical kernels: matrix equations, convex QP, polyhedral cones."""

from .cones import ConeDescription, rays_to_facets
from .matrix_eq import riccati_residual, solve_care, solve_lyapunov
from .qp import QpOutcome, QpProblem, QpStatus, kkt_residuals, solve_qp

__all__ = [
    "ConeDescription",
    "QpOutcome",
    "QpProblem",
    "QpStatus",
    "kkt_residuals",
    "rays_to_facets",
    "riccati_residual",
    "solve_care",
    "solve_lyapunov",
    "solve_qp",
]
