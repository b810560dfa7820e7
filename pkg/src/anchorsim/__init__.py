"""Balance control of a planar robot through a linear inverted pendulum template.

The pendulum is planned with a small QP; a certified interface maps the plan
to centroidal momentum rates, and task-space feedback linearization turns
those into joint torques.
"""

from .config import build_model, load_config
from .contact import build_cwc, cwc_residual, linearize_cwc
from .harness import RunOutcome, Scenario, TraceRecord, build_setup, compare, emit_traces, run
from .mpc import MpcConfig, MpcSolution, assemble, step
from .rigid_body import JointState, RobotModel, compute_dynamics, forward_dynamics, task_state
from .simrel import SimRelation, build_relation, build_task_system, epsilon_bound, interface, simulation_fn
from .template import LipParams, build_lip, propagate_exact

__version__ = "0.1.0"
