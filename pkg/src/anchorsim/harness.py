"""Push-recovery experiment: build everything from a config, run the loops, log traces.

The control loop runs at ``control_rate`` and holds its torques over the
physics steps in between.  Each tick works on a snapshot of the joint state.
"""

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import mpc as mpc_mod
from .config import build_model, config_hash, nominal_pose
from .contact import cwc_for_model, cwc_residual, linearize_cwc
from .exceptions import NumericalBlowup
from .numerics import QpStatus, solve_care
from .rigid_body import ExternalForce, JointState, compute_dynamics, forward_dynamics, integrate, task_state
from .simrel import build_relation, build_task_system, epsilon_bound, interface, output_error, simulation_fn, synthesize_gain
from .template import LipParams, build_lip, lip_state, propagate_exact
from .wholebody import BaselineQpConfig, baseline_qp_control, proposed_torques, template_tracking_ucom

PROPOSED = "ProposedMpc"
BASELINE = "BaselineQp"
CSV_SCHEMA = "anchorsim.trace/1"


@dataclass(frozen=True)
class Scenario:
    push_force: float = 20.0
    push_duration: float = 0.010
    push_time: float = 1.0
    total_time: float = 10.0
    controller: str = PROPOSED
    push_link: str = "torso"
    push_direction: tuple = (-1.0, 0.0)
    initial_offset: tuple = None  # x_task(0) - x_lip(0), applied to the template
    name: str = ""

    def __post_init__(self):
        if self.controller not in (PROPOSED, BASELINE):
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.push_force < 0:
            raise ValueError("push_force must be nonnegative")
        if self.push_duration <= 0:
            raise ValueError("push_duration must be positive")
        if self.push_time + self.push_duration >= self.total_time:
            raise ValueError("push must end before the run does")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("config", None)
        if "push_direction" in d:
            d["push_direction"] = tuple(d["push_direction"])
        if d.get("initial_offset") is not None:
            d["initial_offset"] = tuple(d["initial_offset"])
        return cls(**d)


@dataclass
class Setup:
    cfg: dict
    model: object
    q_nom: np.ndarray
    lip: object
    task: object
    rel: object
    cwc: object
    lcwc: object
    mpc_cfg: mpc_mod.MpcConfig
    base_cfg: BaselineQpConfig
    K_template: np.ndarray  # LQR on (x, p_x) of the pendulum
    physics_dt: float
    control_dt: float
    steps_per_tick: int


def build_setup(cfg):
    model = build_model(cfg)
    q_nom = nominal_pose(cfg, model)
    m = model.mass
    lip = build_lip(LipParams(h=cfg["template"]["height"], g=model.gravity, m=m))
    task = build_task_system(m)
    sr = cfg["simrel"]
    K = synthesize_gain(task, np.diag(sr["Qc_diag"]), np.diag(sr["Rc_diag"]))
    rel = build_relation(task, lip, K, sr["decay_rate"])
    cwc = cwc_for_model(model, cfg["contact"]["mu"])
    lcwc = linearize_cwc(cwc, cfg["contact"]["ldot_max"])
    mc = cfg["mpc"]
    Q = np.diag(mc["Q_diag"]).astype(float)
    mpc_cfg = mpc_mod.MpcConfig(
        N=mc["horizon"], dt=mc["dt"], Q_mpc=Q, R_mpc=mc["R"], Q_f=mc["terminal_scale"] * Q,
        ldot_max=cfg["contact"]["ldot_max"], cop_bound=mc.get("cop_bound"),
    )
    b = cfg["baseline"]
    wb = cfg["wholebody"]
    base_cfg = BaselineQpConfig(
        w=b["w"], tau_min=tuple(b["tau_min"]), tau_max=tuple(b["tau_max"]),
        Kp0=wb["posture_kp"], Kd0=wb["posture_kd"],
        K_P=tuple(map(tuple, b["K_P"] * np.eye(2))), K_D=tuple(map(tuple, b["K_D"] * np.eye(2))),
        K_ang=b["K_ang"], force_weight=b["force_weight"],
    )
    # template LQR on the (x, p_x) pair; the other pendulum states are inert
    idx = [0, 3]
    Qt = np.diag(b["template_Q_diag"]).astype(float)[np.ix_(idx, idx)]
    _, Kt = solve_care(lip.A[np.ix_(idx, idx)], lip.B[idx], Qt, np.array([[b["template_R"]]]))
    sim = cfg["simulation"]
    control_dt = 1.0 / sim["control_rate"]
    return Setup(
        cfg=cfg, model=model, q_nom=q_nom, lip=lip, task=task, rel=rel, cwc=cwc, lcwc=lcwc,
        mpc_cfg=mpc_cfg, base_cfg=base_cfg, K_template=Kt[0],
        physics_dt=sim["physics_dt"], control_dt=control_dt,
        steps_per_tick=int(round(control_dt / sim["physics_dt"])),
    )


@dataclass
class TraceRecord:
    t: float
    x_lip: np.ndarray
    x_task: np.ndarray
    u_lip: float
    u_task: np.ndarray
    tau: np.ndarray
    V: float
    err: float
    cwc_slack_full: float
    cwc_slack_linear: float
    qp_status: str
    solve_time: float
    flagged: bool = False


@dataclass
class Failure:
    kind: str  # BaselineInfeasible, CwcViolated, NumericalBlowup, NotSettled
    t: float
    detail: str = ""


@dataclass
class RunOutcome:
    recovered: bool
    failure: Failure = None
    final_com_x: float = None
    final_qd_norm: float = None
    final_q: np.ndarray = None
    flagged_ticks: int = 0
    assertion_failures: list = field(default_factory=list)
    wall_time: float = 0.0

    def __post_init__(self):
        if self.recovered == (self.failure is not None):
            raise ValueError("exactly one of recovered / failure must be set")


def _push_fn(setup, sc):
    if sc.push_force == 0:
        return None
    names = [l.name for l in setup.model.links]
    link = names.index(sc.push_link)
    d = np.asarray(sc.push_direction, float)
    force = ExternalForce(link, setup.model.links[link].length, sc.push_force * d / np.linalg.norm(d))
    t0, t1 = sc.push_time, sc.push_time + sc.push_duration
    return lambda t: force if t0 <= t < t1 else None


def _hdot(dyn, qdd):
    return dyn.A_G @ qdd + dyn.Adot_qd


def run(scenario, setup, v_band=None):
    """Run one scenario; returns ``(RunOutcome, [TraceRecord])``.

    ``v_band`` (absolute) enables the check that ``V`` does not grow by more
    than the band between consecutive ticks outside the push window.
    """
    wall0 = time.perf_counter()
    S = setup
    sim = S.cfg["simulation"]
    rec_cfg = S.cfg["recovery"]
    wb = S.cfg["wholebody"]
    model, m = S.model, S.model.mass
    n_ticks = math.ceil(scenario.total_time / S.control_dt - 1e-9)
    push = _push_fn(S, scenario)
    f_ext = push if push is not None else (lambda t: None)

    s = JointState(S.q_nom, np.zeros(model.n))
    x_task = task_state(model, s)
    x_lip = lip_state(x_task[0], x_task[3] / m, S.lip.params)
    if scenario.initial_offset is not None:
        off = np.asarray(scenario.initial_offset, float)
        x_lip = x_lip - off
        x_lip[1], x_lip[2], x_lip[4] = S.lip.params.h, 0.0, 0.0

    records, asserts = [], []
    failure = None
    u_lip = float(x_lip[0])
    tau_hold = None
    frozen_since = None
    violation_since = None
    flagged = 0
    cwc_tol = sim["cwc_tol"]
    push_end = scenario.push_time + scenario.push_duration

    for i in range(n_ticks):
        t = i * S.control_dt
        dyn = compute_dynamics(model, s)
        x_task = task_state(model, s, dyn)
        flag = False
        solve_time = 0.0

        if scenario.controller == PROPOSED:
            sol = mpc_mod.step(S.mpc_cfg, S.lip, S.task, S.rel, S.lcwc, x_lip, x_task)
            solve_time = sol.solve_time
            status = sol.status.value
            if sol.optimal:
                u_lip = sol.u_lip_0
            else:
                flag = True
                flagged += 1
            u_task = interface(S.rel, x_lip, u_lip, x_task)
            cmd = proposed_torques(
                model, s, u_task, S.q_nom, wb["posture_kp"], wb["posture_kd"], dyn=dyn,
                cond_cap=wb["cond_cap"], use_nullspace=wb["use_nullspace"],
            )
            tau = cmd.tau
        else:
            u_lip = float(S.K_template @ x_lip[[0, 3]])
            b = S.base_cfg
            u_com, _ = template_tracking_ucom(x_lip, u_lip, x_task, b.K_P, b.K_D, b.K_ang, S.lip.omega, m)
            if frozen_since is None:
                res = baseline_qp_control(model, s, u_com, b, S.cwc, S.q_nom, dyn=dyn)
                solve_time = res.solve_time
                status = res.status.value
                if res.status is QpStatus.OPTIMAL:
                    tau_hold = res.tau
                else:
                    frozen_since = t
                    flag = True
                    flagged += 1
                    if tau_hold is None:
                        tau_hold = dyn.tau_g.copy()
            else:
                status = "Frozen"
                flag = True
            tau = tau_hold
            u_task = _hdot(dyn, forward_dynamics(model, s, tau))

        slack_full = float(cwc_residual(S.cwc, x_task, u_task).max())
        slack_lin = float(S.lcwc.residual(x_task, u_task).max())
        V = simulation_fn(S.rel, x_task, x_lip)
        err = output_error(S.rel, x_task, x_lip)
        records.append(TraceRecord(
            t=t, x_lip=x_lip.copy(), x_task=x_task.copy(), u_lip=float(u_lip), u_task=np.asarray(u_task).copy(),
            tau=np.asarray(tau).copy(), V=V, err=err, cwc_slack_full=slack_full, cwc_slack_linear=slack_lin,
            qp_status=status, solve_time=solve_time, flagged=flag,
        ))

        # assertion-class invariants
        if V < err - 1e-12:
            asserts.append(f"t={t:.3f}: V={V:.6g} < err={err:.6g}")
        in_box = np.all(S.lcwc.box_residual(u_task) <= 1e-9)
        if scenario.controller == PROPOSED and in_box and slack_full > slack_lin + 1e-9:
            asserts.append(f"t={t:.3f}: full cwc slack {slack_full:.3g} exceeds linear slack {slack_lin:.3g}")
        if v_band is not None and len(records) > 1 and scenario.controller == PROPOSED:
            prev = records[-2]
            quiet = prev.t >= push_end or t <= scenario.push_time or scenario.push_force == 0
            if quiet and V > prev.V + v_band:
                asserts.append(f"t={t:.3f}: V grew {V - prev.V:.3g} beyond band {v_band:.3g}")

        # failure detection: persistent contact-wrench violation
        if slack_full > cwc_tol:
            violation_since = t if violation_since is None else violation_since
            if t - violation_since >= sim["fall_window"] - 1e-12 and failure is None:
                if frozen_since is not None:
                    failure = Failure("BaselineInfeasible", frozen_since, "torques frozen after infeasible QP")
                else:
                    failure = Failure("CwcViolated", violation_since, "ground wrench left the cone")
                break
        else:
            violation_since = None

        tau_c = np.asarray(tau, float)
        try:
            s = integrate(
                model, s, lambda _t, _q, _qd: tau_c, f_ext, dt_sim=S.physics_dt, steps=S.steps_per_tick,
                t0=t, qd_cap=sim["qd_cap"], record=False,
            )[-1]
        except NumericalBlowup as exc:
            kind = "BaselineInfeasible" if frozen_since is not None else "NumericalBlowup"
            failure = Failure(kind, frozen_since if frozen_since is not None else exc.t, str(exc))
            break
        x_lip = propagate_exact(S.lip, x_lip, u_lip, S.control_dt)

    if failure is None and frozen_since is not None:
        failure = Failure("BaselineInfeasible", frozen_since, "torques frozen after infeasible QP")
    dyn = compute_dynamics(model, s)
    com_x = float(dyn.p_G[0])
    qd_norm = float(np.linalg.norm(s.qd))
    if failure is None and not (abs(com_x) <= rec_cfg["com_tol"] and qd_norm <= rec_cfg["qd_tol"]):
        failure = Failure("NotSettled", scenario.total_time, f"|x_com|={abs(com_x):.3g}, |qd|={qd_norm:.3g}")
    outcome = RunOutcome(
        recovered=failure is None, failure=failure, final_com_x=com_x, final_qd_norm=qd_norm,
        final_q=s.q.copy(), flagged_ticks=flagged, assertion_failures=asserts, wall_time=time.perf_counter() - wall0,
    )
    return outcome, records


# --- output -----------------------------------------------------------------


def csv_columns(n_joints):
    cols = ["t"]
    cols += [f"x_lip_{i}" for i in range(5)]
    cols += [f"x_task_{i}" for i in range(5)]
    cols += ["u_lip"] + [f"u_task_{i}" for i in range(3)]
    cols += [f"tau_{i}" for i in range(n_joints)]
    cols += ["V", "err", "cwc_slack_full", "cwc_slack_linear", "qp_status", "flagged"]
    return cols


def _fmt(v):
    return repr(float(v))


def emit_traces(records, path, metadata=None, n_joints=4):
    """Write ``path`` (deterministic trace CSV), a ``.timing.csv`` sidecar and a ``.meta.json`` file.

    Solve times live in the sidecar so the main trace is bit-reproducible.
    """
    base, _ = os.path.splitext(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(csv_columns(n_joints))
        for r in records:
            row = [_fmt(r.t)]
            row += [_fmt(v) for v in r.x_lip] + [_fmt(v) for v in r.x_task]
            row += [_fmt(r.u_lip)] + [_fmt(v) for v in r.u_task] + [_fmt(v) for v in r.tau]
            row += [_fmt(r.V), _fmt(r.err), _fmt(r.cwc_slack_full), _fmt(r.cwc_slack_linear), r.qp_status, int(r.flagged)]
            w.writerow(row)
    with open(base + ".timing.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "solve_time"])
        for r in records:
            w.writerow([_fmt(r.t), _fmt(r.solve_time)])
    meta = {"csv_schema": CSV_SCHEMA, "columns": csv_columns(n_joints)}
    meta.update(metadata or {})
    with open(base + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def read_traces(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def run_metadata(setup, scenario, outcome):
    x_task0 = task_state(setup.model, JointState(setup.q_nom, np.zeros(setup.model.n)))
    u_sup = setup.cwc.half_length
    x_lip0 = lip_state(x_task0[0], 0.0, setup.lip.params)
    if scenario.initial_offset is not None:
        x_lip0 = x_lip0 - np.asarray(scenario.initial_offset, float)
        x_lip0[1], x_lip0[2], x_lip0[4] = setup.lip.params.h, 0.0, 0.0
    cert = epsilon_bound(setup.rel, x_task0, x_lip0, u_sup)
    return {
        "config_hash": config_hash(setup.cfg),
        "scenario": asdict(scenario),
        "gains": {"K": setup.rel.K, "M": setup.rel.M, "lam": setup.rel.lam, "K_template": setup.K_template},
        "epsilon_certificate": asdict(cert),
        "outcome": {
            "recovered": outcome.recovered,
            "failure": None if outcome.failure is None else asdict(outcome.failure),
            "final_com_x": outcome.final_com_x,
            "final_qd_norm": outcome.final_qd_norm,
            "flagged_ticks": outcome.flagged_ticks,
            "assertion_failures": outcome.assertion_failures,
        },
    }


# --- comparison -------------------------------------------------------------


def summarize(outcome, records):
    solve = [r.solve_time for r in records if r.solve_time > 0]
    return {
        "recovered": outcome.recovered,
        "failure": None if outcome.failure is None else f"{outcome.failure.kind}@{outcome.failure.t:.2f}s",
        "peak_abs_xcom": max((abs(r.x_task[0]) for r in records), default=0.0),
        "peak_V": max((r.V for r in records), default=0.0),
        "min_cwc_slack": min((-r.cwc_slack_full for r in records), default=0.0),
        "mean_solve_ms": 1e3 * float(np.mean(solve)) if solve else 0.0,
        "max_solve_ms": 1e3 * float(np.max(solve)) if solve else 0.0,
        "flagged_ticks": outcome.flagged_ticks,
        "assertions": len(outcome.assertion_failures),
    }


def compare(setup, forces=(20.0, 100.0), controllers=(PROPOSED, BASELINE), base_scenario=None):
    """Run the force x controller grid; returns a list of row dicts."""
    base = base_scenario or Scenario()
    rows = []
    for F in forces:
        for c in controllers:
            sc = Scenario(**{**asdict(base), "push_force": float(F), "controller": c})
            try:
                out, recs = run(sc, setup)
                row = summarize(out, recs)
            except Exception as exc:  # grid completes regardless
                row = {"recovered": False, "failure": f"error: {exc}", "assertions": 1}
            rows.append({"force": float(F), "controller": c, **row})
    return rows


def format_table(rows):
    head = ["force", "controller", "recovered", "failure", "peak_abs_xcom", "peak_V", "min_cwc_slack",
            "mean_solve_ms", "max_solve_ms", "flagged_ticks"]
    lines = ["  ".join(f"{h:>14}" for h in head)]
    for r in rows:
        cells = []
        for h in head:
            v = r.get(h, "")
            cells.append(f"{v:>14.4g}" if isinstance(v, float) else f"{str(v):>14}")
        lines.append("  ".join(cells))
    return "\n".join(lines)


def failure_threshold(setup, controller, lo, hi, tol=2.0, base_scenario=None):
    """Bisection on push magnitude.

    Returns ``(threshold, bracketed)``; the threshold is the smallest force
    found to fail.  When ``hi`` still recovers, returns ``(hi, False)``,
    meaning the threshold is at least ``hi``.
    """
    base = base_scenario or Scenario()

    def fails(F):
        sc = Scenario(**{**asdict(base), "push_force": float(F), "controller": controller})
        out, _ = run(sc, setup)
        return not out.recovered

    if fails(lo):
        return lo, True
    if not fails(hi):
        return hi, False
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fails(mid):
            hi = mid
        else:
            lo = mid
    return hi, True
