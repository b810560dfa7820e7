"""Command-line entry point.

Every subcommand exits with status 1 when an assertion-class invariant
fails (including a certificate that cannot be built) and 0 otherwise;
usage, config and file errors exit with 2.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import harness, mpc
from .config import load_config
from .contact import chebyshev_radius
from .exceptions import AnchorSimError
from .rigid_body import JointState, compute_dynamics, task_state
from .template import lip_state

IDENTITY_TOL = 1e-10
LMI_TOL = 1e-8
MPC_TOL = 1e-8


def _dump(obj):
    print(json.dumps(obj, indent=2, default=harness._json_default))


def cmd_gains(args):
    S = harness.build_setup(load_config(args.config))
    rel = S.rel
    lmi = rel.lmi_residuals()
    iface = rel.interface_residuals()
    A_cl = rel.task.A + rel.task.B @ rel.K
    out = {
        "K": rel.K,
        "M": rel.M,
        "lam": rel.lam,
        "closed_loop_eigenvalues": sorted(np.linalg.eigvals(A_cl).real.tolist()),
        "lmi_residuals": lmi,
        "interface_residuals": iface,
        "gamma_slope": rel.gamma_slope,
        "K_template": S.K_template,
    }
    ok = lmi["decay"] <= LMI_TOL and lmi["floor"] <= LMI_TOL and max(iface.values()) <= IDENTITY_TOL
    out["certified"] = bool(ok)
    _dump(out)
    return 0 if ok else 1


def cmd_cwc(args):
    S = harness.build_setup(load_config(args.config))
    x0 = task_state(S.model, JointState(S.q_nom, np.zeros(S.model.n)))
    gens_ok = bool(np.all(S.cwc.A_cone @ S.cwc.generators.T <= 1e-9))
    out = {
        "A_cone": S.cwc.A_cone,
        "generators": S.cwc.generators,
        "A_cwc": S.lcwc.A,
        "b_cwc": S.lcwc.b,
        "ldot_max": S.lcwc.ldot_max,
        "chebyshev_radius_at_nominal": chebyshev_radius(S.lcwc, x0[:2]),
        "generators_inside": gens_ok,
    }
    _dump(out)
    return 0 if gens_ok else 1


def _load_state(path, S):
    with open(path) as fh:
        d = json.load(fh)
    if "x_task" in d:
        x_task = np.asarray(d["x_task"], float)
    else:
        q = np.asarray(d.get("q", S.q_nom), float)
        qd = np.asarray(d.get("qd", np.zeros(S.model.n)), float)
        x_task = task_state(S.model, JointState(q, qd))
    if "x_lip" in d:
        x_lip = np.asarray(d["x_lip"], float)
    else:
        x_lip = lip_state(x_task[0], x_task[3] / S.model.mass, S.lip.params)
    return x_lip, x_task


def cmd_mpc_step(args):
    S = harness.build_setup(load_config(args.config))
    x_lip, x_task = _load_state(args.state, S)
    qp = mpc.assemble(S.mpc_cfg, S.lip, S.task, S.rel, S.lcwc, x_lip, x_task)
    sol = mpc.step(S.mpc_cfg, S.lip, S.task, S.rel, S.lcwc, x_lip, x_task)
    out = {
        "variables": qp.n,
        "equality_rows": qp.A_eq.shape[0],
        "inequality_rows": qp.A_ineq.shape[0],
        "status": sol.status.value,
        "u_lip_0": sol.u_lip_0,
        "objective": sol.objective,
        "solve_time": sol.solve_time,
        "max_violation": sol.violations,
    }
    _dump(out)
    ok = sol.violations is None or max(sol.violations.values()) <= MPC_TOL
    return 0 if ok else 1


def _scenario_and_config(path, config_override):
    with open(path) as fh:
        d = json.load(fh)
    cfg_path = config_override or d.get("config")
    if cfg_path is not None and not os.path.isabs(cfg_path) and config_override is None:
        cfg_path = os.path.join(os.path.dirname(os.path.abspath(path)), cfg_path)
    return harness.Scenario.from_dict(d), load_config(cfg_path)


def cmd_simulate(args):
    sc, cfg = _scenario_and_config(args.scenario, args.config)
    S = harness.build_setup(cfg)
    outcome, records = harness.run(sc, S, v_band=args.v_band)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "trace.csv")
    meta = harness.run_metadata(S, sc, outcome)
    harness.emit_traces(records, path, meta, n_joints=S.model.n)
    summary = harness.summarize(outcome, records)
    summary["trace"] = path
    _dump(summary)
    return 1 if outcome.assertion_failures else 0


def cmd_compare(args):
    cfg = load_config(args.config)
    S = harness.build_setup(cfg)
    base = harness.Scenario.from_dict(cfg["scenario"]) if cfg.get("scenario") else harness.Scenario()
    rows = harness.compare(S, forces=args.forces, base_scenario=base)
    result = {"grid": rows}
    if args.bisect:
        lo, hi = args.bisect
        result["thresholds"] = {
            c: dict(zip(("force", "bracketed"), harness.failure_threshold(S, c, lo, hi, base_scenario=base)))
            for c in (harness.BASELINE, harness.PROPOSED)
        }
    if args.json:
        _dump(result)
    else:
        print(harness.format_table(rows))
        for c, th in result.get("thresholds", {}).items():
            sign = "" if th["bracketed"] else ">= "
            print(f"failure threshold {c}: {sign}{th['force']:.1f} N")
    bad = sum(r.get("assertions", 0) for r in rows)
    return 1 if bad else 0


def build_parser():
    p = argparse.ArgumentParser(prog="anchorsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one push scenario and write traces")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", default=None, help="overrides the scenario's config entry")
    s.add_argument("--v-band", type=float, default=None, help="check V never grows by more than this between ticks")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="run the force x controller grid")
    c.add_argument("--config", default=None)
    c.add_argument("--forces", type=float, nargs="+", default=[20.0, 100.0])
    c.add_argument("--bisect", type=float, nargs=2, metavar=("LO", "HI"), default=None)
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_compare)

    g = sub.add_parser("gains", help="synthesize and certify the interface gain")
    g.add_argument("--config", default=None)
    g.set_defaults(func=cmd_gains)

    w = sub.add_parser("cwc", help="print the contact cone and its linearization")
    w.add_argument("--config", default=None)
    w.set_defaults(func=cmd_cwc)

    m = sub.add_parser("mpc-step", help="solve one MPC tick from a state file")
    m.add_argument("--state", required=True)
    m.add_argument("--config", default=None)
    m.set_defaults(func=cmd_mpc_step)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AnchorSimError as exc:
        print(f"anchorsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"anchorsim: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
