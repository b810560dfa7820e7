"""JSON configuration files.

A config is a JSON object with ``schema_version`` and the sections of
``data/default.json``.  User files only need the keys they change; they are
merged over the defaults section by section.
"""

import copy
import hashlib
import json
from importlib import resources

import numpy as np

from .rigid_body import BASE, Foot, Joint, Link, RobotModel, pose_for_com

SCHEMA_VERSION = 1


def default_config():
    text = resources.files("anchorsim").joinpath("data/default.json").read_text()
    return json.loads(text)


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path=None, overrides=None):
    cfg = default_config()
    if path is not None:
        with open(path) as fh:
            user = json.load(fh)
        ver = user.get("schema_version", SCHEMA_VERSION)
        if ver != SCHEMA_VERSION:
            raise ValueError(f"unsupported config schema_version {ver}")
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate(cfg)
    return cfg


def validate(cfg):
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ValueError("config schema_version must be 1")
    r = cfg["robot"]
    if len(r["links"]) != len(r["joints"]) or len(r["nominal_pose_deg"]) != len(r["links"]):
        raise ValueError("links, joints and nominal pose must have the same length")
    b = cfg["baseline"]
    n = len(r["links"])
    if len(b["tau_min"]) != n or len(b["tau_max"]) != n:
        raise ValueError("torque bounds need one entry per joint")
    if cfg["template"]["height"] <= 0 or cfg["simrel"]["decay_rate"] <= 0:
        raise ValueError("template height and decay rate must be positive")
    sim = cfg["simulation"]
    steps = 1.0 / (sim["control_rate"] * sim["physics_dt"])
    if abs(steps - round(steps)) > 1e-9:
        raise ValueError("control period must be a whole number of physics steps")


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def build_model(cfg):
    r = cfg["robot"]
    names = [l["name"] for l in r["links"]]
    links = [Link(l["name"], l["length"], l["mass"], l.get("com_offset"), l.get("inertia")) for l in r["links"]]
    joints = []
    for j in r["joints"]:
        parent = BASE if j["parent"] is None else names.index(j["parent"])
        joints.append(Joint(j["name"], parent, j["attach_point"]))
    foot = Foot(r["foot"]["length"], r["foot"]["mass"], r["foot"].get("com_x", 0.0))
    return RobotModel(links, joints, foot, gravity=r["gravity"])


def nominal_pose(cfg, model=None):
    """Nominal joint angles (rad), refined so the CoM sits at the requested point."""
    model = build_model(cfg) if model is None else model
    r = cfg["robot"]
    q = np.deg2rad(np.asarray(r["nominal_pose_deg"], float))
    target = r.get("solve_nominal_for_com")
    if target is not None:
        q = pose_for_com(model, target, q, free=tuple(r.get("nominal_free_joints", (0, 1))))
    return q
