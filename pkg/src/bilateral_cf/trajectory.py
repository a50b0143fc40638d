"""Per-step records and their CSV forms.

Trajectory CSV columns are fixed (see ``COLUMNS``); floats are written with
six significant digits and absent values as empty fields.  The space-time
file (``t,vehicle_id,position``) keeps full ``repr`` precision so it can be
re-imported without loss.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

COLUMNS = (
    "t", "vehicle_id", "controller", "position", "speed", "accel", "front_gap",
    "back_gap", "ttc", "time_headway", "jerk", "r_safety", "r_eff", "r_comfort",
    "r_safety_f", "r_eff_f", "reward", "collision",
)
FLOAT_FIELDS = (
    "position", "speed", "accel", "front_gap", "back_gap", "ttc", "time_headway",
    "jerk", "r_safety", "r_eff", "r_comfort", "r_safety_f", "r_eff_f", "reward",
)
REWARD_FIELDS = ("r_safety", "r_eff", "r_comfort", "r_safety_f", "r_eff_f", "reward")
SPACETIME_COLUMNS = ("t", "vehicle_id", "position")


def _nan(n):
    return np.full(n, np.nan)


@dataclass
class StepRecord:
    """Measurements for every vehicle after one simulation step.

    Arrays are indexed by vehicle id.  NaN marks a value that is undefined
    (no neighbour, no closing speed, standstill) or not applicable (reward
    terms on non-learning vehicles).
    """

    t: float
    position: np.ndarray
    speed: np.ndarray
    accel: np.ndarray
    front_gap: np.ndarray
    back_gap: np.ndarray
    ttc: np.ndarray
    time_headway: np.ndarray
    jerk: np.ndarray
    collision: np.ndarray
    r_safety: np.ndarray = None
    r_eff: np.ndarray = None
    r_comfort: np.ndarray = None
    r_safety_f: np.ndarray = None
    r_eff_f: np.ndarray = None
    reward: np.ndarray = None

    def __post_init__(self):
        n = self.speed.shape[0]
        for name in REWARD_FIELDS:
            if getattr(self, name) is None:
                setattr(self, name, _nan(n))


@dataclass
class Trajectory:
    """A whole episode as ``[steps, vehicles]`` arrays keyed by column name."""

    t: np.ndarray
    controllers: tuple
    data: dict = field(default_factory=dict)
    initial_position: np.ndarray | None = None
    track_length: float | None = None

    @property
    def n_steps(self):
        return self.t.shape[0]

    @property
    def n_vehicles(self):
        return len(self.controllers)

    def __getitem__(self, name):
        return self.data[name]

    @classmethod
    def from_records(cls, records, controllers, initial_position=None, track_length=None):
        controllers = tuple(controllers)
        n = len(controllers)
        t = np.array([r.t for r in records], dtype=float)
        data = {}
        for name in FLOAT_FIELDS:
            rows = [getattr(r, name) for r in records]
            data[name] = np.vstack(rows) if rows else np.empty((0, n))
        rows = [r.collision for r in records]
        data["collision"] = np.vstack(rows).astype(bool) if rows else np.empty((0, n), dtype=bool)
        return cls(t=t, controllers=controllers, data=data,
                   initial_position=initial_position, track_length=track_length)

    def select(self, vehicles):
        """Column view restricted to the given vehicle ids."""
        idx = np.asarray(sorted(vehicles), dtype=int)
        return Trajectory(
            t=self.t,
            controllers=tuple(self.controllers[i] for i in idx),
            data={k: v[:, idx] for k, v in self.data.items()},
            initial_position=None if self.initial_position is None else self.initial_position[idx],
            track_length=self.track_length,
        )

    # -- trajectory CSV ---------------------------------------------------

    def to_csv(self, path_or_buf):
        if isinstance(path_or_buf, io.TextIOBase):
            _write_csv(path_or_buf, self)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                _write_csv(fh, self)

    def to_csv_string(self):
        buf = io.StringIO()
        _write_csv(buf, self)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            return _read_csv(fh)


def fmt(x):
    """Six-significant-digit float, or empty for NaN."""
    if x != x:
        return ""
    return format(float(x), ".6g")


def _write_csv(fh, traj):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(COLUMNS)
    cols = [traj.data[name] for name in FLOAT_FIELDS]
    coll = traj.data["collision"]
    for k in range(traj.n_steps):
        tk = fmt(traj.t[k])
        for i, tag in enumerate(traj.controllers):
            w.writerow([tk, i, tag, *(fmt(c[k, i]) for c in cols), int(coll[k, i])])


def _read_csv(fh):
    reader = csv.DictReader(fh)
    missing = set(COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"trajectory CSV lacks columns {sorted(missing)}")
    rows = list(reader)
    ids = sorted({int(r["vehicle_id"]) for r in rows})
    if ids != list(range(len(ids))):
        raise ValueError("vehicle ids must be contiguous from 0")
    n = len(ids)
    if len(rows) % n:
        raise ValueError("ragged trajectory CSV: rows are not a whole number of steps")
    steps = len(rows) // n
    controllers = [None] * n
    data = {name: np.full((steps, n), np.nan) for name in FLOAT_FIELDS}
    coll = np.zeros((steps, n), dtype=bool)
    t = np.empty(steps)
    for j, r in enumerate(rows):
        k, i = divmod(j, n)
        if int(r["vehicle_id"]) != i:
            raise ValueError(f"row {j + 2}: expected vehicle {i}, found {r['vehicle_id']}")
        t[k] = float(r["t"])
        controllers[i] = r["controller"]
        for name in FLOAT_FIELDS:
            s = r[name]
            if s != "":
                data[name][k, i] = float(s)
        coll[k, i] = r["collision"] == "1"
    data["collision"] = coll
    return Trajectory(t=t, controllers=tuple(controllers), data=data)


# -- space-time file --------------------------------------------------------

def spacetime_array(traj):
    """``(t, positions)`` with the initial placement prepended as ``t = 0``."""
    if traj.initial_position is None:
        raise ValueError("trajectory carries no initial positions")
    t = np.concatenate([[0.0], traj.t])
    pos = np.vstack([traj.initial_position, traj["position"]])
    return t, pos


def write_spacetime(path, traj):
    t, pos = spacetime_array(traj)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SPACETIME_COLUMNS)
        for k in range(t.shape[0]):
            tk = repr(float(t[k]))
            for i in range(pos.shape[1]):
                w.writerow([tk, i, repr(float(pos[k, i]))])


def read_spacetime(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SPACETIME_COLUMNS:
            raise ValueError(f"space-time CSV must have columns {SPACETIME_COLUMNS}")
        rows = list(reader)
    n = len({r["vehicle_id"] for r in rows})
    steps = len(rows) // n
    t = np.empty(steps)
    pos = np.empty((steps, n))
    for j, r in enumerate(rows):
        k, i = divmod(j, n)
        t[k] = float(r["t"])
        pos[k, int(r["vehicle_id"])] = float(r["position"])
    return t, pos
