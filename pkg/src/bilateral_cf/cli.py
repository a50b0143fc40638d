"""``bilateral-cf`` command-line entry point.

Any ``--section.key value`` flag overrides the matching config entry, on top
of ``--config FILE`` (TOML) and the built-in defaults.  Exit codes: 0 on
success, 2 for configuration errors, 3 when an episode ends in a collision.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod, kernels
from .env import CarFollowingEnv, run_episode
from .learner import load_checkpoint, save_checkpoint, train, write_curve
from .metrics import AnalysisError, amplitudes_from_spacetime, episode_metrics
from .sim import ConfigError, rollout
from .trajectory import Trajectory, read_spacetime, write_spacetime

log = logging.getLogger("bilateral_cf")

EXIT_CONFIG = 2
EXIT_COLLISION = 3

TABLE_COLUMNS = {
    "closed-loop": (("Headway", "mean_time_headway"), ("Jerk", "mean_abs_jerk"), ("TTC", "mean_ttc")),
    "perturbation": (("Headway", "mean_time_headway"), ("Jerk", "mean_abs_jerk"), ("Safety", "mean_log_ttc_safety")),
}


# -- plumbing -----------------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_json_safe(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(out, command, argv, cfg, artifacts):
    manifest = {
        "command": command,
        "argv": list(argv),
        "version": __version__,
        "backend": kernels.BACKEND,
        "seed": cfg["scenario"]["seed"] if cfg else None,
        "config": cfg,
        "artifacts": {Path(p).name: _sha256(p) for p in artifacts},
    }
    _write_json(out / "manifest.json", manifest)


def _common(p):
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--preset", help="closed-loop, perturbation or smoke")
    p.add_argument("--controller", help="idm, gipps, bcm, unilateral or rl")
    p.add_argument("--checkpoint", help="policy checkpoint for rl vehicles")
    p.add_argument("--target-headway", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--label", help="method name used in summary tables")


def build_parser():
    parser = argparse.ArgumentParser(prog="bilateral-cf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one episode")
    _common(p)

    p = sub.add_parser("perturb", help="forced-leader string stability run")
    _common(p)
    p.add_argument("--waveform", choices=("sinusoid", "pulse"))
    for name in ("amplitude", "period", "drop", "duration", "start", "base-speed"):
        p.add_argument(f"--{name}", type=float)

    p = sub.add_parser("train", help="train a shared policy with DDPG")
    _common(p)
    p.add_argument("--episodes", type=int)
    p.add_argument("--variant", choices=("bilateral", "cfm"))

    p = sub.add_parser("eval", help="evaluate a trained policy")
    _common(p)

    p = sub.add_parser("metrics", help="recompute metrics from a trajectory CSV")
    p.add_argument("trajectory")
    p.add_argument("--vehicles", help="comma list of vehicle ids, e.g. 0,2,4")
    p.add_argument("--kind", choices=tuple(TABLE_COLUMNS), default="closed-loop")
    p.add_argument("--label")
    p.add_argument("--out")

    p = sub.add_parser("table", help="summarise run directories")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out")
    return parser


def _split_overrides(extra):
    """``['--a.b', '1', '--c.d=x']`` -> ``[('a.b', 1), ('c.d', 'x')]``."""
    out = []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(f"unrecognized argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"{tok} needs a value")
            i += 1
            val = extra[i]
        out.append((key, cfgmod.parse_value(val)))
        i += 1
    return out


def resolve(args, extra, default_preset):
    """Defaults <- file <- named flags <- dotted flags."""
    named = []
    if args.seed is not None:
        named.append(("scenario.seed", args.seed))
    if args.preset or default_preset:
        named.append(("scenario.preset", args.preset or default_preset))
    if args.controller:
        named.append(("scenario.controller", args.controller))
    if args.checkpoint:
        named.append(("controllers.rl.checkpoint", args.checkpoint))
    if args.target_headway is not None:
        named += [("scenario.target_headway", args.target_headway),
                  ("reward.target_headway", args.target_headway)]
    if args.steps is not None:
        named.append(("train.steps" if args.command == "train" else "scenario.steps", args.steps))
    if args.command == "perturb":
        for flag in ("waveform", "amplitude", "period", "drop", "duration", "start", "base_speed"):
            val = getattr(args, flag)
            if val is not None:
                named.append((f"perturbation.{flag}", val))
    if args.command == "train":
        if args.episodes is not None:
            named.append(("train.episodes", args.episodes))
        if args.variant:
            named.append(("controllers.rl.variant", args.variant))
    return cfgmod.load(args.config, named + _split_overrides(extra))


def _out_dir(args, command):
    out = Path(args.out or Path("runs") / command)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- episode runs -------------------------------------------------------------

def _run(cfg, label=None):
    """One episode per the resolved config: ``(scenario, trajectory, info)``."""
    scenario, measured = cfgmod.scenario_config(cfg)
    tags = scenario.controller_tags
    if "rl" in tags:
        ckpt_path = cfg["controllers"]["rl"]["checkpoint"]
        if not ckpt_path:
            raise ConfigError("rl vehicles need --checkpoint")
        if not os.path.exists(ckpt_path):
            raise ConfigError(f"checkpoint {ckpt_path} not found")
        try:
            ckpt = load_checkpoint(ckpt_path)
        except (ValueError, KeyError, OSError) as exc:
            raise ConfigError(f"cannot read checkpoint {ckpt_path}: {exc}") from None
        variant = ckpt.header["variant"]
        env = CarFollowingEnv(scenario, variant, cfgmod.reward_config(cfg))
        res = run_episode(ckpt.policy, env, seed=scenario.seed)
        traj, collided = res.trajectory, res.collided
        method = label or f"rl-{variant}"
    else:
        traj = rollout(scenario)
        collided = bool(np.asarray(traj["collision"]).any())
        method = label or (cfg["scenario"]["controller"] or tags[measured[0]])
    info = {
        "kind": "closed-loop" if scenario.is_ring else "perturbation",
        "method": method,
        "preset": cfg["scenario"]["preset"],
        "seed": scenario.seed,
        "vehicles": measured,
        "steps_run": traj.n_steps,
        "collided": collided,
    }
    if collided:
        hits = np.argwhere(np.asarray(traj["collision"]))
        k, i = hits[0]
        info["collision"] = {"t": float(traj.t[k]), "vehicle_id": int(i), "count": int(hits.shape[0])}
    return scenario, traj, info


def _export_trajectory(traj, path, vehicles):
    """Write the CSV and return metrics recomputed from it.

    Summaries are taken from the exported file, not the in-memory run, so
    ``bilateral-cf metrics`` on the CSV reproduces them exactly.
    """
    traj.to_csv(path)
    return episode_metrics(Trajectory.from_csv(path), vehicles).to_dict()


def _report_collision(info):
    c = info["collision"]
    print(f"collision: vehicle {c['vehicle_id']} at t={c['t']:.1f} s "
          f"({c['count']} vehicle-steps in collision); episode terminated after "
          f"{info['steps_run']} steps", file=sys.stderr)


def cmd_simulate(args, extra, argv):
    return _episode_cmd(args, resolve(args, extra, None), argv)


def perturbation_report(spacetime_path, cfg):
    """Per-vehicle oscillation amplitudes computed from the space-time file."""
    t, pos = read_spacetime(spacetime_path)
    prof = cfg["perturbation"]
    if prof["waveform"] == "sinusoid":
        return amplitudes_from_spacetime(t, pos, prof["period"])
    # one-off pulse: swing over the whole run
    span = float(t[-1] - t[0])
    return amplitudes_from_spacetime(t, pos, span - (t[1] - t[0]), transient_cut=0.0)


def cmd_perturb(args, extra, argv):
    cfg = resolve(args, extra, "perturbation")
    if cfg["scenario"]["preset"] != "perturbation":
        raise ConfigError("perturb runs the perturbation preset")
    out = _out_dir(args, args.command)
    scenario, traj, info = _run(cfg, args.label)
    paths = [out / "trajectory.csv", out / "spacetime.csv", out / "amplitudes.csv", out / "metrics.json"]
    info["metrics"] = _export_trajectory(traj, paths[0], info["vehicles"])
    write_spacetime(paths[1], traj)
    try:
        amps = perturbation_report(paths[1], cfg)
    except AnalysisError as exc:
        raise ConfigError(f"run too short for amplitude analysis: {exc}") from None
    with open(paths[2], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("vehicle_id", "controller", "amplitude"))
        for i, a in enumerate(amps):
            w.writerow((i, scenario.controller_tags[i], repr(float(a))))
    platoon = amps[info["vehicles"]]
    info["amplitudes"] = [float(a) for a in amps]
    info["non_increasing"] = bool(np.all(np.diff(platoon) <= 0))
    info["strictly_decreasing"] = bool(np.all(np.diff(platoon) < 0))
    info["attenuation"] = float(platoon[-1] / platoon[0]) if platoon[0] > 0 else None
    _write_json(paths[3], info)
    write_manifest(out, args.command, argv, cfg, paths)
    for i, a in enumerate(amps):
        print(f"vehicle {i:2d} {scenario.controller_tags[i]:>10s}  amplitude {a:.4f} m/s")
    print(json.dumps(_json_safe(info["metrics"]), sort_keys=True))
    if info["collided"]:
        _report_collision(info)
        return EXIT_COLLISION
    return 0


def cmd_eval(args, extra, argv):
    args.controller = args.controller or "rl"
    cfg = resolve(args, extra, None)
    if not cfg["controllers"]["rl"]["checkpoint"]:
        raise ConfigError("eval needs --checkpoint")
    return _episode_cmd(args, cfg, argv)


def _episode_cmd(args, cfg, argv):
    out = _out_dir(args, args.command)
    _, traj, info = _run(cfg, args.label)
    paths = [out / "trajectory.csv", out / "metrics.json"]
    info["metrics"] = _export_trajectory(traj, paths[0], info["vehicles"])
    _write_json(paths[1], info)
    write_manifest(out, args.command, argv, cfg, paths)
    print(json.dumps(_json_safe(info["metrics"]), sort_keys=True))
    if info["collided"]:
        _report_collision(info)
        return EXIT_COLLISION
    return 0


def cmd_train(args, extra, argv):
    args.controller = args.controller or "rl"
    cfg = resolve(args, extra, None)
    tcfg = cfgmod.train_config(cfg)
    if cfg["scenario"]["steps"] is None:
        cfg["scenario"]["steps"] = tcfg.steps
    scenario, _ = cfgmod.scenario_config(cfg)
    variant = cfg["controllers"]["rl"]["variant"]
    env = CarFollowingEnv(scenario, variant, cfgmod.reward_config(cfg))
    if not env.agents:
        raise ConfigError("scenario has no rl vehicles to train")
    out = _out_dir(args, args.command)

    def progress(row):
        log.info("episode %d  reward %.4f  headway %.3f  collisions %d",
                 row.episode, row.mean_reward, row.mean_headway, row.collisions)

    result = train(env, tcfg, progress)
    paths = [out / "policy.ckpt", out / "curve.csv"]
    save_checkpoint(paths[0], result.agent, tcfg.episodes, variant)
    write_curve(paths[1], result.curve)
    write_manifest(out, args.command, argv, cfg, paths)
    last = result.curve[-1]
    print(f"trained {tcfg.episodes} episodes; final mean reward {last.mean_reward:.4f}; wrote {paths[0]}")
    return 0


def _parse_ids(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--vehicles must be a comma list of integers, got {text!r}") from None


def cmd_metrics(args, argv):
    traj = Trajectory.from_csv(args.trajectory)
    ids = _parse_ids(args.vehicles) if args.vehicles else None
    if ids is not None:
        bad = [i for i in ids if not 0 <= i < traj.n_vehicles]
        if bad:
            raise ConfigError(f"vehicle ids {bad} not in trajectory (0..{traj.n_vehicles - 1})")
    m = episode_metrics(traj, ids)
    info = {
        "kind": args.kind,
        "method": args.label or Path(args.trajectory).resolve().parent.name,
        "vehicles": ids if ids is not None else list(range(traj.n_vehicles)),
        "steps_run": traj.n_steps,
        "collided": bool(m.collision_count),
        "metrics": m.to_dict(),
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "metrics.json"
        _write_json(path, info)
        write_manifest(out, "metrics", argv, None, [args.trajectory, path])
    print(json.dumps(_json_safe(info["metrics"]), sort_keys=True))
    return 0


def summary_table(run_dirs):
    """``(kind, header, rows)`` from each directory's ``metrics.json``, sorted by method."""
    entries = []
    for d in run_dirs:
        path = Path(d) / "metrics.json"
        if not path.exists():
            raise ConfigError(f"{d}: no metrics.json")
        with open(path) as fh:
            entries.append((str(d), json.load(fh)))
    kinds = {}
    for d, e in entries:
        kinds.setdefault(e.get("kind"), []).append(d)
    if len(kinds) > 1:
        detail = "; ".join(f"{k}: {', '.join(v)}" for k, v in sorted(kinds.items(), key=lambda kv: str(kv[0])))
        raise ConfigError(f"runs mix column sets ({detail})")
    kind = next(iter(kinds))
    if kind not in TABLE_COLUMNS:
        raise ConfigError(f"unknown run kind {kind!r} in {kinds[kind]}")
    cols = TABLE_COLUMNS[kind]
    rows = []
    for d, e in entries:
        vals = [e["metrics"].get(key) for _, key in cols]
        rows.append([e.get("method", Path(d).name)] + [math.nan if v is None else float(v) for v in vals])
    rows.sort(key=lambda r: r[0])
    return kind, ["Method"] + [c for c, _ in cols], rows


def format_table(header, rows):
    cells = [header] + [[r[0]] + [f"{v:.3f}" for v in r[1:]] for r in rows]
    widths = [max(len(row[j]) for row in cells) for j in range(len(header))]
    lines = []
    for row in cells:
        lines.append("  ".join(c.ljust(w) if j == 0 else c.rjust(w) for j, (c, w) in enumerate(zip(row, widths))))
    return "\n".join(lines)


def cmd_table(args, argv):
    kind, header, rows = summary_table(args.runs)
    text = format_table(header, rows)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, txt_path = out / "table.csv", out / "table.txt"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([r[0]] + [f"{v:.6g}" for v in r[1:]])
        txt_path.write_text(text + "\n")
        inputs = [Path(d) / "metrics.json" for d in args.runs]
        write_manifest(out, "table", argv, None, inputs + [csv_path, txt_path])
    return 0


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("metrics", "table"):
            if extra:
                parser.error(f"unrecognized arguments: {' '.join(extra)}")
            return cmd_metrics(args, argv) if args.command == "metrics" else cmd_table(args, argv)
        if args.command == "simulate":
            return cmd_simulate(args, extra, argv)
        if args.command == "perturb":
            return cmd_perturb(args, extra, argv)
        if args.command == "train":
            return cmd_train(args, extra, argv)
        return cmd_eval(args, extra, argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
