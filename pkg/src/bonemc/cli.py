"""Command-line front end.

Subcommands: check, simulate, diagnose, sweep, export-matrix. Every run
writes a manifest.json into the output directory that echoes the
effective configuration (enough to reproduce the run exactly); result
files themselves carry no timestamps, so repeated runs are
byte-identical.

A config file (--config) holds `key = value` lines with `#` comments;
keys mirror the long flags (model, props, out, format, grid,
trajectories, seed, horizon, record, visit_interval, workers). The keys
`const` and `comorbidity` may repeat. Command-line flags override file
values.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import bone_model_path, bone_properties_path
from .diagnostics import (DiagnosticConfig, PatientRecord, ReferenceStats,
                          evaluate_record, record_from_csv)
from .errors import ModelError
from .lang import parse_model, resolve_constants
from .properties import (eval_density_series, eval_rapid_change,
                         evaluate, parse_properties, result_csv_rows,
                         result_json_payload)
from .simulate import RNG_ID, run_ensemble, simulate_trajectory
from .statespace import (build_ctmc, export_matrix_market,
                         export_reward_vectors, export_states_csv)

ERROR_EXIT = 4      # diagnose reserves 0..2 for severity classes


def _parse_const(text: str) -> tuple[str, float]:
    if "=" not in text:
        raise ModelError(f"bad constant assignment {text!r}; use NAME=VALUE")
    name, value = text.split("=", 1)
    try:
        return name.strip(), float(value)
    except ValueError:
        raise ModelError(f"bad constant value in {text!r}") from None


def _parse_grid(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ModelError(f"bad grid {text!r}; use T0:T1:STEP")
    t0, t1, step = (float(p) for p in parts)
    if step <= 0 or t1 < t0 or t0 < 0:
        raise ModelError(f"bad grid {text!r}")
    out = []
    t = t0
    while t <= t1 + 1e-9:
        out.append(round(t, 9))
        t += step
    return out


def read_config_file(path) -> dict:
    """Parse the key=value run-configuration format."""
    single: dict = {}
    repeated: dict[str, list[str]] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ModelError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in ("const", "comorbidity", "range"):
            repeated.setdefault(key, []).append(value)
        else:
            single[key] = value
    single.update(repeated)
    return single


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    """File values fill in flags the user left at their defaults."""
    if not getattr(args, "config", None):
        return args
    cfg = read_config_file(args.config)
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ModelError(f"unknown config key '{key}'")
        current = getattr(args, attr)
        if attr in ("const", "comorbidity", "range"):
            merged = list(value) + list(current or [])
            setattr(args, attr, merged)
        elif current is None:
            if attr in ("trajectories", "seed", "workers"):
                value = int(value)
            elif attr in ("horizon", "visit_interval"):
                value = float(value)
            setattr(args, attr, value)
    return args


def _load_model(args) -> tuple:
    model_path = Path(args.model) if args.model else bone_model_path()
    if not model_path.exists():
        raise ModelError(f"model file not found: {model_path}")
    consts = dict(_parse_const(c) for c in (args.const or []))
    ast = parse_model(model_path.read_text())
    resolved = resolve_constants(ast, consts)
    return model_path, consts, resolved


def _timed(timings: dict, phase: str, fn, *fnargs, **kwargs):
    start = time.perf_counter()
    result = fn(*fnargs, **kwargs)
    timings[phase] = round(time.perf_counter() - start, 6)
    return result


def write_manifest(out_dir: Path, command: str, config: dict,
                   states: int, transitions: int, timings: dict) -> None:
    """Atomically write manifest.json next to the results."""
    payload = {
        "tool": "bonemc",
        "version": __version__,
        "rng": RNG_ID,
        "command": command,
        "config": config,
        "states": states,
        "transitions": transitions,
        "timings_s": timings,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    tmp = out_dir / "manifest.json.tmp"
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, out_dir / "manifest.json")


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _slug(text: str, index: int) -> str:
    keep = [ch if ch.isalnum() else "_" for ch in text[:40]]
    return f"prop_{index:03d}_" + "".join(keep).strip("_")


# ------------------------------------------------------------------ check

def cmd_check(args) -> int:
    out = _out_dir(args)
    timings: dict = {}
    model_path, consts, resolved = _timed(timings, "parse", _load_model, args)
    props_path = Path(args.props) if args.props else bone_properties_path()
    if not props_path.exists():
        raise ModelError(f"property file not found: {props_path}")
    props = parse_properties(props_path.read_text())
    ctmc = _timed(timings, "build", build_ctmc, resolved)

    report = {}
    start = time.perf_counter()
    for i, prop in enumerate(props, start=1):
        result = evaluate(ctmc, prop)
        report[prop.source] = result_json_payload(result)
        if args.format in ("csv", "both"):
            header, rows = result_csv_rows(result)
            with open(out / f"{_slug(prop.source, i)}.csv", "w",
                      newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                writer.writerows(rows)
    timings["evaluate"] = round(time.perf_counter() - start, 6)
    (out / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")

    config = {"model": str(model_path), "props": str(props_path),
              "const": consts, "format": args.format}
    write_manifest(out, "check", config, ctmc.n_states, ctmc.n_transitions,
                   timings)
    print(f"checked {len(props)} properties over {ctmc.n_states} states "
          f"-> {out}")
    return 0


# --------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    out = _out_dir(args)
    timings: dict = {}
    model_path, consts, resolved = _timed(timings, "parse", _load_model, args)
    ctmc = _timed(timings, "build", build_ctmc, resolved)
    checkpoints = _parse_grid(args.grid)
    horizon = args.horizon if args.horizon is not None else max(checkpoints)
    n = args.trajectories
    if n < 1:
        raise ModelError("--trajectories must be at least 1")

    stats = _timed(timings, "simulate", run_ensemble, ctmc, horizon,
                   checkpoints, n, args.seed, workers=args.workers or 1)

    with open(out / "stats.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["checkpoint", "structure", "n", "mean", "variance",
                         "min", "max"])
        for st in stats:
            for j, name in enumerate(st.reward_names):
                writer.writerow([repr(st.checkpoint), name, st.n,
                                 repr(float(st.mean[j])),
                                 repr(float(st.variance[j])),
                                 repr(float(st.minimum[j])),
                                 repr(float(st.maximum[j]))])
            if st.net_mean is not None:
                writer.writerow([repr(st.checkpoint),
                                 f"net({st.net_pair[0]}-{st.net_pair[1]})",
                                 st.n, repr(st.net_mean),
                                 repr(st.net_variance), "", ""])
    if stats[0].histogram_counts is not None:
        with open(out / "histogram.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["checkpoint", "bin_lo", "bin_hi", "count"])
            for st in stats:
                edges = st.histogram_edges
                lows = ["-inf"] + [repr(float(e)) for e in edges]
                highs = [repr(float(e)) for e in edges] + ["inf"]
                for lo, hi, count in zip(lows, highs, st.histogram_counts):
                    writer.writerow([repr(st.checkpoint), lo, hi, int(count)])

    if args.events_log:
        start = time.perf_counter()
        with open(out / "trajectories.jsonl", "w") as fh:
            for i in range(n):
                traj = simulate_trajectory(ctmc, horizon, checkpoints,
                                           seed=args.seed + i)
                for (t, tid) in traj.events:
                    fh.write(json.dumps({"seed": traj.seed, "t": t,
                                         "transition": tid}) + "\n")
        timings["events_log"] = round(time.perf_counter() - start, 6)

    config = {"model": str(model_path), "const": consts,
              "trajectories": n, "seed": args.seed, "grid": args.grid,
              "horizon": horizon, "workers": args.workers or 1,
              "rng": RNG_ID}
    write_manifest(out, "simulate", config, ctmc.n_states,
                   ctmc.n_transitions, timings)
    print(f"simulated {n} trajectories to horizon {horizon} -> {out}")
    return 0


# --------------------------------------------------------------- diagnose

def cmd_diagnose(args) -> int:
    out = _out_dir(args)
    timings: dict = {}
    reference = ReferenceStats(*(float(x) for x in args.reference.split(",")))\
        if args.reference else ReferenceStats(0.0, 1.0, 0.0, 1.0)
    comorbidities = frozenset(args.comorbidity or [])

    config_echo: dict = {"comorbidities": sorted(comorbidities)}
    if args.record:
        text = Path(args.record).read_text()
        record = record_from_csv(text, comorbidities, reference)
        config_echo["record"] = str(args.record)
    elif args.from_model:
        model_path, consts, resolved = _load_model(args)
        ctmc = _timed(timings, "build", build_ctmc, resolved)
        interval = args.visit_interval or 50.0
        horizon = args.horizon if args.horizon is not None else 1460.0
        visits_t = [t for t in np.arange(interval, horizon + 1e-9, interval)]
        traj = _timed(timings, "simulate", simulate_trajectory, ctmc, horizon,
                      visits_t, args.seed)
        plus = ctmc.reward_index("boneFormed")
        minus = ctmc.reward_index("boneResorbed")
        visits = tuple(
            (t, float(traj.checkpoint_rewards[t][plus]
                      - traj.checkpoint_rewards[t][minus]))
            for t in visits_t)
        record = PatientRecord(visits, comorbidities, reference)
        config_echo.update({"model": str(model_path), "const": consts,
                            "visit_interval": interval, "horizon": horizon,
                            "seed": args.seed})
    else:
        raise ModelError("diagnose needs --record FILE or --from-model")

    diag_config = DiagnosticConfig(
        drop_k=args.k if args.k is not None else 0.25,
        drop_dt=args.dt if args.dt is not None else 100.0,
    )
    report = evaluate_record(record, diag_config)

    def _num(x: float):
        return None if x != x else x    # NaN -> null in strict JSON

    payload = {
        "flags": report.flags.as_env(),
        "raw": {
            "t_score": _num(report.flags.t_score),
            "z_score": _num(report.flags.z_score),
            "max_drop": _num(report.flags.max_drop),
            "variance": _num(report.flags.variance),
            "hurst": _num(report.flags.hurst),
        },
        "fired_rules": [{"rule": r, "diagnosis": d}
                        for (r, d) in report.fired_rules],
        "severity": report.severity,
    }
    (out / "diagnosis.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "diagnose", config_echo, 0, 0, timings)
    for (_rule, diagnosis) in report.fired_rules:
        print(f"diagnosis: {diagnosis}")
    if not report.fired_rules:
        print("diagnosis: no rule fired")
    return report.severity


# ------------------------------------------------------------------ sweep

def cmd_sweep(args) -> int:
    out = _out_dir(args)
    timings: dict = {}
    model_path = Path(args.model) if args.model else bone_model_path()
    ast = parse_model(model_path.read_text())
    if not args.range:
        raise ModelError("sweep needs at least one --range NAME=V1,V2,...")
    names, value_lists = [], []
    for spec in args.range:
        name, _, values = spec.partition("=")
        if not values:
            raise ModelError(f"bad range {spec!r}; use NAME=V1,V2,...")
        parsed = [float(v) for v in values.split(",") if v.strip() != ""]
        if not parsed:
            raise ModelError(f"empty range for '{name}'")
        names.append(name.strip())
        value_lists.append(parsed)
    base_consts = dict(_parse_const(c) for c in (args.const or []))
    horizon = args.horizon if args.horizon is not None else 1460.0
    grid = _parse_grid(args.grid) if args.grid else \
        [float(t) for t in np.arange(0.0, horizon + 1e-9, 50.0)]
    grid = sorted(set(grid) | {float(horizon)})

    diag = DiagnosticConfig()
    rows = []
    start = time.perf_counter()
    import itertools
    for combo in itertools.product(*value_lists):
        consts = dict(base_consts)
        consts.update(zip(names, combo))
        resolved = resolve_constants(ast, consts)
        ctmc = build_ctmc(resolved)
        dens = eval_density_series(ctmc, grid)
        rc = eval_rapid_change(ctmc, diag.drop_k, diag.drop_dt, grid)
        at = dict(zip(dens.grid, dens.values))
        fbd = float(at.get(float(horizon), dens.values[-1]))
        drops = [at[t] - at[u] for t, u in zip(dens.grid, dens.grid[1:])]
        rows.append(list(combo) + [fbd, bool(any(rc.values)),
                                   max(drops) if drops else 0.0])
    timings["sweep"] = round(time.perf_counter() - start, 6)

    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + ["f_bd_at_horizon", "rapid_change_flag",
                                 "max_step_drop"])
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v
                             for v in row])
    config = {"model": str(model_path), "ranges": dict(zip(names, value_lists)),
              "const": base_consts, "horizon": horizon}
    write_manifest(out, "sweep", config, 0, 0, timings)
    print(f"swept {len(rows)} parameter points -> {out}")
    return 0


# ----------------------------------------------------------- export-matrix

def cmd_export_matrix(args) -> int:
    out = _out_dir(args)
    timings: dict = {}
    model_path, consts, resolved = _timed(timings, "parse", _load_model, args)
    ctmc = _timed(timings, "build", build_ctmc, resolved)
    export_matrix_market(ctmc, out / "rate_matrix.mtx")
    export_reward_vectors(ctmc, out)
    export_states_csv(ctmc, out / "states.csv")
    config = {"model": str(model_path), "const": consts}
    write_manifest(out, "export-matrix", config, ctmc.n_states,
                   ctmc.n_transitions, timings)
    print(f"exported {ctmc.n_states} states, {ctmc.n_transitions} "
          f"transitions -> {out}")
    return 0


# ------------------------------------------------------------------ driver

def _add_common(p: argparse.ArgumentParser, with_props=False):
    p.add_argument("--model", help="model file (default: bundled bone model)")
    p.add_argument("--const", action="append", metavar="NAME=VALUE",
                   help="override an undefined constant (repeatable)")
    p.add_argument("--config", help="key=value config file; flags win")
    p.add_argument("--out", help="output directory (default: current)")
    if with_props:
        p.add_argument("--props",
                       help="property file (default: bundled suite)")


def build_arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bonemc",
        description="CTMC model checking and simulation for the bundled "
                    "bone-remodeling model (or any model in its dialect).")
    ap.add_argument("--version", action="version",
                    version=f"bonemc {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="evaluate a property file")
    _add_common(p, with_props=True)
    p.add_argument("--format", choices=("csv", "json", "both"), default="csv")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("simulate", help="run a Monte Carlo ensemble")
    _add_common(p)
    p.add_argument("--trajectories", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", default="365:1460:365",
                   help="checkpoint grid T0:T1:STEP (default 365:1460:365)")
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--events-log", action="store_true",
                   help="also write trajectories.jsonl (one event per line)")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("diagnose", help="evaluate the diagnostic estimators")
    _add_common(p)
    p.add_argument("--record", help="patient record CSV (t_days,bmd)")
    p.add_argument("--from-model", action="store_true",
                   help="synthesize the record by simulating the model")
    p.add_argument("--comorbidity", action="append",
                   choices=("diabetes", "thalassemia"))
    p.add_argument("--reference", metavar="MEAN_Y,SD_Y,MEAN_A,SD_A",
                   help="reference-population parameters for t/z scores")
    p.add_argument("--visit-interval", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=float, default=None,
                   help="drop threshold for flag b (default 0.25)")
    p.add_argument("--dt", type=float, default=None,
                   help="drop window in days for flag b (default 100)")
    p.set_defaults(fn=cmd_diagnose)

    p = sub.add_parser("sweep", help="cross-product parameter sweep")
    _add_common(p)
    p.add_argument("--range", action="append", metavar="NAME=V1,V2,...",
                   help="values for an undefined constant (repeatable)")
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--grid", default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("export-matrix",
                       help="rate matrix, reward vectors, state table")
    _add_common(p)
    p.set_defaults(fn=cmd_export_matrix)
    return ap


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        args = _merge_config(args)
        return args.fn(args)
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR_EXIT if args.command == "diagnose" else 1


if __name__ == "__main__":
    sys.exit(main())
