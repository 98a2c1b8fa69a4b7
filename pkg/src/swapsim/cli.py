"""Command-line front end.

    swapsim run <config> [--out DIR] [--seed N]
    swapsim sweep <config> --param NAME --values V1 V2 ... [--out DIR]
    swapsim compare <fast.csv> <slow.csv> [--sync M1 M2 ...]
    swapsim param get NAME --run DIR
    swapsim param set NAME VALUE --config FILE [--out FILE]

<config> is a YAML scenario path or the name of a shipped preset.
"""

import argparse
import csv
import json
import os
import sys

import yaml

from .config import ConfigError, list_presets, load_scenario, preset_path
from .metrics import load_csv, memory_saved, write_summary, MissingSyncPoints
from .simulation import Simulation


def _resolve_config(name):
    if os.path.exists(name):
        return name
    try:
        return str(preset_path(name))
    except ConfigError:
        raise ConfigError(f"{name!r} is neither a file nor a preset "
                          f"(presets: {list_presets()})") from None


def _out_dir(args, default_name):
    out = args.out or os.path.join("runs", default_name)
    os.makedirs(out, exist_ok=True)
    return out


def cmd_run(args):
    if args.list_presets:
        for p in list_presets():
            print(p)
        return 0
    path = _resolve_config(args.config)
    scenario = load_scenario(path, seed=args.seed)
    trace = bool(scenario.metrics.get("events_log")) or args.events
    simn = Simulation(scenario, trace_events=trace)
    collector = simn.run(args.duration)
    out = _out_dir(args, scenario.name)
    collector.write_csv(os.path.join(out, "metrics.csv"))
    write_summary(collector.summary(scenario.name, scenario.seed),
                  os.path.join(out, "summary.json"))
    params = {name: simn.engine.get_param(name)
              for name in simn.engine.param_names()}
    with open(os.path.join(out, "params.json"), "w") as f:
        json.dump(params, f, indent=2, sort_keys=True)
        f.write("\n")
    if trace:
        with open(os.path.join(out, "events.log"), "w") as f:
            for t, seq, label in simn.sim.event_log:
                f.write(f"{t} {seq} {label}\n")
    s = collector.summary(scenario.name, scenario.seed)
    print(f"{scenario.name}: t={s['sim_time_ns'] / 1e9:.3f}s "
          f"faults={s['pf_total']} (major={s['pf_major']}) "
          f"io={(s['read_bytes'] + s['write_bytes']) / 1e6:.1f}MB -> {out}")
    return 0


def cmd_sweep(args):
    path = _resolve_config(args.config)
    rows = []
    for value in args.values:
        scenario = load_scenario(path, seed=args.seed)
        simn = Simulation(scenario)
        if args.param in simn.engine.param_names():
            simn.engine.set_param(args.param, value)
        else:
            # not a registered knob: treat it as a config override path
            scenario = load_scenario(path, overrides={args.param: value},
                                     seed=args.seed)
            simn = Simulation(scenario)
        collector = simn.run()
        s = collector.summary(scenario.name, scenario.seed)
        rows.append({
            "param": args.param,
            "value": value,
            "sim_time_ns": s["sim_time_ns"],
            "pf_total": s["pf_total"],
            "pf_major": s["pf_major"],
            "pf_minor": s["pf_minor"],
            "read_bytes": s["read_bytes"],
            "write_bytes": s["write_bytes"],
            "final_resident_bytes": s["final_resident_bytes"],
            "blocked_ns": sum(w["blocked_ns"] for w in s["workloads"]),
        })
        print(f"{args.param}={value}: faults={s['pf_total']} "
              f"t={s['sim_time_ns'] / 1e9:.3f}s")
    out = _out_dir(args, f"sweep_{os.path.basename(path).split('.')[0]}")
    table = os.path.join(out, "sweep.csv")
    with open(table, "w", newline="") as f:
        if rows:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        else:
            f.write("param,value\n")
    print(f"table -> {table}")
    return 0


def cmd_compare(args):
    fast = load_csv(args.fast)
    slow = load_csv(args.slow)
    sync = set(args.sync) if args.sync else None
    try:
        saved = memory_saved(fast, slow, sync_labels=sync)
    except MissingSyncPoints as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"memory_saved: {saved:.4f}")
    return 0


def cmd_param(args):
    if args.action == "get":
        with open(os.path.join(args.run, "params.json")) as f:
            params = json.load(f)
        if args.name not in params:
            print(f"error: no parameter {args.name!r} in {args.run}",
                  file=sys.stderr)
            return 2
        print(params[args.name])
        return 0
    # set: rewrite a scenario file with the override in place
    with open(args.config) as f:
        data = yaml.safe_load(f) or {}
    overrides = data.setdefault("param_overrides", {})
    overrides[args.name] = yaml.safe_load(args.value)
    out = args.out or args.config
    with open(out, "w") as f:
        yaml.safe_dump(data, f, sort_keys=False)
    print(f"{args.name}={args.value} -> {out}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="swapsim",
                                 description="VM memory overcommit simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("config", nargs="?", default="")
    p.add_argument("--out", help="output directory (default runs/<name>)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--duration", type=int, default=None,
                   help="override run length, in nanoseconds")
    p.add_argument("--events", action="store_true",
                   help="also write the deterministic event log")
    p.add_argument("--list-presets", action="store_true")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="run a scenario once per parameter value")
    p.add_argument("config")
    p.add_argument("--param", required=True,
                   help="registered parameter name or config override path")
    p.add_argument("--values", nargs="+", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("compare", help="memory saved between two finished runs")
    p.add_argument("fast")
    p.add_argument("slow")
    p.add_argument("--sync", nargs="*", help="marker labels to align on")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("param", help="inspect or edit parameters")
    p.add_argument("action", choices=["get", "set"])
    p.add_argument("name")
    p.add_argument("value", nargs="?")
    p.add_argument("--run", help="run directory (for get)", default="runs/latest")
    p.add_argument("--config", help="scenario file (for set)")
    p.add_argument("--out", help="where to write the edited scenario")
    p.set_defaults(fn=cmd_param)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.cmd == "run" and not args.config and not args.list_presets:
        ap.error("run needs a config (or --list-presets)")
    if args.cmd == "param" and args.action == "set" and \
            (args.value is None or not args.config):
        ap.error("param set needs NAME VALUE --config FILE")
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
