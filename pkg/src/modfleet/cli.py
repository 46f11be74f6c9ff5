"""Command-line front end.

Subcommands cover the full path from trip data to metrics:

  synth      generate a synthetic trip CSV with known ground truth
  ingest     trip CSV -> hourly demand profile JSON
  analyze    profile + fleet size(s) -> availability report
  rebalance  profile hour -> optimal repositioning plan JSON
  simulate   profile + fleet -> closed-loop simulation summary
  congestion grid ensemble -> utilization-increase scatter CSV

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import cityio, congestion, jackson, rebalance, sim
from .errors import ConvergenceError, ValidationError
from .netmodel import build_abstract_net


def _load_config(path):
    if not path:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValidationError("config file must hold a JSON object")
    return doc


def _opt(args, config, name, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return config.get(name, default)


def _write_text(path, text):
    if path and path != "-":
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_synth(args, config):
    n = int(_opt(args, config, "stations", 5))
    rate = float(_opt(args, config, "rate", 60.0))
    spec = cityio.SynthSpec.demo(n=n, rate_per_hour=rate)
    text = cityio.generate_synthetic_city(spec, seed=args.seed)
    _write_text(args.out, text)
    if args.truth:
        with open(args.truth, "w") as fh:
            json.dump(spec.ground_truth_json(), fh)
    return 0


def _cmd_ingest(args, config):
    trips = cityio.parse_trips_file(args.trips)
    n = int(_opt(args, config, "stations", 100))
    kappa = float(_opt(args, config, "kappa", 1.0))
    clustering = cityio.cluster_stations(trips, n, seed=args.seed)
    profile = cityio.estimate_profile(trips, clustering, kappa=kappa)
    cityio.save_profile(profile, args.out or "profile.json")
    print(f"stations: {n}  trips: {len(trips)}  "
          f"walk km mean {clustering.walk_km_mean:.3f} "
          f"p95 {clustering.walk_km_p95:.3f}", file=sys.stderr)
    return 0


def _fleet_list(text):
    return [int(tok) for tok in str(text).split(",") if tok]


def _cmd_analyze(args, config):
    profile = cityio.load_profile(args.profile)
    hour = int(_opt(args, config, "hour", 0))
    fleets = _fleet_list(_opt(args, config, "fleet", "1000"))
    net = profile.slice_for_hour(hour)
    if args.no_rebalance:
        qnet = build_abstract_net(net)
    else:
        plan = rebalance.solve_rebalancing(net)
        qnet = build_abstract_net(net, plan.promotion)
    pi = jackson.solve_throughputs(qnet)
    results = []
    for m in fleets:
        report = jackson.mva_metrics(qnet, pi, m)
        results.append(report)
    if args.out and args.out.endswith(".csv"):
        lines = ["fleet,station,availability,throughput,gamma"]
        for rep in results:
            for s in range(rep.n_stations):
                lines.append(f"{rep.m},{s},{rep.A[s]:.10g},"
                             f"{rep.Lambda[s]:.10g},{rep.gamma[s]:.10g}")
        _write_text(args.out, "\n".join(lines) + "\n")
    else:
        doc = {"schema": 1, "hour": hour,
               "results": [rep.to_json() for rep in results]}
        _write_text(args.out, json.dumps(doc))
    return 0


def _cmd_rebalance(args, config):
    profile = cityio.load_profile(args.profile)
    hour = int(_opt(args, config, "hour", 0))
    plan = rebalance.solve_rebalancing(profile.slice_for_hour(hour))
    _write_text(args.out, json.dumps(plan.to_json()))
    return 0


def _cmd_simulate(args, config):
    profile = cityio.load_profile(args.profile)
    cfg = sim.SimConfig(
        profile=profile,
        dt=float(_opt(args, config, "dt", 2.0)),
        rebalance_every=float(_opt(args, config, "horizon", 900.0)),
        duration=float(_opt(args, config, "duration", 86400.0)),
        mode=_opt(args, config, "mode", "queue"),
        travel=_opt(args, config, "travel", "deterministic"),
        seed=args.seed,
        sample_every=int(_opt(args, config, "sample_every",
                              450 if args.trace else 0)),
    )
    m = int(_opt(args, config, "fleet", 1000))
    policy = _opt(args, config, "policy", "realtime-dispatch")
    trace = sim.run(cfg, m, policy=policy)
    _write_text(args.out, json.dumps(trace.summary()))
    if args.trace:
        with open(args.trace, "w") as fh:
            trace.write_events(fh)
    return 0


def _cmd_congestion(args, config):
    rows = int(_opt(args, config, "rows", 3))
    cols = int(_opt(args, config, "cols", 3))
    graph = congestion.RoadGraph.grid(
        rows=rows, cols=cols,
        segment_km=float(_opt(args, config, "segment_km", 0.5)),
        capacity=float(_opt(args, config, "capacity", 40.0)),
        speed_kmh=float(_opt(args, config, "speed_kmh", 30.0)),
    )
    result = congestion.congestion_study(
        graph=graph,
        n_systems=int(_opt(args, config, "systems", 500)),
        seed=args.seed,
        lam_range=(float(_opt(args, config, "lam_min", 1.0)),
                   float(_opt(args, config, "lam_max", 7.0))),
    )
    _write_text(args.out, result.to_csv())
    print(f"accepted {len(result.rows)} systems, "
          f"resampled {result.resampled}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modfleet",
        description="Fleet availability analysis, repositioning, simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output path ('-' = stdout)")
        p.add_argument("--config", default=None, help="JSON config file")

    p = sub.add_parser("synth", help="generate a synthetic trip CSV")
    common(p)
    p.add_argument("--stations", type=int, default=None)
    p.add_argument("--rate", type=float, default=None,
                   help="mean trips per station-hour")
    p.add_argument("--truth", default=None, help="ground-truth JSON path")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="estimate a demand profile from trips")
    common(p)
    p.add_argument("--trips", required=True)
    p.add_argument("--stations", type=int, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("analyze", help="availability vs fleet size")
    common(p)
    p.add_argument("--profile", required=True)
    p.add_argument("--hour", type=int, default=None)
    p.add_argument("--fleet", default=None, help="fleet size or comma list")
    p.add_argument("--no-rebalance", action="store_true")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("rebalance", help="optimal repositioning plan")
    common(p)
    p.add_argument("--profile", required=True)
    p.add_argument("--hour", type=int, default=None)
    p.set_defaults(func=_cmd_rebalance)

    p = sub.add_parser("simulate", help="closed-loop fleet simulation")
    common(p)
    p.add_argument("--profile", required=True)
    p.add_argument("--fleet", type=int, default=None)
    p.add_argument("--policy", choices=["none", "realtime-dispatch"],
                   default=None)
    p.add_argument("--mode", choices=["loss", "queue"], default=None)
    p.add_argument("--travel", choices=["exponential", "deterministic"],
                   default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--trace", default=None, help="NDJSON event log path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("congestion", help="repositioning impact ensemble")
    common(p)
    p.add_argument("--systems", type=int, default=None)
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--cols", type=int, default=None)
    p.add_argument("--lam-min", type=float, default=None, dest="lam_min")
    p.add_argument("--lam-max", type=float, default=None, dest="lam_max")
    p.set_defaults(func=_cmd_congestion)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except (ValidationError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, AssertionError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
