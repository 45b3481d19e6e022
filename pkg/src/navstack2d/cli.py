"""Command-line entry point."""

from __future__ import annotations

import argparse
import sys
import time

from .runner import NavRunner, RateTable
from .sim.scenario import load_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="navstack2d", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario through the full pipeline")
    run.add_argument("scenario", help="path to a scenario file")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--log", default=None, help="write the tick log (JSON lines) here")
    run.add_argument("--serve", type=int, default=None, metavar="PORT",
                     help="expose the state-stream service on this port")
    run.add_argument("--dump-maps", default=None, metavar="DIR",
                     help="write costmap snapshots at the global-map rate")
    run.add_argument("--dump-clouds", default=None, metavar="DIR",
                     help="write filtered/segmented clouds at the local rate")
    run.add_argument("--headless", action="store_true",
                     help="run flat out (no real-time pacing) even when serving")
    run.add_argument("--ground-truth", action="store_true",
                     help="debug: localize from ground truth instead of odometry")
    return parser


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    runner = NavRunner(
        scenario,
        RateTable(),
        use_ground_truth=args.ground_truth,
        dump_maps=args.dump_maps,
        dump_clouds=args.dump_clouds,
    )
    wall_start = time.monotonic()
    if args.serve is not None:
        from .service import StateStreamServer

        server = StateStreamServer(runner, port=args.serve)
        print(f"serving state stream on ws://127.0.0.1:{server.port}", flush=True)
        try:
            server.serve_run(realtime=not args.headless)
        finally:
            server.close()
    else:
        runner.run()
    wall = time.monotonic() - wall_start

    log = runner.log
    if args.log:
        with open(args.log, "w", encoding="utf-8") as f:
            f.write(log.to_jsonl())
    events = log.events()
    print(f"status: {log.status}")
    print(f"simulated {runner.t:.2f} s in {wall:.2f} s wall clock")
    print(f"events: {len(events)} "
          f"(replans: {sum(1 for e in events if e['type'] == 'replan')}, "
          f"collisions: {sum(1 for e in events if e['type'] == 'collision')})")
    return 0 if log.status == "goal-reached" else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
