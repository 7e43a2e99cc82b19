"""Command line over the whole pipeline: simulate, join, monitor, serve, query.

Every subcommand validates its inputs up front and reports failures as a
single JSON line on stderr.  Exit codes: 0 success, 1 bad usage or bad
config, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import sys
from dataclasses import asdict
from pathlib import Path

from ..broker import AuthFailed, Broker, BrokerConfig
from ..core import FleetKind, MalformedTopic, parse_topic_name
from ..geostore import GeoStore
from ..join.config import PRESET_WINDOWS, ConfigError, JoinConfig, preset_config
from ..join.runner import run_join
from ..monitor import MonitorConfig, run_nightly
from ..simulate.scenario import ScenarioConfig, run_simulation
from ..simulate.worldgen import WorldParams, build_world, write_world
from ..staticdata.gtfs import load_gtfs
from ..staticdata.roadnet import load_road_network
from .api import ApiQuery, GROUP_KEYS, GatewayState, aggregate_response, create_app


class UsageError(Exception):
    pass


def _err(message: str) -> None:
    print(json.dumps({"error": message}), file=sys.stderr)


def _warn(message: str) -> None:
    print(json.dumps({"warning": message}), file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; this tool reserves 2 for runtime failures
    def error(self, message):
        self.print_usage(sys.stderr)
        _err(message)
        raise SystemExit(1)


def _open_broker(args) -> tuple[Broker, BrokerConfig]:
    config = BrokerConfig.from_file(args.broker_config)
    return Broker.from_config(config), config


def _cap_for(broker: Broker, config: BrokerConfig, tenant: str):
    secret = next((t.secret for t in config.tenants if t.tenant == tenant), None)
    if secret is None:
        raise UsageError(f"tenant {tenant!r} not present in broker config")
    return broker.authenticate(tenant, secret)


def _load_store(broker: Broker, cap, topics: list[str]) -> GeoStore:
    store = GeoStore()
    existing = set(broker.topics())
    for raw in topics:
        name = parse_topic_name(raw)
        if name not in existing:
            _warn(f"store topic {raw} does not exist yet; skipping")
            continue
        report = store.ingest_topic(broker, name, cap)
        _warn(f"loaded {report.inserted} samples from {raw}"
              f" ({report.gaps} gaps, {report.schema_errors} schema errors)")
    return store


def cmd_serve(args) -> int:
    broker, config = _open_broker(args)
    cap = _cap_for(broker, config, args.tenant)
    network = None
    if args.world_dir:
        network = load_road_network(Path(args.world_dir) / "network.jsonl")
    store = _load_store(broker, cap, args.store_topic or ["carta/merged/enriched"])
    state = GatewayState(broker, store, cap, network=network,
                         alerts_topic=args.alerts_topic,
                         report_dir=args.report_dir, static_dir=args.static_dir)
    app = create_app(state)

    import uvicorn
    uvicorn.run(app, host=args.host or config.listen_host,
                port=args.port if args.port is not None else config.listen_port,
                log_level="warning")
    return 0


def cmd_worldgen(args) -> int:
    scenario = ScenarioConfig.from_file(args.scenario)
    out = args.out or scenario.world_dir
    if out is None:
        raise UsageError("give --out or set world_dir in the scenario")
    world = build_world(WorldParams(seed=scenario.seed,
                                    vehicle_ids=tuple(scenario.vehicle_ids())))
    write_world(world, out)
    print(json.dumps({"world_dir": str(out),
                      "segments": len(world.network.segments),
                      "routes": len(world.schedule.routes),
                      "trips": len(world.schedule.trips)}))
    return 0


def cmd_simulate(args) -> int:
    broker, _ = _open_broker(args)
    scenario = ScenarioConfig.from_file(args.scenario)
    report = run_simulation(scenario, broker)
    print(json.dumps(asdict(report)))
    return 0


def cmd_join(args) -> int:
    broker, config = _open_broker(args)
    if args.config:
        join_config = JoinConfig.from_file(args.config)
    else:
        join_config = preset_config(args.preset, args.output)
    cap = _cap_for(broker, config, join_config.output.tenant)
    stats = run_join(join_config, broker, cap, world_dir=args.world_dir,
                     live_seconds=args.live, batch_size=args.batch_size)
    print(json.dumps(asdict(stats)))
    return 0


def cmd_monitor(args) -> int:
    broker, config = _open_broker(args)
    cap = _cap_for(broker, config, args.tenant)
    schedule = load_gtfs(args.gtfs) if args.gtfs else None
    monitor_config = MonitorConfig(min_history=args.min_history,
                                   lookback_days=args.lookback_days,
                                   report_dir=args.report_dir)
    report = run_nightly(args.date, broker, cap, schedule, config=monitor_config)
    sys.stdout.buffer.write(report.to_json() + b"\n")
    return 0


def cmd_backfill_store(args) -> int:
    broker, config = _open_broker(args)
    cap = _cap_for(broker, config, args.tenant)
    store = GeoStore()
    report = store.ingest_topic(broker, parse_topic_name(args.topic), cap)
    print(json.dumps(asdict(report)))
    return 0


def cmd_query(args) -> int:
    if args.from_ms > args.to_ms:
        raise UsageError("--from must be <= --to")
    broker, config = _open_broker(args)
    cap = _cap_for(broker, config, args.tenant)
    store = GeoStore()
    store.ingest_topic(broker, parse_topic_name(args.topic), cap)
    body = aggregate_response(store, ApiQuery(args.from_ms, args.to_ms, args.group_by,
                                              args.fleet, args.route_id))
    if args.json:
        print(json.dumps(body))
        return 0
    print(f"{'key':<28} {'kWh':>12} {'miles':>12} {'kWh/mi':>10} {'samples':>8}")
    for row in body["rows"]:
        kpm = "-" if row["kwh_per_mile"] is None else f"{row['kwh_per_mile']:.4f}"
        print(f"{row['key']:<28} {row['energy_kwh']:>12.4f} "
              f"{row['distance_mi']:>12.4f} {kpm:>10} {row['sample_count']:>8}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="fleetstream",
                     description="transit telemetry pipeline: brokered streams, "
                                 "windowed joins, energy aggregates, monitoring")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    def common(sp, tenant=True):
        sp.add_argument("--broker-config", required=True, metavar="FILE",
                        help="broker config JSON (data_dir, tenants, ...)")
        if tenant:
            sp.add_argument("--tenant", default="carta",
                            help="tenant to act as (default: carta)")

    sp = sub.add_parser("serve", help="run the HTTP gateway over an existing data dir")
    common(sp)
    sp.add_argument("--store-topic", action="append", metavar="TOPIC",
                    help="join output topic to load into the aggregate store "
                         "(repeatable; default carta/merged/enriched)")
    sp.add_argument("--world-dir", help="world directory with network.jsonl for segment geometry")
    sp.add_argument("--alerts-topic", default="carta/monitoring/alerts")
    sp.add_argument("--report-dir", help="directory of nightly report JSON files")
    sp.add_argument("--static-dir", help="static assets to serve at / (the dashboard build)")
    sp.add_argument("--host", default=None)
    sp.add_argument("--port", type=int, default=None)
    sp.set_defaults(func=cmd_serve)

    sp = sub.add_parser("worldgen", help="write the synthetic service area a scenario runs in")
    sp.add_argument("scenario", metavar="SCENARIO", help="scenario config JSON")
    sp.add_argument("--out", help="target directory (default: the scenario's world_dir)")
    sp.set_defaults(func=cmd_worldgen)

    sp = sub.add_parser("simulate", help="run a scenario onto broker topics")
    sp.add_argument("scenario", metavar="SCENARIO", help="scenario config JSON")
    common(sp, tenant=False)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("join", help="run the windowed multi-stream join")
    sp.add_argument("config", nargs="?", metavar="CONFIG",
                    help="join config JSON (omitted: use --preset)")
    common(sp, tenant=False)
    sp.add_argument("--preset", choices=sorted(PRESET_WINDOWS), default="tumbling-5s")
    sp.add_argument("--output", default="carta/merged/enriched",
                    help="output topic when using --preset")
    sp.add_argument("--world-dir", help="static world data for enrichment")
    sp.add_argument("--live", type=float, default=None, metavar="SECONDS",
                    help="keep polling for new records this long instead of one batch pass")
    sp.add_argument("--batch-size", type=int, default=500)
    sp.set_defaults(func=cmd_join)

    sp = sub.add_parser("monitor", help="nightly count + coverage checks for one date")
    common(sp)
    sp.add_argument("--date", required=True, type=dt.date.fromisoformat,
                    metavar="YYYY-MM-DD")
    sp.add_argument("--gtfs", help="GTFS directory for the trip-coverage check")
    sp.add_argument("--report-dir", help="where to write the report files")
    sp.add_argument("--lookback-days", type=int, default=28)
    sp.add_argument("--min-history", type=int, default=4)
    sp.set_defaults(func=cmd_monitor)

    sp = sub.add_parser("backfill-store", help="replay a join output topic into a fresh store")
    common(sp)
    sp.add_argument("--topic", default="carta/merged/enriched")
    sp.set_defaults(func=cmd_backfill_store)

    sp = sub.add_parser("query", help="aggregate energy/distance from a join output topic")
    common(sp)
    sp.add_argument("--topic", default="carta/merged/enriched")
    sp.add_argument("--group-by", required=True, choices=list(GROUP_KEYS))
    sp.add_argument("--from", dest="from_ms", required=True, type=int, metavar="MS")
    sp.add_argument("--to", dest="to_ms", required=True, type=int, metavar="MS")
    sp.add_argument("--fleet", choices=[k.value for k in FleetKind], default=None)
    sp.add_argument("--route", dest="route_id", default=None)
    sp.add_argument("--json", action="store_true",
                    help="print the full API response body instead of a table")
    sp.set_defaults(func=cmd_query)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    try:
        return args.func(args)
    except (UsageError, ConfigError, MalformedTopic) as e:
        _err(str(e))
        return 1
    except FileNotFoundError as e:
        _err(f"file not found: {e}")
        return 1
    except AuthFailed as e:
        _err(f"authentication failed: {e}")
        return 2
    except Exception as e:  # runtime failure of any stage
        _err(f"{type(e).__name__}: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
