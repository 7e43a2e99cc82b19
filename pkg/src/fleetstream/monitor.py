"""Nightly data-integrity checks over broker topics.

Two detectors, both deliberately simple:

* per-topic count anomalies -- today's record count compared against the
  mean of recent same-weekday counts, flagged when it falls strictly more
  than two population standard deviations short (one-sided: high counts
  never alert);
* per-vehicle trip coverage -- every vehicle bound to a scheduled trip must
  have produced at least one telemetry record inside the trip window.

Alerts are published onto a broker topic so downstream consumers can replay
them like any other stream, keyed by (kind, subject, date) so reruns never
duplicate.  Reports carry no wall-clock state: running the same night twice
yields byte-identical JSON.
"""

from __future__ import annotations

import bisect
import datetime as dt
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .broker import Broker, Capability
from .core import TopicName, canonical_json, parse_payload, parse_topic_name
from .staticdata.gtfs import ActiveTrip, GtfsSchedule, trips_active_at

ALERT_COUNT = "count_anomaly"
ALERT_COVERAGE = "coverage_gap"

MIN_HISTORY = 4

_EPOCH = dt.date(1970, 1, 1)
_DAY_MS = 86_400_000


class InsufficientHistory(ValueError):
    """Not enough prior same-weekday counts to form a baseline."""

    def __init__(self, topic, dow: int, have: int, need: int):
        super().__init__(f"{topic}: {have} prior dow-{dow} counts, need {need}")
        self.topic = topic
        self.dow = dow
        self.have = have
        self.need = need


def day_bounds_ms(date: dt.date) -> tuple[int, int]:
    """UTC midnight-to-midnight window of a calendar date, epoch ms."""
    t0 = (date - _EPOCH).days * _DAY_MS
    return t0, t0 + _DAY_MS


def date_of_ms(ts_ms: int) -> dt.date:
    return _EPOCH + dt.timedelta(days=ts_ms // _DAY_MS)


@dataclass(frozen=True)
class DailyCount:
    topic: TopicName
    date: dt.date
    count: int

    def __post_init__(self) -> None:
        if self.count < 0:
            raise ValueError(f"negative count for {self.topic} on {self.date}")


@dataclass(frozen=True)
class Baseline:
    topic: TopicName
    day_of_week: int  # 0 = Monday, matching date.weekday()
    mean: float
    std: float  # population standard deviation
    n_history: int

    @property
    def threshold(self) -> float:
        # sigma == 0 degenerates to "observed < mean" with no special case
        return self.mean - 2.0 * self.std


@dataclass(frozen=True)
class Alert:
    kind: str  # ALERT_COUNT | ALERT_COVERAGE
    subject: str  # topic name, or "vehicle_id/trip_id"
    date: dt.date
    observed: int
    severity: str
    message: str
    expected_mean: float | None = None
    expected_std: float | None = None
    window_ms: tuple[int, int] | None = None  # trip window for coverage gaps

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.kind, self.subject, self.date.isoformat())

    def to_obj(self) -> dict:
        obj = {
            "kind": self.kind,
            "subject": self.subject,
            "date": self.date.isoformat(),
            "observed": self.observed,
            "severity": self.severity,
            "message": self.message,
        }
        if self.expected_mean is not None:
            obj["expected"] = {"mean": self.expected_mean, "std": self.expected_std}
        if self.window_ms is not None:
            obj["window_ms"] = list(self.window_ms)
        return obj

    def to_payload(self) -> bytes:
        return canonical_json(self.to_obj())

    @classmethod
    def from_payload_obj(cls, obj: dict) -> "Alert":
        expected = obj.get("expected") or {}
        window = obj.get("window_ms")
        return cls(
            kind=obj["kind"],
            subject=obj["subject"],
            date=dt.date.fromisoformat(obj["date"]),
            observed=obj["observed"],
            severity=obj["severity"],
            message=obj["message"],
            expected_mean=expected.get("mean"),
            expected_std=expected.get("std"),
            window_ms=tuple(window) if window is not None else None,
        )


def dow_baseline(history: Iterable[DailyCount], dow: int, *,
                 min_history: int = MIN_HISTORY,
                 exclude: dt.date | None = None) -> Baseline:
    """Mean and population std of same-weekday counts for one topic.

    ``exclude`` drops the day under test so an anomaly cannot dilute its
    own threshold.  Raises InsufficientHistory below ``min_history``
    entries, ValueError on mixed topics or duplicate dates.
    """
    if not 0 <= dow <= 6:
        raise ValueError(f"day of week out of range: {dow}")
    counts = list(history)
    topics = {str(c.topic) for c in counts}
    if len(topics) > 1:
        raise ValueError(f"history mixes topics: {sorted(topics)}")
    dates = set()
    for c in counts:
        if c.date in dates:
            raise ValueError(f"duplicate daily count for {c.date}")
        dates.add(c.date)
    rows = [c for c in counts if c.date.weekday() == dow and c.date != exclude]
    if len(rows) < min_history:
        topic = counts[0].topic if counts else None
        raise InsufficientHistory(topic, dow, len(rows), min_history)
    values = [c.count for c in rows]
    mean = statistics.fmean(values)
    return Baseline(rows[0].topic, dow, mean, statistics.pstdev(values, mu=mean), len(rows))


def check_topic_day(topic: TopicName, date: dt.date, history: Iterable[DailyCount], *,
                    min_history: int = MIN_HISTORY) -> Alert | None:
    """Alert iff the date's count is strictly below mean - 2*std.

    ``history`` must contain the count for ``date`` itself; the baseline is
    computed from the remaining same-weekday entries.  One-sided: counts
    above the mean never alert.
    """
    counts = list(history)
    today = [c for c in counts if c.date == date]
    if not today:
        raise ValueError(f"history has no count for {topic} on {date}")
    observed = today[0].count
    base = dow_baseline(counts, date.weekday(), min_history=min_history, exclude=date)
    if observed < base.threshold:
        severity = "critical" if observed == 0 else "warning"
        return Alert(
            ALERT_COUNT, str(topic), date, observed, severity,
            f"count {observed} below {base.threshold:.2f} "
            f"(mean {base.mean:.2f}, std {base.std:.4f}, n={base.n_history})",
            expected_mean=base.mean, expected_std=base.std)
    return None


def _hms(seconds: int) -> str:
    return f"{seconds // 3600:02d}:{seconds % 3600 // 60:02d}:{seconds % 60:02d}"


@dataclass
class CoverageSummary:
    alerts: list[Alert]
    checked: int  # trips with a vehicle binding
    unbindable: int  # trips skipped for lack of one


def check_vehicle_coverage(date: dt.date, trips: Sequence[ActiveTrip],
                           telemetry_count: Callable[[str, int, int], int], *,
                           origin_ms: int | None = None) -> CoverageSummary:
    """One coverage_gap alert per bound trip with zero telemetry in-window.

    ``telemetry_count(vehicle_id, t0_ms, t1_ms)`` returns that vehicle's
    record count over [t0, t1).  Trip windows are ``origin_ms`` (midnight
    of ``date`` by default) plus the trip's start/end seconds.
    """
    if origin_ms is None:
        origin_ms = day_bounds_ms(date)[0]
    alerts: list[Alert] = []
    checked = unbindable = 0
    for trip in trips:
        if trip.vehicle_id is None:
            unbindable += 1
            continue
        checked += 1
        w0 = origin_ms + trip.start_s * 1000
        w1 = origin_ms + trip.end_s * 1000
        if telemetry_count(trip.vehicle_id, w0, w1) == 0:
            alerts.append(Alert(
                ALERT_COVERAGE, f"{trip.vehicle_id}/{trip.trip_id}", date, 0, "warning",
                f"no telemetry from {trip.vehicle_id} during trip {trip.trip_id} "
                f"({_hms(trip.start_s)}-{_hms(trip.end_s)})",
                window_ms=(w0, w1)))
    alerts.sort(key=lambda a: a.subject)
    return CoverageSummary(alerts, checked, unbindable)


class VehicleTelemetryIndex:
    """Per-vehicle record timestamps from one replay of the telemetry topics.

    Trades memory for query speed: coverage checks make one bisect pair per
    trip instead of re-scanning ledgers.
    """

    def __init__(self, broker: Broker, topics: Sequence[TopicName], cap: Capability):
        self._ts: dict[str, list[int]] = {}
        for topic in topics:
            sub = f"monitor-scan-{topic.topic}"
            cursor = broker.open_cursor(topic, "earliest", sub, cap, reset=True)
            while True:
                batch, cursor = broker.read_next(cursor, 2000)
                if not batch:
                    break
                for rec in batch:
                    try:
                        obj = parse_payload(rec.payload)
                    except ValueError:
                        continue
                    vid = obj.get("vehicle_id") if isinstance(obj, dict) else None
                    if isinstance(vid, str):
                        self._ts.setdefault(vid, []).append(rec.ts_ms)
            broker.drop_subscription(topic, sub, cap)
        for ts in self._ts.values():
            ts.sort()

    def count(self, vehicle_id: str, t0_ms: int, t1_ms: int) -> int:
        ts = self._ts.get(vehicle_id)
        if not ts:
            return 0
        return bisect.bisect_left(ts, t1_ms) - bisect.bisect_left(ts, t0_ms)


@dataclass
class MonitorConfig:
    alerts_topic: str = "carta/monitoring/alerts"
    telemetry_topics: tuple = ("carta/telemetry/viriciti-diesel",
                               "carta/telemetry/viriciti-electric",
                               "carta/telemetry/viriciti-hybrid")
    min_history: int = MIN_HISTORY
    # 28 days of lookback yields exactly min_history same-weekday entries
    lookback_days: int = 28
    report_dir: str | None = None


@dataclass
class NightlyReport:
    date: dt.date
    topics: list[dict]  # {"topic", "count", "status", "baseline"}
    coverage: dict | None  # None when no schedule was supplied
    alerts: list[Alert]
    incomplete: bool = False
    new_alerts: int = 0  # published this run; not serialized (rerun-dependent)

    def to_obj(self) -> dict:
        return {
            "date": self.date.isoformat(),
            "incomplete": self.incomplete,
            "topics": self.topics,
            "coverage": self.coverage,
            "alerts": [a.to_obj() for a in self.alerts],
        }

    def to_json(self) -> bytes:
        return canonical_json(self.to_obj())

    def render_text(self) -> str:
        by_status: dict[str, int] = {}
        for row in self.topics:
            by_status[row["status"]] = by_status.get(row["status"], 0) + 1
        lines = [f"integrity report {self.date.isoformat()}"]
        if self.incomplete:
            lines.append("WARNING: report incomplete (some checks failed to run)")
        lines.append("topics: " + ", ".join(f"{n} {s}" for s, n in sorted(by_status.items())))
        for row in self.topics:
            lines.append(f"  {row['topic']:<40} {row['count']:>10}  {row['status']}")
        if self.coverage is not None:
            c = self.coverage
            lines.append(f"coverage: {c['checked']} trips checked, "
                         f"{c['gaps']} gaps, {c['unbindable']} unbindable")
        lines.append(f"alerts: {len(self.alerts)}")
        for a in self.alerts:
            lines.append(f"  [{a.severity}] {a.kind} {a.subject}: {a.message}")
        return "\n".join(lines) + "\n"


def existing_alert_keys(broker: Broker, topic: TopicName, cap: Capability) -> set[tuple]:
    keys: set[tuple] = set()
    sub = f"monitor-scan-{topic.topic}"
    cursor = broker.open_cursor(topic, "earliest", sub, cap, reset=True)
    while True:
        batch, cursor = broker.read_next(cursor, 2000)
        if not batch:
            break
        for rec in batch:
            keys.add(Alert.from_payload_obj(parse_payload(rec.payload)).key)
    broker.drop_subscription(topic, sub, cap)
    return keys


def run_nightly(date: dt.date, broker: Broker, cap: Capability,
                schedule: GtfsSchedule | None = None, *,
                config: MonitorConfig | None = None,
                count_provider: Callable[[TopicName, int, int], int] | None = None,
                telemetry_counter: Callable[[str, int, int], int] | None = None) -> NightlyReport:
    """Count check on every tenant topic, coverage check on the schedule.

    Providers exist for tests and backfills: ``count_provider(topic, t0, t1)``
    replaces broker.count_in_range, ``telemetry_counter`` replaces the
    telemetry-topic scan.  Alerts go to the configured alerts topic with
    ts at the end of the monitored day; publication is keyed by
    (kind, subject, date), so a rerun -- including one after a partial
    failure -- publishes only what is missing.
    """
    cfg = config or MonitorConfig()
    alerts_topic = parse_topic_name(cfg.alerts_topic)
    broker.create_topic(alerts_topic, cap)
    if count_provider is None:
        count_provider = lambda t, t0, t1: broker.count_in_range(t, t0, t1, cap)

    day0, day1 = day_bounds_ms(date)
    topic_rows: list[dict] = []
    alerts: list[Alert] = []
    incomplete = False
    for topic in broker.topics():
        if topic.tenant != cap.tenant:
            continue
        try:
            history = []
            for back in range(cfg.lookback_days, -1, -1):
                d = date - dt.timedelta(days=back)
                b0, b1 = day_bounds_ms(d)
                if b0 < 0:
                    continue  # before the event-time origin; not a countable day
                history.append(DailyCount(topic, d, count_provider(topic, b0, b1)))
            observed = history[-1].count
            try:
                base = dow_baseline(history, date.weekday(),
                                    min_history=cfg.min_history, exclude=date)
            except InsufficientHistory:
                base, status = None, "unmonitorable"
            else:
                alert = check_topic_day(topic, date, history, min_history=cfg.min_history)
                status = "ok"
                if alert is not None:
                    status = "alert"
                    alerts.append(alert)
        except Exception:
            topic_rows.append({"topic": str(topic), "count": -1,
                               "status": "error", "baseline": None})
            incomplete = True
            continue
        topic_rows.append({
            "topic": str(topic),
            "count": observed,
            "status": status,
            "baseline": None if base is None else
                {"mean": base.mean, "std": base.std, "n": base.n_history},
        })

    coverage = None
    if schedule is not None:
        if telemetry_counter is None:
            scan = [parse_topic_name(s) for s in cfg.telemetry_topics]
            existing = set(broker.topics())
            telemetry_counter = VehicleTelemetryIndex(
                broker, [t for t in scan if t in existing], cap).count
        cov = check_vehicle_coverage(date, trips_active_at(schedule, date),
                                     telemetry_counter)
        alerts.extend(cov.alerts)
        coverage = {"checked": cov.checked, "unbindable": cov.unbindable,
                    "gaps": len(cov.alerts)}

    alerts.sort(key=lambda a: a.key)
    report = NightlyReport(date, topic_rows, coverage, alerts, incomplete)

    known = existing_alert_keys(broker, alerts_topic, cap)
    for a in alerts:
        if a.key in known:
            continue
        broker.publish(alerts_topic, day1, a.to_payload(), cap)
        report.new_alerts += 1
    broker.sync()

    if cfg.report_dir is not None:
        out = Path(cfg.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{date.isoformat()}.json").write_bytes(report.to_json())
        (out / f"{date.isoformat()}.txt").write_text(report.render_text(), encoding="utf-8")
    return report
