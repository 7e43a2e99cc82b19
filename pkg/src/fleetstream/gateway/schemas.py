"""Published JSON Schemas for every HTTP response body.

These are the contract the dashboard (or any other consumer) codes
against; the test suite validates live responses against them.  Draft-07
vocabulary.
"""

_DATE = {"type": "string", "pattern": r"^\d{4}-\d{2}-\d{2}$"}

QUERY_ECHO = {
    "type": "object",
    "required": ["from_ms", "to_ms", "group_by", "fleet", "route_id", "bbox"],
    "additionalProperties": False,
    "properties": {
        "from_ms": {"type": "integer"},
        "to_ms": {"type": "integer"},
        "group_by": {"enum": ["route", "fleet", "segment"]},
        "fleet": {"type": ["string", "null"]},
        "route_id": {"type": ["string", "null"]},
        "bbox": {
            "type": ["array", "null"],
            "items": {"type": "number"},
            "minItems": 4,
            "maxItems": 4,
        },
    },
}

AGGREGATE_ROW = {
    "type": "object",
    "required": ["key", "energy_kwh", "distance_mi", "kwh_per_mile", "sample_count"],
    "additionalProperties": False,
    "properties": {
        "key": {"type": "string"},
        "energy_kwh": {"type": "number"},
        "distance_mi": {"type": "number", "minimum": 0},
        "kwh_per_mile": {"type": ["number", "null"]},
        "sample_count": {"type": "integer", "minimum": 0},
    },
}

AGGREGATE_RESPONSE = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["query", "units", "rows"],
    "additionalProperties": False,
    "properties": {
        "query": QUERY_ECHO,
        "units": {"const": "kWh/mile"},
        "rows": {"type": "array", "items": AGGREGATE_ROW},
    },
}

SEGMENT_ROW = {
    "type": "object",
    "required": ["segment_id", "polyline", "energy_kwh", "distance_mi",
                 "kwh_per_mile", "sample_count"],
    "additionalProperties": False,
    "properties": {
        "segment_id": {"type": "string"},
        "polyline": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "array",
                "items": {"type": "number"},
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "energy_kwh": {"type": "number"},
        "distance_mi": {"type": "number", "minimum": 0},
        "kwh_per_mile": {"type": ["number", "null"]},
        "sample_count": {"type": "integer", "minimum": 0},
    },
}

SEGMENTS_RESPONSE = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["query", "units", "segments"],
    "additionalProperties": False,
    "properties": {
        "query": QUERY_ECHO,
        "units": {"const": "kWh/mile"},
        "segments": {"type": "array", "items": SEGMENT_ROW},
    },
}

ALERT = {
    "type": "object",
    "required": ["kind", "subject", "date", "observed", "severity", "message"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["count_anomaly", "coverage_gap"]},
        "subject": {"type": "string"},
        "date": _DATE,
        "observed": {"type": "integer", "minimum": 0},
        "severity": {"enum": ["warning", "critical"]},
        "message": {"type": "string"},
        "expected": {
            "type": "object",
            "required": ["mean", "std"],
            "additionalProperties": False,
            "properties": {"mean": {"type": "number"}, "std": {"type": "number"}},
        },
        "window_ms": {
            "type": "array",
            "items": {"type": "integer"},
            "minItems": 2,
            "maxItems": 2,
        },
    },
}

API_ALERT = {
    "type": "object",
    "required": ALERT["required"] + ["ts_ms", "offset"],
    "additionalProperties": False,
    "properties": {
        **ALERT["properties"],
        "ts_ms": {"type": "integer", "minimum": 0},
        "offset": {"type": "integer", "minimum": 0},
    },
}

ALERTS_RESPONSE = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["alerts", "next_cursor"],
    "additionalProperties": False,
    "properties": {
        "alerts": {"type": "array", "items": API_ALERT},
        "next_cursor": {"type": ["string", "null"], "pattern": r"^\d+:\d+$"},
    },
}

NIGHTLY_REPORT = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["date", "incomplete", "topics", "coverage", "alerts"],
    "additionalProperties": False,
    "properties": {
        "date": _DATE,
        "incomplete": {"type": "boolean"},
        "topics": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["topic", "count", "status", "baseline"],
                "additionalProperties": False,
                "properties": {
                    "topic": {"type": "string"},
                    # -1 marks a row whose count could not be computed
                    "count": {"type": "integer", "minimum": -1},
                    "status": {"enum": ["ok", "alert", "unmonitorable", "error"]},
                    "baseline": {
                        "anyOf": [
                            {"type": "null"},
                            {
                                "type": "object",
                                "required": ["mean", "std", "n"],
                                "additionalProperties": False,
                                "properties": {
                                    "mean": {"type": "number"},
                                    "std": {"type": "number", "minimum": 0},
                                    "n": {"type": "integer", "minimum": 1},
                                },
                            },
                        ]
                    },
                },
            },
        },
        "coverage": {
            "anyOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "required": ["checked", "unbindable", "gaps"],
                    "additionalProperties": False,
                    "properties": {
                        "checked": {"type": "integer", "minimum": 0},
                        "unbindable": {"type": "integer", "minimum": 0},
                        "gaps": {"type": "integer", "minimum": 0},
                    },
                },
            ]
        },
        "alerts": {"type": "array", "items": ALERT},
    },
}

TOPIC_STATS_RESPONSE = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["topics", "last_report"],
    "additionalProperties": False,
    "properties": {
        "topics": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["topic", "total_records", "first_ts_ms", "last_ts_ms"],
                "additionalProperties": False,
                "properties": {
                    "topic": {"type": "string"},
                    "total_records": {"type": "integer", "minimum": 0},
                    "first_ts_ms": {"type": ["integer", "null"]},
                    "last_ts_ms": {"type": ["integer", "null"]},
                },
            },
        },
        "last_report": {"anyOf": [{"type": "null"}, NIGHTLY_REPORT]},
    },
}

ERROR_RESPONSE = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["detail"],
    "additionalProperties": False,
    "properties": {
        "detail": {
            "type": "object",
            "required": ["errors"],
            "additionalProperties": False,
            "properties": {
                "errors": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["field", "message"],
                        "additionalProperties": False,
                        "properties": {
                            "field": {"type": ["string", "null"]},
                            "message": {"type": "string"},
                        },
                    },
                },
            },
        },
    },
}

PUBLISH_RESPONSE = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["offset"],
    "additionalProperties": False,
    "properties": {"offset": {"type": "integer", "minimum": 0}},
}

CURSOR_RESPONSE = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["subscription", "next_offset"],
    "additionalProperties": False,
    "properties": {
        "subscription": {"type": "string", "minLength": 1},
        "next_offset": {"type": "integer", "minimum": 0},
    },
}

READ_RESPONSE = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["records", "next_offset"],
    "additionalProperties": False,
    "properties": {
        "records": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["offset", "ts_ms"],
                "oneOf": [{"required": ["payload"]}, {"required": ["payload_b64"]}],
                "additionalProperties": False,
                "properties": {
                    "offset": {"type": "integer", "minimum": 0},
                    "ts_ms": {"type": "integer", "minimum": 0},
                    "payload": {},
                    "payload_b64": {"type": "string"},
                },
            },
        },
        "next_offset": {"type": "integer", "minimum": 0},
    },
}
