from .api import (
    ApiQuery,
    GatewayState,
    QueryError,
    aggregate_response,
    alerts_response,
    create_app,
    segments_response,
    stats_response,
)

__all__ = [
    "ApiQuery",
    "GatewayState",
    "QueryError",
    "aggregate_response",
    "alerts_response",
    "create_app",
    "segments_response",
    "stats_response",
]
