"""
Logging setup - structlog configuration for the command line and tests
"""

import logging
import os
import sys
from typing import Optional

import structlog


def configure_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> None:
    """
    Configure structlog once for the whole process

    Args:
        level: Log level name; defaults to $TRAJPOSE_LOG_LEVEL or "info"
        fmt: "console" or "json"; defaults to $TRAJPOSE_LOG_FORMAT or "console"
    """
    level_name = (level or os.getenv("TRAJPOSE_LOG_LEVEL", "info")).upper()
    fmt = fmt or os.getenv("TRAJPOSE_LOG_FORMAT", "console")

    numeric_level = getattr(logging, level_name, None)
    if not isinstance(numeric_level, int):
        numeric_level = logging.INFO

    renderer = (
        structlog.processors.JSONRenderer(sort_keys=True)
        if fmt == "json"
        else structlog.dev.ConsoleRenderer(colors=False)
    )

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(numeric_level),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )
