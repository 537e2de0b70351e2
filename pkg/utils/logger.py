"""
Logger configuration for riskalloc
"""

import logging
import sys

from pythonjsonlogger import jsonlogger

PLAIN_FORMAT = '%(levelname)s: %(name)s: %(message)s'
JSON_FORMAT = '%(asctime)s %(levelname)s %(name)s %(message)s'


def setup_logging(level: str = 'INFO', json_output: bool = False) -> logging.Logger:
    """
    Attach a single stdout handler to the riskalloc logger.

    Args:
        level: logging level name
        json_output: emit one JSON object per record instead of plain lines

    Returns:
        The configured package logger.
    """
    logger = logging.getLogger('riskalloc')
    logger.setLevel(level)

    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(level)

    if json_output:
        formatter = jsonlogger.JsonFormatter(JSON_FORMAT)
    else:
        formatter = logging.Formatter(PLAIN_FORMAT)
    console_handler.setFormatter(formatter)

    logger.addHandler(console_handler)

    # Prevent log messages from being propagated to the root logger
    logger.propagate = False
    return logger
