"""
Logging configuration module for LCDA.
One console handler (stderr) and one rotating file handler live on the
"lcda" logger; module loggers are its children and propagate to it.
"""

import logging
from logging.handlers import RotatingFileHandler
import sys
from config import (
    LOG_FILE,
    LOG_LEVEL,
    CONSOLE_LOG_LEVEL,
    FILE_LOG_LEVEL,
    MAX_LOG_SIZE,
    BACKUP_COUNT,
    DEBUG_MODE,
    ROOT_LOGGER_NAME,
)


def setup_logger() -> logging.Logger:
    """
    Attach the console and file handlers to the package logger.

    Safe to call repeatedly; handlers are only added the first time.

    Returns:
        The package logger
    """
    root = logging.getLogger(ROOT_LOGGER_NAME)
    if root.handlers:
        return root

    root.setLevel(LOG_LEVEL)
    # Records stop at the package logger
    root.propagate = False

    detailed_formatter = logging.Formatter(
        fmt='%(asctime)s - %(name)s - %(levelname)s - %(filename)s:%(lineno)d - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    simple_formatter = logging.Formatter(fmt='%(levelname)s - %(name)s - %(message)s')

    # stdout carries command results
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(CONSOLE_LOG_LEVEL)
    console_handler.setFormatter(detailed_formatter if DEBUG_MODE else simple_formatter)
    root.addHandler(console_handler)

    try:
        file_handler = RotatingFileHandler(
            LOG_FILE,
            maxBytes=MAX_LOG_SIZE,
            backupCount=BACKUP_COUNT,
            encoding='utf-8'
        )
        file_handler.setLevel(FILE_LOG_LEVEL)
        file_handler.setFormatter(detailed_formatter)
        root.addHandler(file_handler)
        root.debug(f"Logging initialized - Debug mode: {DEBUG_MODE}, log file: {LOG_FILE}")
    except OSError as e:
        root.error(f"Failed to create file handler: {e}")

    return root


def get_logger(name: str) -> logging.Logger:
    """
    Get the logger for a module.

    Args:
        name: Module name (typically __name__); nested under "lcda"

    Returns:
        A child of the package logger with no handlers of its own
    """
    setup_logger()
    if name == ROOT_LOGGER_NAME or name.startswith(ROOT_LOGGER_NAME + "."):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_LOGGER_NAME}.{name}")
