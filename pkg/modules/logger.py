# modules/logger.py
"""
Centralized logger that writes logs to the 'log/' directory.
Diagnostics go to stderr so that stdout stays reserved for result tables.
"""

import os
import sys
import logging
from logging.handlers import TimedRotatingFileHandler

from constants import CONSOLE_LOG_LEVEL, LOG_DIR, LOG_FILE, LOGGER_NAME


class AppLogger:
    _instance = None
    _logger = None

    def __new__(cls, name=LOGGER_NAME):
        if cls._instance is None:
            cls._instance = super(AppLogger, cls).__new__(cls)
            cls._instance._init_logger(name)
        return cls._instance

    def _init_logger(self, name: str):
        """Initializes the logger with file and console handlers."""
        if self._logger is not None:
            return

        os.makedirs(LOG_DIR, exist_ok=True)

        self._logger = logging.getLogger(name)
        self._logger.setLevel(logging.DEBUG)

        # Avoid duplicate handlers if module is reloaded
        if self._logger.handlers:
            return

        file_formatter = logging.Formatter(
            fmt="%(asctime)s | %(levelname)-8s | %(name)s | %(funcName)s:%(lineno)d | %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S"
        )
        # stderr is read by the user next to the CSV on stdout
        console_formatter = logging.Formatter(fmt="%(levelname)s: %(message)s")

        file_handler = TimedRotatingFileHandler(
            filename=LOG_FILE,
            when="midnight",
            interval=1,
            backupCount=30,
            encoding="utf-8"
        )
        file_handler.setFormatter(file_formatter)
        file_handler.setLevel(logging.INFO)
        file_handler.suffix = "%Y-%m-%d"  # e.g., zeta.log.2026-10-19

        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(console_formatter)
        console_handler.setLevel(CONSOLE_LOG_LEVEL)

        self._logger.addHandler(file_handler)
        self._logger.addHandler(console_handler)

    def get_logger(self) -> logging.Logger:
        return self._logger

    def set_console_level(self, level: str):
        for handler in self._logger.handlers:
            if not isinstance(handler, TimedRotatingFileHandler):
                handler.setLevel(level)


def get_app_logger(name: str = LOGGER_NAME) -> logging.Logger:
    return AppLogger(name).get_logger()
