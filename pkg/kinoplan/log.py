# kinoplan/log.py
from __future__ import annotations
import logging

_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def get_logger(name: str, level: str = "INFO") -> logging.Logger:
    """
    Return a module logger with a single stream handler.
    Safe to call repeatedly for the same name.
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    if not logger.handlers:
        ch = logging.StreamHandler()
        ch.setFormatter(logging.Formatter(_FORMAT))
        logger.addHandler(ch)
        logger.propagate = False
    return logger
