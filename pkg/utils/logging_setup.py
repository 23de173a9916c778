"""
Logging configuration shared by the command-line tools.
python_file: logging_setup.py
"""

import logging

from config.settings import LOG_FORMAT, LOG_LEVEL


def configure_logging(level=None):
    """
    Configure the root logger once; later calls only change the level.

    Args:
        level (str): Level name; defaults to SKYRAG_LOG_LEVEL or WARNING
    """
    level = (level or LOG_LEVEL).upper()
    root = logging.getLogger()
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
    root.setLevel(getattr(logging, level, logging.WARNING))
    return root
