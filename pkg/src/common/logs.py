"""
Logging setup for the command-line harness. Library modules only create module loggers.
"""

import logging
import os

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"


def configure_logging(level: str = "INFO", log_file: str = None) -> None:
    """
    Installs a console handler and, optionally, a file handler on the root logger.

    Args:
        level (str): Level name such as 'DEBUG' or 'INFO'. Unknown names fall back to INFO.
        log_file (str, optional): Path of a log file to write in addition to the console.
    """
    log_level = getattr(logging, str(level).upper(), logging.INFO)
    if not isinstance(log_level, int):
        log_level = logging.INFO

    handlers = [logging.StreamHandler()]
    if log_file:
        directory = os.path.dirname(log_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, mode="w"))

    logging.basicConfig(
        level=log_level,
        format=LOG_FORMAT,
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=handlers,
        force=True,
    )
