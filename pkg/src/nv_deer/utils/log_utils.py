import logging
import sys

from rich.console import Console
from rich.logging import RichHandler

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"


def configure_logging(level: int = logging.INFO, enable_rich: bool = True) -> None:
    """
    Configure the root logger. Records go to stderr so data written to stdout stays clean.
    """
    if enable_rich:
        handler: logging.Handler = RichHandler(
            console=Console(stderr=True), rich_tracebacks=True, show_path=level <= logging.DEBUG
        )
        fmt = "%(message)s"
    else:
        handler = logging.StreamHandler(sys.stderr)
        fmt = LOG_FORMAT
    logging.basicConfig(level=level, format=fmt, handlers=[handler], force=True)


def get_logger(name: str) -> logging.Logger:
    """
    Return a named logger (after logging is configured).
    """
    return logging.getLogger(name)
