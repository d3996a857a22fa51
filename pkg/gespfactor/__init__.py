"""gespfactor: coloring and whitening of discretized generalized stochastic processes."""

import logging
import sys

from gespfactor.version import APP_DISPLAY_VERSION, APP_NAME, APP_VERSION

__all__ = ["APP_NAME", "APP_VERSION", "APP_DISPLAY_VERSION", "configure_logging"]

LOG_FORMAT = "[%(name)s] %(message)s"


def configure_logging(verbose: bool = False) -> logging.Logger:
    """Attach one stderr handler to the package logger.

    stdout is reserved for machine-readable JSON, so every log line goes to
    stderr. Calling this twice does not stack handlers.
    """
    logger = logging.getLogger(APP_NAME)
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    ours = [h for h in logger.handlers if getattr(h, "_gespfactor", False)]
    if ours:
        ours[0].stream = sys.stderr
    else:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._gespfactor = True
        logger.addHandler(handler)
    logger.propagate = False
    return logger
