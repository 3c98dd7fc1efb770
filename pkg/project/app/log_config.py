from __future__ import annotations

import logging

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_configured = False


def configure_logging(level: str = "INFO") -> None:
    """Install the root stream handler once; later calls only adjust the level."""
    global _configured
    if not _configured:
        logging.basicConfig(level=level.upper(), format=LOG_FORMAT)
        _configured = True
    logging.getLogger().setLevel(level.upper())


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
