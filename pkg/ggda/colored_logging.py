"""Logging setup: level tagged, optionally colored records, routed around active tqdm progress bars."""

import logging
import sys

import tqdm

# level: (tag, ANSI SGR parameters)
LEVEL_STYLES = {
    logging.DEBUG: ("", "2"),
    logging.WARNING: ("warning: ", "33"),
    logging.ERROR: ("error: ", "31"),
    logging.CRITICAL: ("fatal: ", "1;31"),
}
VERBOSITY_LEVELS = {"warning": logging.WARNING, "normal": logging.INFO, "debug": logging.DEBUG}
NOISY_LOGGERS = ("torch", "matplotlib", "PIL")


class StageFormatter(logging.Formatter):
    """Formatter tagging warnings and errors, and coloring records by level when color is enabled."""

    def __init__(self, fmt: str = "%(message)s", color: bool = False):
        super().__init__(fmt=fmt)
        self.color = color

    def format(self, record):
        """See logging.Formatter.format."""
        tag, sgr = LEVEL_STYLES.get(record.levelno, ("", ""))
        message = f"{tag}{super().format(record)}"
        if self.color and sgr:
            message = f"\033[{sgr}m{message}\033[0m"
        return message


class TqdmHandler(logging.StreamHandler):
    """Logging handler writing through tqdm, so that messages do not garble progress bars."""

    def emit(self, record):
        """See logging.StreamHandler.emit."""
        try:
            tqdm.tqdm.write(self.format(record), file=sys.stderr)
        except Exception:
            self.handleError(record)


def setup_logging(verbosity: str) -> None:
    """Configure the root logger for command line use."""
    logger = logging.getLogger()
    logger.setLevel(VERBOSITY_LEVELS[verbosity])
    for name in NOISY_LOGGERS:
        logging.getLogger(name).setLevel(logging.ERROR)
    color = sys.stderr.isatty() and not sys.platform.startswith("win32")
    if logger.isEnabledFor(logging.DEBUG):
        logging_formatter = StageFormatter("%(threadName)s: %(message)s", color)
    else:
        logging_formatter = StageFormatter(color=color)
    for handler in [h for h in logger.handlers if isinstance(h, TqdmHandler)]:
        logger.removeHandler(handler)
    logging_handler = TqdmHandler()
    logging_handler.setFormatter(logging_formatter)
    logger.addHandler(logging_handler)
