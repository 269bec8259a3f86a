"""
relulab.log
^^^^^^^^^^^

Logging defaults for relulab. Modules only create their own loggers below
``relulab``; handlers are installed once by :func:`setupLogging`, which the
command line tool calls at startup.
"""

import sys
import logging
from enum import Enum, unique
from typing import Any, MutableMapping, Optional, Tuple

STREAM_FORMAT = "[%(asctime)s] [%(name)s: %(levelname)s] %(message)s"
FILE_FORMAT = "%(asctime)s\t: %(name)s\t: %(levelname)s\t: %(message)s"


@unique
class LogLevels(Enum):
    error = logging.ERROR
    warn = logging.WARNING
    info = logging.INFO
    debug = logging.DEBUG


def setupLogging(addStreamHandler=True, logFile=None,
                 name='relulab',
                 streamHandlerLevel=logging.INFO,
                 captureWarnings=True):
    """Install the stream and file handlers of the package logger.

    Calling it again replaces the handlers of the previous call.

    :param logFile: if given, everything down to DEBUG is also written there.
    :param captureWarnings: route python warnings (e.g. numpy overflow in a
        diverging run) through the same handlers.
    """
    handlers = []
    if logFile is not None:
        fh = logging.FileHandler(logFile)
        fh.setFormatter(logging.Formatter(FILE_FORMAT, datefmt='%Y-%m-%d %H:%M:%S'))
        fh.setLevel(logging.DEBUG)
        handlers.append(fh)

    if addStreamHandler:
        streamHandler = logging.StreamHandler(sys.stderr)
        streamHandler.setFormatter(logging.Formatter(STREAM_FORMAT, datefmt='%m/%d %H:%M'))
        streamHandler.setLevel(streamHandlerLevel)
        handlers.append(streamHandler)

    names = [name, 'py.warnings'] if captureWarnings else [name]
    for n in names:
        lg = logging.getLogger(n)
        lg.setLevel(logging.DEBUG)
        for h in list(lg.handlers):
            lg.removeHandler(h)
            h.close()
        for h in handlers:
            lg.addHandler(h)

    if captureWarnings:
        logging.captureWarnings(True)

    logging.getLogger(name).debug(f"Logging set up for {name}.")


class RunLogAdapter(logging.LoggerAdapter):
    """Prefixes messages with the index and seed of one run among several."""

    def process(self, msg: Any, kwargs: MutableMapping[str, Any]) -> Tuple[Any, MutableMapping[str, Any]]:
        return f"[run {self.extra['run']} seed {self.extra['seed']}] {msg}", kwargs


def runLogger(logger: logging.Logger, run: int, seed: Optional[int]) -> RunLogAdapter:
    return RunLogAdapter(logger, {'run': run, 'seed': seed})


def log(logger, message, level):
    """Simple wrapper to log messages.

    Useful when the log level is a variable.
    """
    logger.log(level.value, message)
