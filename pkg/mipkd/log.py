# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

import logging
import logging.handlers
import sys

LOG_FORMAT = (
    "%(asctime)s %(levelname)-5.5s [%(name)s][%(threadName)s] %(message)s"
)


def setup_logging(log_path=None, level=logging.INFO):
    """Route the package's log records to a file or to stdout.

    :param log_path: The path to the logfile. If None, stdout is used.
        Files are opened with a WatchedFileHandler, so a logrotate run
        that moves the file away makes the process reopen it.
    :param level: A logging level, either numeric or a name such as
        "DEBUG".
    :return: The installed handler.
    """
    if log_path is None:
        handler = logging.StreamHandler(sys.stdout)
    else:
        handler = logging.handlers.WatchedFileHandler(log_path)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root = logging.getLogger()
    for existing in list(root.handlers):
        if getattr(existing, "_mipkd_handler", False):
            root.removeHandler(existing)
            existing.close()
    handler._mipkd_handler = True
    root.addHandler(handler)
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    root.setLevel(level)
    return handler
