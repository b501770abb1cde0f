#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024 Pyprefsim developers


# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.

# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.

# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.

"""Logging helpers for the command line and for interactive sessions.

The library modules only create named loggers; handlers are installed here,
on request.
"""

import logging

LOG_FORMAT = "[%(levelname)s: %(asctime)s : %(name)s] %(message)s"
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

_console = None


def debug_on():
    """Turn debugging logging on."""
    logging_on(logging.DEBUG)


def logging_on(level=logging.WARNING):
    """Turn console logging on at *level*.

    Calling it again only changes the level, no second handler is added.
    """
    global _console

    root = logging.getLogger('')
    if _console is None:
        _console = logging.StreamHandler()
        _console.setFormatter(logging.Formatter(LOG_FORMAT, DATE_FORMAT))
        root.addHandler(_console)

    _console.setLevel(level)
    root.setLevel(level)


def logging_off():
    """Turn console logging off."""
    global _console

    root = logging.getLogger('')
    if _console is not None:
        root.removeHandler(_console)
        _console = None
    root.addHandler(logging.NullHandler())


def get_logger(name):
    """Return logger *name*, silenced unless logging was turned on."""
    log = logging.getLogger(name)
    if not log.handlers:
        log.addHandler(logging.NullHandler())
    return log
