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

"""Preference-optimization laboratory on tabular softmax recommenders."""

import numpy as np

from .version import __version__  # noqa


def child_rng(seed_seq, *key):
    """Return a generator for the child stream *key* of *seed_seq*.

    *seed_seq* is a :class:`numpy.random.SeedSequence` or an integer seed.
    Streams with different keys are statistically independent and the same
    key always gives the same stream.
    """
    if not isinstance(seed_seq, np.random.SeedSequence):
        seed_seq = np.random.SeedSequence(seed_seq)
    child = np.random.SeedSequence(seed_seq.entropy,
                                   spawn_key=tuple(seed_seq.spawn_key) + tuple(key))
    return np.random.default_rng(child)
