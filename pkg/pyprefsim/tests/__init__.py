#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (c) 2024 Pyprefsim developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.

"""The tests package."""

import unittest

from pyprefsim.tests import test_catalog, test_metrics, test_policy, test_theory


def suite():
    """The unittest part of the test suite; run pytest for everything."""
    mysuite = unittest.TestSuite()
    loader = unittest.defaultTestLoader
    for module in (test_catalog, test_policy, test_theory, test_metrics):
        mysuite.addTests(loader.loadTestsFromModule(module))
    return mysuite


if __name__ == '__main__':
    unittest.TextTestRunner(verbosity=2).run(suite())
