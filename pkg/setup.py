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

"""Setup for pyprefsim."""

import os
from setuptools import setup, find_packages

try:
    with open('./README.md', 'r') as fd:
        long_description = fd.read()
except IOError:
    long_description = ''

version = {}
with open(os.path.join('pyprefsim', 'version.py')) as fd:
    exec(fd.read(), version)


setup(name='pyprefsim',
      version=version['__version__'],
      description='Preference-optimization simulations on tabular softmax recommenders',
      author='The Pyprefsim developers',
      classifiers=["Development Status :: 3 - Alpha",
                   "Intended Audience :: Science/Research",
                   "License :: OSI Approved :: GNU General Public License v3 " +
                   "or later (GPLv3+)",
                   "Operating System :: OS Independent",
                   "Programming Language :: Python",
                   "Topic :: Scientific/Engineering",
                   "Topic :: Scientific/Engineering :: Artificial Intelligence"],
      long_description=long_description,
      long_description_content_type='text/markdown',
      packages=find_packages(),
      package_data={'pyprefsim': [os.path.join('etc', 'presets.yaml')]},
      scripts=['bin/prefsim.py', ],
      install_requires=['numpy>=1.19.0', 'scipy>=1.8', 'pyyaml'],
      extras_require={'test': ['pytest', 'pytest-cov']},
      python_requires='>=3.8',
      zip_safe=False,
      )
