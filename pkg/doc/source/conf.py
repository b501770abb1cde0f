# -*- coding: utf-8 -*-
#
# pyprefsim documentation build configuration file.
#
# This file is execfile()d with the current directory set to its containing dir.

import sys
import os

# If extensions (or modules to document with autodoc) are in another directory,
# add these directories to sys.path here.
sys.path.insert(0, os.path.abspath('../../'))
from pyprefsim import __version__  # noqa

# -- General configuration -----------------------------------------------------

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.doctest', 'sphinx.ext.coverage']

templates_path = ['.templates']
source_suffix = '.rst'
master_doc = 'index'

# General information about the project.
project = u'pyprefsim'
copyright = u'2024, The Pyprefsim developers'

# The short X.Y version.
version = __version__.split('+')[0]
# The full version, including alpha/beta/rc tags.
release = __version__

exclude_patterns = []
pygments_style = 'sphinx'

# -- Options for HTML output ---------------------------------------------------

html_theme = 'default'
html_static_path = ['.static']
htmlhelp_basename = 'pyprefsimdoc'

# -- Options for LaTeX output --------------------------------------------------

latex_documents = [
    ('index', 'pyprefsim.tex', u'pyprefsim Documentation',
     u'The Pyprefsim developers', 'manual'),
]

# -- Options for manual page output --------------------------------------------

man_pages = [
    ('index', 'pyprefsim', u'pyprefsim Documentation',
     [u'The Pyprefsim developers'], 1)
]
