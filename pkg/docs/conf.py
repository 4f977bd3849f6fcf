# -*- coding: utf-8 -*-
#
# Configuration file for the Sphinx documentation builder.
#
# This file does only contain a selection of the most common options. For a
# full list see the documentation:
# http://www.sphinx-doc.org/en/master/config

# -- Path setup --------------------------------------------------------------

import os
import sys
sys.path.insert(0, os.path.abspath('../'))

from rfss import __version__  # noqa: E402

# -- Project information -----------------------------------------------------

project = 'rfss'
copyright = '2026, rfss developers'
author = 'rfss developers'

# The short X.Y version
version = '.'.join(__version__.split('.')[:2])
# The full version, including alpha/beta/rc tags
release = __version__


# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.viewcode',
    'sphinx.ext.mathjax',
]

# h5py is optional; autodoc must not fail without it
autodoc_mock_imports = ['h5py']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'
language = 'en'
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = 'sphinx'


# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'
htmlhelp_basename = 'rfssdoc'


# -- Options for LaTeX output ------------------------------------------------

latex_documents = [
    (master_doc, 'rfss.tex', 'rfss Documentation', author, 'manual'),
]


# -- Options for manual page output ------------------------------------------

man_pages = [
    (master_doc, 'rfss', 'rfss Documentation', [author], 1)
]


# -- Options for Texinfo output ----------------------------------------------

texinfo_documents = [
    (master_doc, 'rfss', 'rfss Documentation', author, 'rfss',
     'Multi-standard RF source separation corpus generator and evaluator.', 'Miscellaneous'),
]
