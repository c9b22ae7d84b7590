# Sphinx configuration of the leadkd documentation.

import os
import sys
sys.path.insert(0, os.path.abspath('../..'))

master_doc = 'index'

project = 'leadkd'
copyright = '2026, The leadkd developers'
author = 'The leadkd developers'
release = '0.1.0'

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.coverage', 'sphinx.ext.napoleon', 'sphinx.ext.mathjax']

# numpy-style docstrings only
napoleon_google_docstring = False
autodoc_member_order = 'bysource'

templates_path = ['_templates']
exclude_patterns = []

html_theme = 'alabaster'
html_static_path = ['_static']
