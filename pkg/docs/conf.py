# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Sphinx configuration."""

import os

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.coverage',
    'sphinx.ext.doctest',
    'sphinx.ext.intersphinx',
    'sphinx.ext.viewcode',
]

templates_path = ['_templates']

source_suffix = '.rst'

master_doc = 'index'

project = u'CoLA-World'
copyright = u'2025, CoLA-World contributors'
author = u'CoLA-World contributors'

# Get the version string. Cannot be done with import!
g = {}
with open(os.path.join(os.path.dirname(__file__), '..', 'cola_world',
                       'version.py'), 'rt') as fp:
    exec(fp.read(), g)
    version = g['__version__']

release = version

exclude_patterns = ['_build']

pygments_style = 'sphinx'

todo_include_todos = False

# -- Options for HTML output ----------------------------------------------

html_theme = 'alabaster'

html_theme_options = {
    'description': 'Joint latent action and world model training at desk '
                   'scale.',
    'show_powered_by': False,
}

html_sidebars = {
    '**': [
        'about.html',
        'navigation.html',
        'relations.html',
        'searchbox.html',
    ]
}

htmlhelp_basename = 'cola-world_namedoc'

# -- Options for LaTeX output ---------------------------------------------

latex_documents = [
    (master_doc, 'cola-world.tex', u'CoLA-World Documentation',
     author, 'manual'),
]

man_pages = [
    (master_doc, 'cola-world', u'CoLA-World Documentation', [author], 1)
]

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'torch': ('https://pytorch.org/docs/stable/', None),
}

autoclass_content = 'both'
