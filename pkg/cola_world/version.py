# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Version information for CoLA-World.

This file is imported by ``cola_world.__init__``,
and parsed by ``setup.py``.
"""

__version__ = '0.1.0'
