# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Proxies to the experiment of the current application."""

from flask import current_app
from werkzeug.local import LocalProxy

current_cola = LocalProxy(lambda: current_app.extensions['cola-world'])
"""Proxy to the CoLA-World state of the current application."""

current_experiment = LocalProxy(lambda: current_cola.experiment)
"""Proxy to the validated experiment configuration."""
