# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Joint latent action and world model training at desk scale.

A synthetic arena renders short videos of an agent moving and gripping
objects. A vector-quantized latent action model infers discrete codes from
consecutive frames, and a flow-matching world model generates the next
frames conditioned on those codes. Phases train the two alone, jointly, or
with either one frozen, while telemetry tracks whether the codebook
collapses.

Initialize the extension on a Flask application:

>>> from flask import Flask
>>> from cola_world import ColaWorld
>>> app = Flask('myapp')
>>> ext = ColaWorld(app)

All commands are available through the ``cola-world`` console script, e.g.
``cola-world --out runs gen-data`` followed by
``cola-world --out runs train pipeline=cola``.
"""

from .api import current_cola, current_experiment
from .ext import ColaWorld
from .schema import ExperimentConfig, load_config
from .version import __version__

__all__ = ('__version__', 'ColaWorld', 'ExperimentConfig', 'current_cola',
           'current_experiment', 'load_config')
