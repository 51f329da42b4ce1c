# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Flask extension carrying the experiment configuration."""

import logging
import os

from flask.logging import default_handler

from . import config
from .schema import load_config


class _ColaWorldState(object):
    """Experiment state bound to one application."""

    def __init__(self, app):
        """Initialize state."""
        self.app = app
        self._experiment = None

    @property
    def experiment(self):
        """Validated :class:`~cola_world.schema.ExperimentConfig`.

        Loaded lazily from ``COLA_CONFIG_PATH`` so a broken file surfaces
        as a :class:`~cola_world.errors.ConfigError` inside a command.
        """
        if self._experiment is None:
            overrides = {}
            if self.app.config['COLA_SEED'] is not None:
                overrides['seed'] = self.app.config['COLA_SEED']
            if self.app.config['COLA_OUTPUT_DIR'] is not None:
                overrides['output_dir'] = self.app.config['COLA_OUTPUT_DIR']
            self._experiment = load_config(
                self.app.config['COLA_CONFIG_PATH'],
                preset=self.app.config['COLA_PRESET'],
                overrides=overrides, settings=self.app.config)
        return self._experiment

    def reset(self):
        """Forget the loaded experiment after a configuration change."""
        self._experiment = None

    @property
    def out_dir(self):
        """Root directory of every artifact."""
        return os.path.abspath(self.experiment.output_dir)

    @property
    def force(self):
        """Whether existing artifacts are recomputed."""
        return bool(self.app.config['COLA_FORCE'])

    @property
    def log_every(self):
        """Progress logging interval in optimizer steps."""
        return self.app.config['COLA_LOG_EVERY']


class ColaWorld(object):
    """CoLA-World extension."""

    def __init__(self, app=None):
        """Extension initialization."""
        if app:
            self.init_app(app)

    def init_app(self, app):
        """Flask application initialization."""
        self.init_config(app)
        self.init_logging(app)
        state = _ColaWorldState(app)
        app.extensions['cola-world'] = state
        return state

    def init_config(self, app):
        """Initialize configuration."""
        for k in dir(config):
            if k.startswith('COLA_'):
                app.config.setdefault(k, getattr(config, k))

    def init_logging(self, app):
        """Route the package loggers through the application handler."""
        logger = logging.getLogger('cola_world')
        logger.setLevel(app.config['COLA_LOG_LEVEL'])
        if default_handler not in logger.handlers:
            logger.addHandler(default_handler)
