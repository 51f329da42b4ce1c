# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""API tests."""

import json

import pytest

from cola_world import current_cola, current_experiment
from cola_world.errors import ConfigError


def test_current_experiment(app):
    """Test the proxies inside an application context."""
    with app.app_context():
        assert current_cola.app is app
        assert current_experiment.seed == 0
        assert current_experiment.digest() == \
            app.extensions['cola-world'].experiment.digest()


def test_experiment_file(app, tmpdir):
    """Test that the experiment file is read lazily."""
    path = tmpdir.join('experiment.json')
    path.write(json.dumps({'seed': 2, 'eval': {'test_clips': 6}}))
    app.config['COLA_CONFIG_PATH'] = str(path)
    with app.app_context():
        assert current_experiment.seed == 2
        assert current_experiment.eval.test_clips == 6


def test_broken_experiment_file(app, tmpdir):
    """Test that a broken file only fails on access."""
    path = tmpdir.join('experiment.json')
    path.write(json.dumps({'wm': {'guidance': 4.0}}))
    app.config['COLA_CONFIG_PATH'] = str(path)
    with app.app_context():
        with pytest.raises(ConfigError) as excinfo:
            current_experiment.seed
    assert excinfo.value.fields == ['wm.guidance']
