# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Pytest configuration."""

import os
import shutil
import tempfile

import numpy as np
import pytest
import torch
from flask import Flask

from cola_world import ColaWorld
from cola_world import config as default_config
from cola_world.lam import LatentActionModel
from cola_world.schema import EnvConfig, load_config
from cola_world.synthenv import SyntheticEnv
from cola_world.worldmodel import WorldModel

TINY_SETTINGS = dict(
    COLA_ENV=dict(default_config.COLA_ENV, image_size=16, episode_length=6),
    COLA_DATASETS={
        'main': {'n_episodes': 12, 'actions_visible': False},
        'probe': {'n_episodes': 12, 'actions_visible': True},
        'downstream': {'n_episodes': 12, 'actions_visible': True,
                       'env': {'embodiment': 'POLAR'}},
        'downstream-shapes': {'n_episodes': 12, 'actions_visible': True,
                              'env': {'object_shapes': [2]}},
        'variant': {'n_episodes': 6, 'actions_visible': False,
                    'env': {'n_objects': 3}},
    },
    COLA_LAM={
        'patch_size': 4, 'width': 16, 'depth': 1, 'heads': 2,
        'fdm_depth': 1, 'num_codes': 8, 'code_dim': 4, 'num_tokens': 2,
        'vq_weight': 1.0, 'commit_weight': 0.25, 'usage_window': 8,
    },
    COLA_WM={
        'patch_size': 4, 'width': 16, 'depth': 1, 'heads': 2,
        'action_depth': 1, 'action_heads': 2, 'max_frames': 6,
        'p_drop': 0.1, 'guidance_scale': 2.0, 'denoise_steps': 2,
    },
    COLA_PHASE_STEPS={kind: 3 for kind in default_config.COLA_PHASE_STEPS},
    COLA_TRAINING=dict(
        default_config.COLA_TRAINING, clip_length=4, batch_size=4, lr=1e-3,
        lr_warmup_steps=2, crop_size=12, collapse_window=2,
        abort_on_unexpected_collapse=False, record_wall_time=False,
        warmup_sweep=[1, 2]),
    COLA_EVAL={
        'probe_steps': 5, 'probe_batch': 8, 'probe_lr': 1e-2,
        'probe_valid_samples': 50, 'test_clips': 4, 'psnr_cap': 100.0,
        'ssim_window': 7,
    },
    COLA_ADAPTATION={
        'datasets': ['downstream', 'downstream-shapes'], 'hidden': 8,
        'adapter_steps': 5, 'adapter_batch': 8, 'adapter_lr': 1e-2,
        'finetune_steps': 2, 'finetune_batch': 4,
    },
    COLA_PLANNER=dict(
        default_config.COLA_PLANNER, tasks=['reach'], n_pairs=2, horizon=2,
        n_samples=4, n_iters=2, elite_fraction=0.5),
    COLA_LOG_EVERY=0,
)
"""Settings of a model small enough for CPU contract tests."""


@pytest.fixture()
def base_app():
    """Flask application fixture."""
    instance_path = tempfile.mkdtemp()
    base_app = Flask(__name__, instance_path=instance_path)
    base_app.config.update(
        TESTING=True,
        COLA_OUTPUT_DIR=os.path.join(instance_path, 'out'),
        **TINY_SETTINGS
    )
    yield base_app
    shutil.rmtree(instance_path)


@pytest.fixture()
def app(base_app):
    """Flask application with the extension."""
    ColaWorld(base_app)
    return base_app


@pytest.fixture()
def experiment(app):
    """Tiny validated experiment."""
    return app.extensions['cola-world'].experiment


@pytest.fixture()
def out_dir(app):
    """Artifact directory of the tiny experiment."""
    return app.extensions['cola-world'].out_dir


@pytest.fixture()
def settings():
    """Tiny ``COLA_*`` settings for :func:`load_config`."""
    merged = {k: getattr(default_config, k) for k in dir(default_config)
              if k.startswith('COLA_')}
    merged.update(TINY_SETTINGS)
    return merged


@pytest.fixture()
def tiny_config(settings):
    """Tiny experiment built without an application."""
    return load_config(settings=settings)


@pytest.fixture()
def env_config():
    """Small Cartesian environment."""
    return EnvConfig.model_validate(TINY_SETTINGS['COLA_ENV'])


@pytest.fixture()
def env(env_config):
    """Small Cartesian environment."""
    return SyntheticEnv(env_config)


@pytest.fixture()
def polar_env(env_config):
    """Small polar environment."""
    return SyntheticEnv(env_config.model_copy(update={'embodiment': 'POLAR'}))


@pytest.fixture()
def lam():
    """Width-16 latent action model on 16x16 frames."""
    torch.manual_seed(0)
    return LatentActionModel(16, patch_size=4, width=16, depth=1, heads=2,
                             fdm_depth=1, num_codes=8, code_dim=4,
                             num_tokens=2).eval()


@pytest.fixture()
def wm():
    """Width-16 world model on 16x16 frames."""
    torch.manual_seed(1)
    return WorldModel(16, patch_size=4, width=16, depth=1, heads=2,
                      action_depth=1, action_heads=2, max_frames=6,
                      num_tokens=2, code_dim=4, guidance_scale=2.0,
                      denoise_steps=2).eval()


@pytest.fixture()
def clips(env):
    """Two rendered episodes ``(2, 6, 16, 16, 3)``."""
    return torch.as_tensor(np.stack(
        [env.generate_episode(seed).clip for seed in (3, 4)]))
