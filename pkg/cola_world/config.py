# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Default configuration.

Values are the desk-scale defaults. The experiment file read by
:func:`cola_world.schema.load_config` overrides the model, data and
schedule sections; the remaining keys configure the application itself.
"""

COLA_CONFIG_PATH = None
"""Path of the JSON experiment file (``None`` uses all defaults)."""

COLA_PRESET = None
"""Named preset the experiment file is layered on (``desk`` or ``paper``).

``None`` keeps the ``preset`` key of the experiment file, ``desk`` if absent.
"""

COLA_OUTPUT_DIR = None
"""Directory receiving datasets, checkpoints, telemetry and reports.

Defaults to the ``output_dir`` of the experiment file.
"""

COLA_SEED = None
"""Experiment seed override (``None`` keeps the experiment file seed)."""

COLA_FORCE = False
"""Recompute artifacts even when an artifact with the same digest exists."""

COLA_LOG_LEVEL = 'INFO'
"""Level of the ``cola_world`` loggers."""

COLA_LOG_EVERY = 50
"""Emit a progress log line every this many optimizer steps."""

COLA_ENV = {
    'image_size': 32,
    'episode_length': 16,
    'n_objects': 2,
    'object_shapes': [0, 1],
    'embodiment': 'CARTESIAN',
    'agent_radius': 0.08,
    'object_radius': 0.08,
    'max_step': 0.5,
    'max_magnitude': 0.75,
    'policy_step': 0.12,
    'grip_probability': 0.3,
}
"""Synthetic environment defaults (arena geometry, rendering, policy)."""

COLA_DATASETS = {
    'main': {'n_episodes': 512, 'actions_visible': False},
    'probe': {'n_episodes': 256, 'actions_visible': True},
    'downstream': {
        'n_episodes': 256,
        'actions_visible': True,
        'env': {'embodiment': 'POLAR'},
    },
    'downstream-shapes': {
        'n_episodes': 256,
        'actions_visible': True,
        'env': {'object_shapes': [2]},
    },
    'variant': {
        'n_episodes': 64,
        'actions_visible': False,
        'env': {'n_objects': 3},
    },
}
"""Datasets generated by ``gen-data``.

``main`` is the action-free training mixture, ``probe`` the action-labelled
probing set, ``downstream`` the out-of-distribution ``POLAR`` embodiment,
``downstream-shapes`` the main embodiment with the held-out diamond shape
and ``variant`` an environment variant for the report grid.
"""

COLA_SPLIT_FRACTIONS = (0.8, 0.1, 0.1)
"""Train, valid and test fractions of every dataset."""

COLA_LAM = {
    'patch_size': 4,
    'width': 128,
    'depth': 4,
    'heads': 4,
    'fdm_depth': 4,
    'num_codes': 16,
    'code_dim': 16,
    'num_tokens': 2,
    'vq_weight': 1.0,
    'commit_weight': 0.25,
    'usage_window': 50,
}
"""Latent action model defaults (IDM, quantizer, FDM)."""

COLA_WM = {
    'patch_size': 4,
    'width': 192,
    'depth': 6,
    'heads': 6,
    'action_depth': 2,
    'action_heads': 4,
    'max_frames': 8,
    'p_drop': 0.1,
    'guidance_scale': 4.0,
    'denoise_steps': 10,
}
"""World model defaults (video DiT and action conditioning)."""

COLA_PHASE_STEPS = {
    'PRETRAIN_WM': 2000,
    'TWO_STAGE_LAM': 1000,
    'TWO_STAGE_WM': 1600,
    'NAIVE_JOINT': 1600,
    'WARMUP': 400,
    'JOINT_E2E': 1600,
    'ABLATE_PURE_WARMUP': 1600,
    'ABLATE_FROZEN_LAM': 1600,
}
"""Optimizer steps per phase kind."""

COLA_TRAINING = {
    'clip_length': 4,
    'batch_size': 32,
    'lr': 3e-4,
    'lr_warmup_steps': 200,
    'betas': (0.9, 0.999),
    'weight_decay': 0.0,
    'grad_clip': 1.0,
    'crop_size': 28,
    'collapse_window': 50,
    'collapse_max_usage': 0.9,
    'abort_on_unexpected_collapse': True,
    'record_wall_time': True,
    'warmup_sweep': [100, 200, 400],
}
"""Phase schedule defaults shared by every phase."""

COLA_EVAL = {
    'probe_steps': 300,
    'probe_batch': 128,
    'probe_lr': 1e-2,
    'probe_valid_samples': 2000,
    'test_clips': 64,
    'psnr_cap': 100.0,
    'ssim_window': 7,
}
"""Evaluation defaults (probing, video metrics, report)."""

COLA_ADAPTATION = {
    'datasets': ['downstream', 'downstream-shapes'],
    'hidden': 64,
    'adapter_steps': 300,
    'adapter_batch': 64,
    'adapter_lr': 1e-3,
    'finetune_steps': 600,
    'finetune_batch': 32,
}
"""Real-action adaptation defaults."""

COLA_PLANNER = {
    'tasks': ['reach', 'push', 'hold'],
    'n_pairs': 30,
    'horizon': 4,
    'n_samples': 64,
    'n_iters': 3,
    'elite_fraction': 0.1,
    'init_std': 0.1,
    'goal_step': 0.04,
    'success_radius': 0.05,
    'reward_weight': 1.0,
    'use_classifier': False,
}
"""Model-predictive planning defaults."""

COLA_PAPER_PRESET = {
    'env': {'image_size': 224},
    'lam': {
        'input_size': 224,
        'patch_size': 14,
        'width': 768,
        'depth': 12,
        'heads': 12,
        'fdm_depth': 12,
        'num_codes': 32,
        'code_dim': 32,
        'num_tokens': 2,
    },
    'wm': {
        'input_size': 256,
        'action_depth': 6,
        'guidance_scale': 4.0,
        'denoise_steps': 10,
    },
    'training': {
        'lr': 7.5e-5,
        'batch_size': 128,
        'lr_warmup_steps': 2000,
        'steps': {
            'WARMUP': 8000,
            'JOINT_E2E': 52000,
            'TWO_STAGE_LAM': 30000,
            'TWO_STAGE_WM': 30000,
        },
    },
    'eval': {
        'probe_steps': 1000,
        'probe_batch': 512,
        'probe_valid_samples': 20000,
        'test_clips': 240,
    },
    'adaptation': {
        'adapter_steps': 1000,
        'adapter_batch': 64,
        'finetune_steps': 3000,
        'finetune_batch': 128,
    },
}
"""Full-scale values of the ``paper`` preset, documentation only (not runnable
at desk scale).
"""
