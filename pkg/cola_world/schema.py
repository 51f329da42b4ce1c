# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Experiment configuration schema and loader."""

import copy
import hashlib
import json
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, \
    field_validator, model_validator

from . import config as default_config
from .errors import ConfigError
from .phases import PhaseKind, freeze_mask

PRESETS = ('desk', 'paper')
"""Known configuration presets."""


def canonical_digest(obj):
    """SHA-256 of the canonical JSON form of ``obj``."""
    payload = json.dumps(obj, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()


class _Section(BaseModel):
    """Base of all configuration sections: unknown keys are rejected."""

    model_config = ConfigDict(extra='forbid', use_enum_values=False)


class EnvConfig(_Section):
    """Synthetic environment parameters."""

    image_size: int = Field(ge=4)
    episode_length: int = Field(ge=2)
    n_objects: int = Field(ge=0, le=8)
    object_shapes: List[int] = Field(min_length=1)
    embodiment: Literal['CARTESIAN', 'POLAR']
    agent_radius: float = Field(gt=0.0, le=0.5)
    object_radius: float = Field(gt=0.0, le=0.5)
    max_step: float = Field(gt=0.0)
    max_magnitude: float = Field(gt=0.0)
    policy_step: float = Field(gt=0.0)
    grip_probability: float = Field(ge=0.0, le=1.0)

    @field_validator('object_shapes')
    @classmethod
    def _known_shapes(cls, value):
        if any(shape not in (0, 1, 2) for shape in value):
            raise ValueError('shape ids must be 0 (disc), 1 (square) or '
                             '2 (diamond)')
        return value

    @model_validator(mode='after')
    def _policy_within_bounds(self):
        if self.policy_step > self.max_step:
            raise ValueError('policy_step must not exceed max_step')
        return self

    def digest(self):
        """Digest identifying episodes generated with this environment."""
        return canonical_digest(self.model_dump(mode='json'))


class EnvOverrides(_Section):
    """Per-dataset changes to the base environment."""

    image_size: Optional[int] = None
    episode_length: Optional[int] = None
    n_objects: Optional[int] = None
    object_shapes: Optional[List[int]] = None
    embodiment: Optional[Literal['CARTESIAN', 'POLAR']] = None
    agent_radius: Optional[float] = None
    object_radius: Optional[float] = None
    max_step: Optional[float] = None
    max_magnitude: Optional[float] = None
    policy_step: Optional[float] = None
    grip_probability: Optional[float] = None


class DatasetConfig(_Section):
    """A generated dataset."""

    n_episodes: int = Field(ge=1)
    actions_visible: bool = True
    env: EnvOverrides = Field(default_factory=EnvOverrides)


class LamConfig(_Section):
    """Latent action model architecture and loss weights."""

    patch_size: int = Field(ge=1)
    width: int = Field(ge=1)
    depth: int = Field(ge=1)
    heads: int = Field(ge=1)
    fdm_depth: int = Field(ge=1)
    num_codes: int = Field(ge=2)
    code_dim: int = Field(ge=1)
    num_tokens: int = Field(ge=1)
    vq_weight: float = Field(ge=0.0)
    commit_weight: float = Field(ge=0.0)
    usage_window: int = Field(ge=1)
    input_size: Optional[int] = None

    @model_validator(mode='after')
    def _heads_divide_width(self):
        if self.width % self.heads:
            raise ValueError('width must be divisible by heads')
        return self


class WorldModelConfig(_Section):
    """World model architecture and sampling defaults."""

    patch_size: int = Field(ge=1)
    width: int = Field(ge=1)
    depth: int = Field(ge=1)
    heads: int = Field(ge=1)
    action_depth: int = Field(ge=1)
    action_heads: int = Field(ge=1)
    max_frames: int = Field(ge=2)
    p_drop: float = Field(ge=0.0, lt=1.0)
    guidance_scale: float
    denoise_steps: int = Field(ge=1)
    input_size: Optional[int] = None

    @model_validator(mode='after')
    def _heads_divide_width(self):
        if self.width % self.heads or self.width % self.action_heads:
            raise ValueError('width must be divisible by heads and '
                             'action_heads')
        return self


class PhaseConfig(_Section):
    """A named training regime."""

    phase_kind: PhaseKind
    steps: int = Field(ge=1)
    batch_size: int = Field(ge=1)
    lr: float = Field(gt=0.0)
    lr_warmup_steps: int = Field(ge=0)
    augment_random_crop: bool
    init_from: Dict[str, str] = Field(default_factory=dict)

    @model_validator(mode='after')
    def _crop_iff_lam_trains(self):
        if self.augment_random_crop != freeze_mask(self.phase_kind).trains_lam:
            raise ValueError(
                'augment_random_crop must be enabled exactly when the LAM '
                'is trainable')
        return self

    @property
    def mask(self):
        """Trainable parameter groups of this phase."""
        return freeze_mask(self.phase_kind)


class TrainingConfig(_Section):
    """Schedule defaults shared by all phases."""

    clip_length: int = Field(ge=2)
    batch_size: int = Field(ge=1)
    lr: float = Field(gt=0.0)
    lr_warmup_steps: int = Field(ge=0)
    betas: Tuple[float, float]
    weight_decay: float = Field(ge=0.0)
    grad_clip: float = Field(gt=0.0)
    crop_size: int = Field(ge=1)
    collapse_window: int = Field(ge=1)
    collapse_max_usage: float = Field(gt=0.0, le=1.0)
    collapse_utilization: Optional[float] = None
    abort_on_unexpected_collapse: bool
    record_wall_time: bool
    warmup_sweep: List[int]
    steps: Dict[PhaseKind, int]

    @field_validator('steps')
    @classmethod
    def _positive_steps(cls, value):
        for kind, steps in value.items():
            if steps < 1:
                raise ValueError('{0} needs at least one step'.format(
                    kind.value))
        return value


class EvalConfig(_Section):
    """Probing, video metrics and report settings."""

    probe_steps: int = Field(ge=1)
    probe_batch: int = Field(ge=1)
    probe_lr: float = Field(gt=0.0)
    probe_valid_samples: int = Field(ge=1)
    test_clips: int = Field(ge=1)
    psnr_cap: float = Field(gt=0.0)
    ssim_window: int = Field(ge=1)


class AdaptationConfig(_Section):
    """Adapter and world-model finetuning settings."""

    datasets: List[str] = Field(min_length=1)
    hidden: int = Field(ge=1)
    adapter_steps: int = Field(ge=0)
    adapter_batch: int = Field(ge=1)
    adapter_lr: float = Field(gt=0.0)
    finetune_steps: int = Field(ge=0)
    finetune_batch: int = Field(ge=1)


class PlannerConfig(_Section):
    """Cross-entropy-method planning settings."""

    tasks: List[Literal['reach', 'push', 'hold']]
    n_pairs: int = Field(ge=1)
    horizon: int = Field(ge=1)
    n_samples: int = Field(ge=2)
    n_iters: int = Field(ge=1)
    elite_fraction: float = Field(gt=0.0, le=1.0)
    init_std: float = Field(gt=0.0)
    goal_step: float = Field(gt=0.0)
    success_radius: float = Field(gt=0.0)
    reward_weight: float
    use_classifier: bool


class ExperimentConfig(_Section):
    """Complete, validated experiment description."""

    preset: Literal['desk', 'paper']
    seed: int = Field(ge=0, lt=2 ** 63)
    output_dir: str
    split_fractions: Tuple[float, float, float]
    env: EnvConfig
    datasets: Dict[str, DatasetConfig]
    lam: LamConfig
    wm: WorldModelConfig
    training: TrainingConfig
    eval: EvalConfig
    adaptation: AdaptationConfig
    planner: PlannerConfig
    pipelines: List[str]

    @field_validator('split_fractions')
    @classmethod
    def _fractions_sum_to_one(cls, value):
        if any(f < 0 for f in value) or abs(sum(value) - 1.0) > 1e-6:
            raise ValueError('split fractions must be non-negative and sum '
                             'to 1')
        return value

    @model_validator(mode='after')
    def _datasets_resolve(self):
        for name in self.datasets:
            try:
                self.resolved_env(name)
            except ValidationError as e:
                raise ValueError('datasets.{0}.env: {1}'.format(
                    name, e.errors()[0]['msg']))
        return self

    def check_references(self):
        """Validate names that point into other sections.

        :raises ConfigError: If an adaptation dataset is not configured or
            hides its actions.
        """
        for name in self.adaptation.datasets:
            dataset = self.datasets.get(name)
            if dataset is None or not dataset.actions_visible:
                raise ConfigError(
                    'adaptation.datasets: {0!r} is not a configured dataset '
                    'with visible actions'.format(name),
                    fields=['adaptation.datasets'])

    def resolved_env(self, name):
        """Environment of dataset ``name`` with its overrides applied."""
        overrides = self.datasets[name].env.model_dump(exclude_none=True)
        merged = dict(self.env.model_dump(), **overrides)
        return EnvConfig.model_validate(merged)

    def digest(self):
        """Digest stamped on every artifact produced from this config."""
        return canonical_digest(self.model_dump(mode='json'))

    def model_hash(self):
        """Digest of everything that shapes model parameters."""
        return canonical_digest({
            'image_size': self.env.image_size,
            'lam': self.lam.model_dump(mode='json'),
            'wm': self.wm.model_dump(mode='json'),
        })

    def training_digest(self, dataset='main'):
        """Digest of everything that shapes a trained checkpoint."""
        return canonical_digest({
            'model': self.model_hash(),
            'seed': self.seed,
            'env': self.resolved_env(dataset).model_dump(mode='json'),
            'dataset': self.datasets[dataset].model_dump(mode='json'),
            'split_fractions': list(self.split_fractions),
            'training': self.training.model_dump(mode='json'),
        })

    @property
    def codebook_utilization_floor(self):
        """Utilization at or below which the codebook counts as collapsed."""
        if self.training.collapse_utilization is not None:
            return self.training.collapse_utilization
        return 2.0 / self.lam.num_codes

    def phase(self, phase_kind, steps=None, init_from=None):
        """Build the :class:`PhaseConfig` of a phase kind."""
        kind = PhaseKind(phase_kind)
        return PhaseConfig(
            phase_kind=kind,
            steps=steps or self.training.steps[kind],
            batch_size=self.training.batch_size,
            lr=self.training.lr,
            lr_warmup_steps=self.training.lr_warmup_steps,
            augment_random_crop=freeze_mask(kind).trains_lam,
            init_from=dict(init_from or {}),
        )

    def ensure_runnable(self):
        """Refuse to execute configurations that only document a scale.

        :raises ConfigError: If the model input sizes differ from the
            rendered frame size.
        """
        for section in ('lam', 'wm'):
            size = getattr(self, section).input_size
            if size is not None and size != self.env.image_size:
                raise ConfigError(
                    '{0}.input_size={1} does not match env.image_size={2}; '
                    'the {3} preset is not runnable'.format(
                        section, size, self.env.image_size, self.preset),
                    fields=['{0}.input_size'.format(section)])
        image = self.env.image_size
        for section in ('lam', 'wm'):
            if image % getattr(self, section).patch_size:
                raise ConfigError(
                    'env.image_size must be divisible by '
                    '{0}.patch_size'.format(section),
                    fields=['{0}.patch_size'.format(section)])
        if self.training.clip_length > self.wm.max_frames:
            raise ConfigError(
                'training.clip_length exceeds wm.max_frames',
                fields=['training.clip_length'])


DEFAULT_PIPELINES = [
    'two-stage', 'naive-joint', 'cola', 'ablate-pure-warmup',
    'ablate-frozen-lam',
]
"""Pipelines compared by ``report`` unless configured otherwise."""


def default_dict(settings=None):
    """Build the default experiment dictionary from ``COLA_*`` settings.

    :param settings: Mapping of configuration keys, typically the Flask
        ``app.config``; defaults to :mod:`cola_world.config`.
    """
    if settings is None:
        settings = {k: getattr(default_config, k)
                    for k in dir(default_config) if k.startswith('COLA_')}
    training = dict(settings['COLA_TRAINING'])
    training['steps'] = dict(settings['COLA_PHASE_STEPS'])
    return copy.deepcopy({
        'preset': 'desk',
        'seed': 0,
        'output_dir': 'cola-runs',
        'split_fractions': list(settings['COLA_SPLIT_FRACTIONS']),
        'env': settings['COLA_ENV'],
        'datasets': settings['COLA_DATASETS'],
        'lam': settings['COLA_LAM'],
        'wm': settings['COLA_WM'],
        'training': training,
        'eval': settings['COLA_EVAL'],
        'adaptation': settings['COLA_ADAPTATION'],
        'planner': settings['COLA_PLANNER'],
        'pipelines': list(DEFAULT_PIPELINES),
    })


def deep_merge(base, update):
    """Recursively merge mapping ``update`` into a copy of ``base``."""
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _read_json(path):
    if path is None:
        return {}
    try:
        with open(path, 'rt') as fp:
            text = fp.read()
    except OSError as e:
        raise ConfigError('Cannot read config file {0}: {1}'.format(path, e))
    if not text.strip():
        return {}
    try:
        data = json.loads(text)
    except ValueError as e:
        raise ConfigError('Config file {0} is not valid JSON: {1}'.format(
            path, e))
    if not isinstance(data, dict):
        raise ConfigError('Config file must contain a JSON object')
    return data


def load_config(path=None, preset=None, overrides=None, settings=None):
    """Parse, default and validate an experiment file.

    :param path: JSON file; ``None`` or an empty file selects all defaults.
    :param preset: Preset name; overrides the ``preset`` key of the file.
    :param overrides: Mapping merged on top of the file (e.g. CLI flags).
    :param settings: ``COLA_*`` defaults, see :func:`default_dict`.
    :returns: An :class:`ExperimentConfig`.
    :raises ConfigError: On unknown keys, type mismatches or invalid values.
        The error lists the dotted path of every offending field.
    """
    data = _read_json(path)
    preset = preset or data.get('preset') or 'desk'
    if preset not in PRESETS:
        raise ConfigError('Unknown preset {0!r}'.format(preset),
                          fields=['preset'])
    merged = default_dict(settings)
    if preset == 'paper':
        scale = (settings or {}).get(
            'COLA_PAPER_PRESET', default_config.COLA_PAPER_PRESET)
        merged = deep_merge(merged, scale)
    merged = deep_merge(merged, data)
    merged['preset'] = preset
    merged = deep_merge(merged, overrides or {})
    try:
        config = ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        fields, messages = [], []
        for error in e.errors():
            field = '.'.join(str(part) for part in error['loc'])
            fields.append(field)
            messages.append('{0}: {1}'.format(field, error['msg']))
        raise ConfigError('; '.join(messages), fields=fields)
    config.check_references()
    return config
