# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Binary episode store and dataset manifests.

Each episode is a flat little-endian float32 file ``<id>.f32`` with a JSON
sidecar ``<id>.json``. When actions are visible they are stored as
``<id>.actions.json``. ``manifest.json`` lists episodes and split labels and
is written last, by a single writer.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import torch

from .errors import ActionsHiddenError, ManifestConflictError, \
    MissingArtifactError
from .files import atomic_write_bytes, atomic_write_json, file_digest, \
    read_json
from .schema import EnvConfig
from .synthenv import RealAction, SyntheticEnv, counter_rng, episode_seed

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'
"""File name of the dataset manifest."""

MANIFEST_SCHEMA_VERSION = 1
"""Version of the manifest layout."""

SPLITS = ('train', 'valid', 'test')
"""Split labels, in manifest order."""


def split_counts(n_episodes, fractions):
    """Number of train, valid and test episodes.

    >>> split_counts(100, (0.8, 0.1, 0.1))
    (80, 10, 10)
    """
    n_valid = int(round(n_episodes * fractions[1]))
    n_test = int(round(n_episodes * fractions[2]))
    n_valid = min(n_valid, n_episodes)
    n_test = min(n_test, n_episodes - n_valid)
    return n_episodes - n_valid - n_test, n_valid, n_test


def assign_splits(n_episodes, fractions, seed):
    """Split label of every episode after a seeded shuffle."""
    n_train, n_valid, _ = split_counts(n_episodes, fractions)
    order = counter_rng(seed, 0).permutation(n_episodes)
    labels = [None] * n_episodes
    for rank, index in enumerate(order):
        if rank < n_train:
            labels[index] = 'train'
        elif rank < n_train + n_valid:
            labels[index] = 'valid'
        else:
            labels[index] = 'test'
    return labels


def _episode_id(index):
    return 'ep{0:06d}'.format(index)


def _generate(args):
    env_dict, seed = args
    env = SyntheticEnv(EnvConfig.model_validate(env_dict))
    return env.generate_episode(seed)


def _write_episode(root, episode_id, episode, actions_visible):
    data = np.ascontiguousarray(episode.clip, dtype='<f4').tobytes()
    path = os.path.join(root, episode_id + '.f32')
    atomic_write_bytes(path, data)
    atomic_write_json(os.path.join(root, episode_id + '.json'), {
        'shape': list(episode.clip.shape),
        'dtype': 'f32le',
        'seed': episode.seed,
        'env_config_hash': episode.env_config_hash,
    })
    if actions_visible:
        atomic_write_json(
            os.path.join(root, episode_id + '.actions.json'),
            [a.to_dict() for a in episode.actions])
    return file_digest(path)


def generate_dataset(env_config, n_episodes, seed, root,
                     actions_visible=True, fractions=(0.8, 0.1, 0.1),
                     force=False, workers=1, config_digest=None):
    """Generate a dataset into ``root`` and return its manifest.

    Re-running with the same environment digest, seed and size is a no-op.

    :param env_config: The :class:`~cola_world.schema.EnvConfig`.
    :param n_episodes: Number of episodes, at least one.
    :param seed: Dataset seed; per-episode seeds derive from it.
    :param root: Output directory.
    :param actions_visible: Store real actions next to the clips.
    :param fractions: Train, valid and test fractions.
    :param force: Regenerate even an up-to-date dataset. The episode files
        of the previous manifest are removed first.
    :param workers: Number of generator processes.
    :param config_digest: Digest of the experiment config, recorded in the
        manifest.
    :raises ManifestConflictError: If ``root`` holds a dataset generated
        with a different environment config, seed, size or action
        visibility and ``force`` is not set.
    """
    if n_episodes < 1:
        raise ValueError('n_episodes must be at least 1')
    env_hash = env_config.digest()
    manifest_path = os.path.join(root, MANIFEST_NAME)
    if os.path.exists(manifest_path):
        existing = DatasetManifest.load(root)
        changed = [name for name, old, new in (
            ('env config', existing.env_config_hash, env_hash),
            ('seed', existing.seed, seed),
            ('episode count', len(existing.entries), n_episodes),
            ('action visibility', existing.actions_visible, actions_visible),
        ) if old != new]
        if not changed and not force:
            logger.info('Dataset %s is up to date, skipping', root)
            return existing
        if changed and not force:
            raise ManifestConflictError(
                'Dataset {0} was generated with a different {1}, refusing '
                'to overwrite it'.format(root, ', '.join(changed)))
        _clear(root, existing)
    os.makedirs(root, exist_ok=True)

    seeds = [episode_seed(seed, index) for index in range(n_episodes)]
    jobs = [(env_config.model_dump(), s) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            episodes = pool.map(_generate, jobs)
            entries = _write_all(root, episodes, actions_visible)
    else:
        entries = _write_all(root, map(_generate, jobs), actions_visible)
    for entry, label in zip(entries, assign_splits(n_episodes, fractions,
                                                   seed)):
        entry['split'] = label

    manifest = DatasetManifest(root, {
        'schema_version': MANIFEST_SCHEMA_VERSION,
        'env_config': env_config.model_dump(mode='json'),
        'env_config_hash': env_hash,
        'config_digest': config_digest,
        'seed': seed,
        'actions_visible': actions_visible,
        'episodes': entries,
    })
    atomic_write_json(manifest_path, manifest.data)
    logger.info('Generated %d episodes into %s', n_episodes, root)
    return manifest


def _clear(root, manifest):
    """Remove the files of a previously generated dataset."""
    suffixes = ('.f32', '.json', '.actions.json')
    for entry in manifest.entries:
        for suffix in suffixes:
            path = os.path.join(root, entry['id'] + suffix)
            if os.path.exists(path):
                os.remove(path)
    os.remove(os.path.join(root, MANIFEST_NAME))


def _write_all(root, episodes, actions_visible):
    entries = []
    for index, episode in enumerate(episodes):
        episode_id = _episode_id(index)
        digest = _write_episode(root, episode_id, episode, actions_visible)
        entries.append({'id': episode_id, 'seed': episode.seed,
                        'digest': digest, 'length': len(episode.clip)})
    return entries


class DatasetManifest(object):
    """Read access to a generated dataset.

    Clips are always readable. Actions are readable only when the manifest
    declares them visible.
    """

    def __init__(self, root, data):
        """Initialize the manifest of the dataset stored at ``root``."""
        self.root = root
        self.data = data

    @classmethod
    def load(cls, root):
        """Load the manifest of the dataset stored at ``root``.

        :raises MissingArtifactError: If no manifest exists.
        """
        path = os.path.join(root, MANIFEST_NAME)
        if not os.path.exists(path):
            raise MissingArtifactError(
                'No dataset manifest at {0}; run gen-data first'.format(path))
        return cls(root, read_json(path))

    @property
    def entries(self):
        """Episode entries in generation order."""
        return self.data['episodes']

    @property
    def env_config_hash(self):
        """Digest of the environment that produced the episodes."""
        return self.data['env_config_hash']

    @property
    def env_config(self):
        """The :class:`~cola_world.schema.EnvConfig` of the episodes."""
        return EnvConfig.model_validate(self.data['env_config'])

    @property
    def seed(self):
        """Dataset seed."""
        return self.data['seed']

    @property
    def actions_visible(self):
        """Whether real actions may be read."""
        return self.data['actions_visible']

    def split(self, name):
        """Entries of one split."""
        if name not in SPLITS:
            raise ValueError('Unknown split {0!r}'.format(name))
        return [e for e in self.entries if e['split'] == name]

    def load_clip(self, entry):
        """Clip of one episode as a ``(T, H, W, C)`` float32 array."""
        base = os.path.join(self.root, entry['id'])
        sidecar = read_json(base + '.json')
        data = np.fromfile(base + '.f32', dtype='<f4')
        return data.reshape(sidecar['shape']).astype(np.float32)

    def load_actions(self, entry):
        """Real actions of one episode.

        :raises ActionsHiddenError: If the dataset hides its actions.
        """
        if not self.actions_visible:
            raise ActionsHiddenError(
                'Dataset {0} is action-free; actions cannot be read'.format(
                    self.root))
        path = os.path.join(self.root, entry['id'] + '.actions.json')
        return [RealAction.from_dict(a) for a in read_json(path)]

    def clips(self, split='train'):
        """Stacked clips of a split, ``(E, T, H, W, C)``."""
        entries = self.split(split)
        if not entries:
            return np.zeros((0,), dtype=np.float32)
        return np.stack([self.load_clip(e) for e in entries])

    def actions(self, split='train'):
        """Stacked action vectors of a split, ``(E, T - 1, 3)``."""
        return np.stack([
            np.stack([a.to_vector() for a in self.load_actions(e)])
            for e in self.split(split)])


class ClipSampler(object):
    """Draw random fixed-length windows from a stack of episodes.

    :param clips: Array or tensor of shape ``(E, L, H, W, C)``.
    :param clip_length: Frames per window.
    :param seed: Seed of the sampling generator.
    """

    def __init__(self, clips, clip_length, seed):
        """Initialize the sampler."""
        self.clips = torch.as_tensor(np.asarray(clips), dtype=torch.float32)
        if self.clips.ndim != 5 or len(self.clips) == 0:
            raise ValueError('ClipSampler needs a non-empty (E, L, H, W, C) '
                             'stack')
        if clip_length > self.clips.shape[1]:
            raise ValueError('clip_length exceeds episode length')
        self.clip_length = clip_length
        self.generator = torch.Generator().manual_seed(int(seed) % 2 ** 63)

    def sample(self, batch_size):
        """A ``(B, T, H, W, C)`` batch of windows."""
        n_episodes, length = self.clips.shape[:2]
        episodes = torch.randint(n_episodes, (batch_size,),
                                 generator=self.generator)
        starts = torch.randint(length - self.clip_length + 1, (batch_size,),
                               generator=self.generator)
        return torch.stack([
            self.clips[e, s:s + self.clip_length]
            for e, s in zip(episodes.tolist(), starts.tolist())])


def fixed_windows(clips, clip_length, n_windows, seed, actions=None):
    """Deterministic evaluation windows from a stack of episodes.

    :returns: ``(clips, actions)``; ``actions`` is ``None`` unless action
        vectors of shape ``(E, L - 1, A)`` are given.
    """
    clips = np.asarray(clips)
    rng = counter_rng(seed, 0)
    episodes = rng.integers(len(clips), size=n_windows)
    starts = rng.integers(clips.shape[1] - clip_length + 1, size=n_windows)
    windows = np.stack([clips[e, s:s + clip_length]
                        for e, s in zip(episodes, starts)])
    if actions is None:
        return windows, None
    return windows, np.stack([actions[e, s:s + clip_length - 1]
                              for e, s in zip(episodes, starts)])
