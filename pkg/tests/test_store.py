# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Episode store tests."""

import os

import numpy as np
import pytest

from cola_world.errors import ActionsHiddenError, ManifestConflictError, \
    MissingArtifactError
from cola_world.store import MANIFEST_NAME, ClipSampler, DatasetManifest, \
    assign_splits, fixed_windows, generate_dataset, split_counts
from cola_world.synthenv import SyntheticEnv


def test_split_counts():
    """Splits always add up to the number of episodes."""
    assert split_counts(12, (0.8, 0.1, 0.1)) == (10, 1, 1)
    assert split_counts(1, (0.8, 0.1, 0.1)) == (1, 0, 0)
    for n in range(1, 30):
        assert sum(split_counts(n, (0.5, 0.3, 0.2))) == n


def test_assign_splits_deterministic():
    """Split labels are a function of the seed."""
    labels = assign_splits(20, (0.8, 0.1, 0.1), seed=3)
    assert labels == assign_splits(20, (0.8, 0.1, 0.1), seed=3)
    assert labels.count('train') == 16
    assert labels.count('valid') == 2
    assert labels.count('test') == 2


def test_generate_and_load(env_config, tmpdir):
    """Generated clips match the environment and the manifest."""
    root = str(tmpdir.join('data'))
    manifest = generate_dataset(env_config, 5, seed=11, root=root)
    assert os.path.exists(os.path.join(root, MANIFEST_NAME))
    loaded = DatasetManifest.load(root)
    assert loaded.data == manifest.data
    assert loaded.env_config == env_config
    assert len(loaded.entries) == 5

    entry = loaded.entries[0]
    expected = SyntheticEnv(env_config).generate_episode(entry['seed'])
    assert np.array_equal(loaded.load_clip(entry), expected.clip)
    assert loaded.load_actions(entry) == expected.actions

    clips = loaded.clips('train')
    assert clips.shape == (len(loaded.split('train')), 6, 16, 16, 3)
    actions = loaded.actions('train')
    assert actions.shape == (len(loaded.split('train')), 5, 3)


def test_generation_is_idempotent(env_config, tmpdir):
    """Re-running with the same configuration is a no-op."""
    root = str(tmpdir.join('data'))
    generate_dataset(env_config, 3, seed=1, root=root)
    path = os.path.join(root, MANIFEST_NAME)
    mtime = os.stat(path).st_mtime_ns
    with open(path, 'rb') as fp:
        before = fp.read()
    generate_dataset(env_config, 3, seed=1, root=root)
    assert os.stat(path).st_mtime_ns == mtime
    with open(path, 'rb') as fp:
        assert fp.read() == before


def test_generation_is_reproducible(env_config, tmpdir):
    """Two roots generated with the same seed hold identical bytes."""
    a = generate_dataset(env_config, 3, seed=5, root=str(tmpdir.join('a')))
    b = generate_dataset(env_config, 3, seed=5, root=str(tmpdir.join('b')))
    assert [e['digest'] for e in a.entries] == \
        [e['digest'] for e in b.entries]


def test_conflicting_config(env_config, tmpdir):
    """A different environment is refused unless forced."""
    root = str(tmpdir.join('data'))
    generate_dataset(env_config, 2, seed=1, root=root)
    other = env_config.model_copy(update={'n_objects': 3})
    with pytest.raises(ManifestConflictError):
        generate_dataset(other, 2, seed=1, root=root)
    manifest = generate_dataset(other, 2, seed=1, root=root, force=True)
    assert manifest.env_config_hash == other.digest()


def test_changed_seed_or_size(env_config, tmpdir):
    """Seed and size changes are refused; forcing removes stale shards."""
    root = str(tmpdir.join('data'))
    generate_dataset(env_config, 3, seed=1, root=root)

    with pytest.raises(ManifestConflictError) as excinfo:
        generate_dataset(env_config, 3, seed=2, root=root)
    assert 'seed' in str(excinfo.value)
    with pytest.raises(ManifestConflictError) as excinfo:
        generate_dataset(env_config, 2, seed=1, root=root)
    assert 'episode count' in str(excinfo.value)
    with pytest.raises(ManifestConflictError):
        generate_dataset(env_config, 3, seed=1, root=root,
                         actions_visible=False)

    manifest = generate_dataset(env_config, 2, seed=2, root=root, force=True)
    assert manifest.seed == 2
    assert sorted(os.listdir(root)) == sorted(
        [MANIFEST_NAME] +
        ['ep00000{0}{1}'.format(i, suffix) for i in range(2)
         for suffix in ('.f32', '.json', '.actions.json')])


def test_hidden_actions(env_config, tmpdir):
    """Action-free datasets never expose actions."""
    root = str(tmpdir.join('data'))
    manifest = generate_dataset(env_config, 2, seed=1, root=root,
                                actions_visible=False)
    assert not os.path.exists(os.path.join(root, 'ep000000.actions.json'))
    with pytest.raises(ActionsHiddenError):
        manifest.load_actions(manifest.entries[0])
    with pytest.raises(ActionsHiddenError):
        manifest.actions('train')


def test_missing_manifest(tmpdir):
    """Loading a dataset that was never generated fails."""
    with pytest.raises(MissingArtifactError):
        DatasetManifest.load(str(tmpdir))


def test_invalid_requests(env_config, tmpdir):
    """Empty datasets and unknown splits are rejected."""
    with pytest.raises(ValueError):
        generate_dataset(env_config, 0, seed=1, root=str(tmpdir))
    manifest = generate_dataset(env_config, 1, seed=1, root=str(tmpdir))
    with pytest.raises(ValueError):
        manifest.split('holdout')


def test_clip_sampler(clips):
    """Sampled windows are deterministic per seed."""
    batch = ClipSampler(clips, 4, seed=0).sample(3)
    assert tuple(batch.shape) == (3, 4, 16, 16, 3)
    assert (batch == ClipSampler(clips, 4, seed=0).sample(3)).all()
    with pytest.raises(ValueError):
        ClipSampler(clips, 7, seed=0)


def test_fixed_windows(clips):
    """Evaluation windows and their actions are aligned."""
    clips = clips.numpy()
    actions = np.arange(2 * 5 * 3, dtype=np.float32).reshape(2, 5, 3)
    windows, window_actions = fixed_windows(clips, 3, 4, seed=2,
                                            actions=actions)
    assert windows.shape == (4, 3, 16, 16, 3)
    assert window_actions.shape == (4, 2, 3)
    again, _ = fixed_windows(clips, 3, 4, seed=2)
    assert np.array_equal(windows, again)
