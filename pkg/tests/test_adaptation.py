# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Real-action adaptation tests."""

import logging
import types

import numpy as np
import pytest
import torch
from helpers import activate_actions, activate_backbone

from cola_world.adaptation import Adapter, DistributionKind, GtLamPairs, \
    adapted_predict, codebook_distribution_report, extract_gt_lam, \
    finetune_wm, gt_lam_predict, lam_digest, majority_rate, train_adapter
from cola_world.checkpoints import state_digest
from cola_world.errors import ActionsHiddenError
from cola_world.evaluation import fit_probe
from cola_world.store import generate_dataset


def realizable_pairs(n, seed):
    """Pairs whose labels are a fixed function of the actions."""
    rng = np.random.default_rng(seed)
    actions = rng.uniform(-1, 1, (n, 3)).astype(np.float32)
    indices = np.stack([
        (actions[:, 0] > 0).astype(np.int64),
        (actions[:, 1] > 0) + 2 * (actions[:, 2] > 0),
    ], axis=1).astype(np.int64)
    return GtLamPairs(actions, indices)


class FixedAdapter(torch.nn.Module):
    """Adapter that always predicts the given indices."""

    def __init__(self, indices):
        """Initialize with the indices to return."""
        super().__init__()
        self.indices = indices

    def predict_indices(self, actions):
        """Return the stored indices."""
        return self.indices


def test_extract_gt_lam(lam, polar_env, tmpdir):
    """Test labeling of downstream transitions with frozen-LAM codes."""
    manifest = generate_dataset(polar_env.config, 12, seed=4,
                                root=str(tmpdir.join('downstream')))
    before = lam_digest(lam)

    pairs = extract_gt_lam(manifest, lam)

    n_train = len(manifest.split('train'))
    assert len(pairs) == n_train * 5
    assert pairs.actions.shape == (n_train * 5, 3)
    assert pairs.indices.shape == (n_train * 5, 2)
    assert pairs.indices.min() >= 0 and pairs.indices.max() < 8
    assert lam_digest(lam) == before
    np.testing.assert_allclose(pairs.actions[:5],
                               manifest.actions('train')[0], rtol=1e-6)

    with pytest.raises(ActionsHiddenError):
        extract_gt_lam(types.SimpleNamespace(actions_visible=False), lam)


def test_adapter_learns_realizable_labels():
    """Test held-out accuracy on labels the adapter can represent."""
    pairs = realizable_pairs(2000, seed=0)

    adapter, report = train_adapter(pairs, num_codes=8, hidden=32,
                                    steps=600, batch=64, lr=1e-2, seed=0)

    assert report.n_valid == 200
    assert report.n_train == 1800
    assert all(acc > 0.9 for acc in report.accuracy)
    assert all(acc > base for acc, base in
               zip(report.accuracy, report.majority_baseline))
    assert report.degenerate_heads == []
    assert not adapter.training


def test_adapter_reports_degenerate_heads(caplog):
    """Test the warning about heads trained on a single code."""
    pairs = realizable_pairs(50, seed=1)
    pairs.indices[:, 1] = 3
    with caplog.at_level(logging.WARNING, logger='cola_world.adaptation'):
        _, report = train_adapter(pairs, num_codes=8, hidden=8, steps=2,
                                  batch=4, seed=0)
    assert report.degenerate_heads == [1]
    assert 'single code' in caplog.text

    with pytest.raises(ValueError):
        train_adapter(GtLamPairs(np.zeros((0, 3)), np.zeros((0, 2))), 8)


def test_fit_restarts_agree():
    """Test that restarting the L1 fit from other seeds barely moves it."""
    rng = np.random.default_rng(3)
    features = rng.uniform(-1, 1, (2200, 3)).astype(np.float32)
    targets = features + rng.uniform(-0.3, 0.3, features.shape).astype(
        np.float32)
    losses = [fit_probe(features[:2000], targets[:2000], features[2000:],
                        targets[2000:], steps=1000, batch=64, lr=2e-2,
                        seed=seed)[0]
              for seed in range(4)]
    assert (max(losses) - min(losses)) / np.mean(losses) < 0.05
    assert np.mean(losses) == pytest.approx(0.15, abs=0.03)


def test_fits_keep_the_global_rng(tiny_config):
    """Test that seeded fits and model builds leave torch's RNG alone."""
    from cola_world.pipelines import build_models
    torch.manual_seed(123)
    state = torch.get_rng_state()

    pairs = realizable_pairs(40, seed=2)
    train_adapter(pairs, num_codes=8, hidden=4, steps=2, batch=4, seed=5)
    fit_probe(pairs.actions, pairs.actions, pairs.actions, pairs.actions,
              steps=2, batch=4, seed=5)
    first, _ = build_models(tiny_config)
    assert torch.equal(torch.get_rng_state(), state)

    torch.manual_seed(7)
    second, _ = build_models(tiny_config)
    assert state_digest(first) == state_digest(second)


def test_adapter_shapes():
    """Test logits, probabilities and the action dimension check."""
    torch.manual_seed(0)
    adapter = Adapter(3, num_tokens=2, num_codes=8, hidden=4)
    actions = torch.zeros(5, 4, 3)
    assert adapter(actions).shape == (5, 4, 2, 8)
    assert torch.allclose(adapter.probabilities(actions).sum(-1),
                          torch.ones(5, 4, 2))
    assert adapter.predict_indices(actions).shape == (5, 4, 2)
    with pytest.raises(ValueError):
        adapter(torch.zeros(5, 2))

    assert majority_rate([1, 1, 2, 3], 4) == 0.5


def test_finetune_leaves_lam_and_adapter(tiny_config, clips):
    """Test that finetuning only updates the world model."""
    from cola_world.pipelines import build_models
    torch.manual_seed(0)
    lam, wm = build_models(tiny_config)
    adapter = Adapter(3, 2, 8, hidden=4)
    lam_before, adapter_before = lam_digest(lam), state_digest(adapter)
    wm_before = state_digest(wm)

    assert finetune_wm(wm, lam, clips, tiny_config, steps=0) is wm
    assert state_digest(wm) == wm_before

    finetune_wm(wm, lam, clips, tiny_config, steps=2, batch=2,
                adapter=adapter, log_every=0)
    assert state_digest(wm) != wm_before
    assert lam_digest(lam) == lam_before
    assert state_digest(adapter) == adapter_before


def test_exact_adapter_matches_gt_lam(lam, wm, clips):
    """Test that an adapter reproducing GT-LAM indices adds no error."""
    activate_backbone(wm)
    activate_actions(wm)
    indices = lam.infer(clips).indices
    actions = np.zeros(tuple(indices.shape[:2]) + (3,), dtype=np.float32)

    adapted = adapted_predict(wm, lam, FixedAdapter(indices), actions,
                              clips[:, 0], seed=7, steps=2)
    reference = gt_lam_predict(wm, lam, clips, seed=7, steps=2)

    assert torch.equal(adapted, reference)


def test_distribution_report():
    """Test snapshots, deltas and the adapter collapse flag."""
    spread = np.arange(8).repeat(4)
    streams = {
        DistributionKind.TRAIN: spread,
        DistributionKind.GT_LAM_FINETUNE: spread[:16],
        DistributionKind.ADAPTER_INFERENCE: np.zeros(32, dtype=np.int64),
    }

    report = codebook_distribution_report(streams, num_codes=8)

    train = report['snapshots']['TRAIN']
    assert train['utilization'] == 1.0
    assert train['counts'] == [4] * 8
    assert train['distribution_kind'] == 'TRAIN'
    assert report['deltas']['TRAIN'] == {
        'utilization': 0.0, 'max_usage': 0.0, 'entropy': 0.0}
    assert report['deltas']['GT_LAM_FINETUNE']['utilization'] == -0.5
    assert report['deltas']['ADAPTER_INFERENCE']['max_usage'] == \
        pytest.approx(1.0 - 0.125)
    assert report['adapter_collapse'] is True

    streams[DistributionKind.ADAPTER_INFERENCE] = spread
    assert not codebook_distribution_report(streams, 8)['adapter_collapse']

    del streams[DistributionKind.GT_LAM_FINETUNE]
    with pytest.raises(ValueError):
        codebook_distribution_report(streams, 8)
