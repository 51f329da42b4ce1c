# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Real-action adaptation.

The frozen LAM labels downstream transitions with code indices (GT-LAM).
An adapter learns to predict those indices from real actions, and the world
model is finetuned on GT-LAM conditions. Predictions can then be driven
either by GT-LAM indices or by adapter outputs.
"""

import dataclasses
import enum
import logging

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from .checkpoints import state_digest
from .codebook import code_counts, stats_from_counts
from .errors import ActionsHiddenError, FreezeDriftError
from .evaluation import latent_indices
from .phases import PhaseKind
from .seeds import derive_seed, seeded_init, torch_generator
from .synthenv import ACTION_DIM
from .training import run_phase

logger = logging.getLogger(__name__)


class DistributionKind(str, enum.Enum):
    """Index streams compared by the code-distribution report."""

    TRAIN = 'TRAIN'
    GT_LAM_FINETUNE = 'GT_LAM_FINETUNE'
    ADAPTER_INFERENCE = 'ADAPTER_INFERENCE'


@dataclasses.dataclass
class GtLamPairs:
    """Real actions ``(N, A)`` paired with their GT-LAM indices ``(N, G)``."""

    actions: np.ndarray
    indices: np.ndarray

    def __len__(self):
        """Number of pairs."""
        return len(self.actions)


def extract_gt_lam(manifest, lam, split='train'):
    """Label every transition of a dataset split with frozen-LAM codes.

    :raises ActionsHiddenError: If the dataset hides its actions.
    """
    if not manifest.actions_visible:
        raise ActionsHiddenError('GT-LAM extraction needs visible actions')
    entries = manifest.split(split)
    if not entries:
        return GtLamPairs(np.zeros((0, ACTION_DIM), dtype=np.float32),
                          np.zeros((0, lam.num_tokens), dtype=np.int64))
    lam.requires_grad_(False)
    indices = latent_indices(lam, manifest.clips(split))
    actions = manifest.actions(split)
    return GtLamPairs(
        rearrange(actions, 'e n a -> (e n) a').astype(np.float32),
        rearrange(indices, 'e n g -> (e n) g').astype(np.int64))


class Adapter(nn.Module):
    """Two-layer perceptron with one ``K``-way head per latent token."""

    def __init__(self, action_dim, num_tokens, num_codes, hidden=64):
        """Initialize the adapter."""
        super().__init__()
        self.action_dim = action_dim
        self.num_tokens = num_tokens
        self.num_codes = num_codes
        self.net = nn.Sequential(
            nn.Linear(action_dim, hidden),
            nn.ReLU(),
            nn.Linear(hidden, num_tokens * num_codes),
        )

    def forward(self, actions):
        """Logits ``(..., G, K)``."""
        if actions.shape[-1] != self.action_dim:
            raise ValueError('Expected {0}-dimensional actions, got {1}'
                             .format(self.action_dim, actions.shape[-1]))
        return rearrange(self.net(actions), '... (g k) -> ... g k',
                         g=self.num_tokens)

    def probabilities(self, actions):
        """Per-head distributions over codes."""
        return F.softmax(self(actions), dim=-1)

    @torch.no_grad()
    def predict_indices(self, actions):
        """Per-head argmax, lowest index on ties."""
        return torch.argmax(self(actions), dim=-1)


@dataclasses.dataclass
class AdapterReport:
    """Held-out accuracy of a trained adapter."""

    accuracy: list
    majority_baseline: list
    degenerate_heads: list
    n_train: int
    n_valid: int

    def to_dict(self):
        """Plain dictionary form."""
        return dataclasses.asdict(self)


def _split_pairs(pairs, seed, fraction=0.1):
    order = np.random.default_rng(derive_seed(seed, 'adapter', 'split')) \
        .permutation(len(pairs))
    n_valid = max(1, int(round(fraction * len(pairs)))) \
        if len(pairs) > 1 else 0
    valid, train = order[:n_valid], order[n_valid:]
    return (GtLamPairs(pairs.actions[train], pairs.indices[train]),
            GtLamPairs(pairs.actions[valid], pairs.indices[valid]))


def majority_rate(labels, num_codes):
    """Accuracy of always predicting the most frequent label."""
    labels = np.asarray(labels).ravel()
    return float(code_counts(labels, num_codes).max()) / len(labels)


def train_adapter(pairs, num_codes, hidden=64, steps=300, batch=64, lr=1e-3,
                  seed=0, valid_pairs=None):
    """Fit an :class:`Adapter` with per-head cross-entropy.

    :param pairs: :class:`GtLamPairs` to learn from.
    :param valid_pairs: Held-out pairs; 10% of ``pairs`` by default.
    :returns: ``(adapter, AdapterReport)``.
    :raises ValueError: If ``pairs`` is empty.
    """
    if len(pairs) == 0:
        raise ValueError('Cannot train an adapter without pairs')
    if valid_pairs is None:
        pairs, valid_pairs = _split_pairs(pairs, seed)
    num_tokens = pairs.indices.shape[1]
    degenerate = [g for g in range(num_tokens)
                  if len(np.unique(pairs.indices[:, g])) < 2]
    if degenerate:
        logger.warning('Adapter labels of heads %s use a single code',
                       degenerate)
    with seeded_init(seed, 'adapter', 'init'):
        adapter = Adapter(pairs.actions.shape[1], num_tokens, num_codes,
                          hidden)
    actions = torch.as_tensor(pairs.actions, dtype=torch.float32)
    labels = torch.as_tensor(pairs.indices, dtype=torch.long)
    generator = torch_generator(seed, 'adapter', 'batches')
    optimizer = torch.optim.Adam(adapter.parameters(), lr=lr)
    for _ in range(steps):
        index = torch.randint(len(actions), (batch,), generator=generator)
        logits = adapter(actions[index])
        loss = F.cross_entropy(rearrange(logits, 'n g k -> (n g) k'),
                               labels[index].reshape(-1))
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    adapter.eval()

    accuracy, baseline = [], []
    if len(valid_pairs):
        predicted = adapter.predict_indices(
            torch.as_tensor(valid_pairs.actions, dtype=torch.float32)).numpy()
        for g in range(num_tokens):
            accuracy.append(float(
                (predicted[:, g] == valid_pairs.indices[:, g]).mean()))
            baseline.append(majority_rate(valid_pairs.indices[:, g],
                                          num_codes))
    return adapter, AdapterReport(accuracy, baseline, degenerate,
                                  len(pairs), len(valid_pairs))


def lam_digest(lam):
    """Digest of the IDM and quantizer."""
    return state_digest(lam.idm) + state_digest(lam.quantizer)


def finetune_wm(wm, lam, clips, config, steps, batch=32, seed=0,
                telemetry_path=None, adapter=None, log_every=50):
    """Finetune the world model on GT-LAM conditions of downstream clips.

    Only the backbone and the action conditioning train; the LAM (and the
    adapter, if given) must not change.

    :returns: The finetuned world model (``wm`` itself).
    :raises FreezeDriftError: If the LAM or the adapter changed.
    """
    if steps == 0:
        return wm
    before = lam_digest(lam)
    adapter_before = state_digest(adapter) if adapter is not None else None
    phase = config.phase(PhaseKind.TWO_STAGE_WM, steps=steps)
    phase = phase.model_copy(update={'batch_size': batch})
    run_phase(phase, lam, wm, clips, config, seed=seed,
              telemetry_path=telemetry_path, log_every=log_every)
    if lam_digest(lam) != before:
        raise FreezeDriftError(['idm', 'quantizer'])
    if adapter is not None and state_digest(adapter) != adapter_before:
        raise FreezeDriftError(['adapter'])
    return wm


@torch.no_grad()
def predict_from_indices(wm, lam, indices, first_frame, seed=0, steps=None,
                         guidance_scale=None):
    """Sample a clip conditioned on code indices ``(B, T - 1, G)``."""
    latents = lam.quantizer.lookup(torch.as_tensor(indices,
                                                   dtype=torch.long))
    return wm.sample(torch.as_tensor(first_frame, dtype=torch.float32),
                     latents, steps=steps, guidance_scale=guidance_scale,
                     seed=seed)


@torch.no_grad()
def gt_lam_predict(wm, lam, clip, seed=0, steps=None, guidance_scale=None):
    """Predict a clip from its first frame and its own GT-LAM indices."""
    clip = torch.as_tensor(np.asarray(clip), dtype=torch.float32)
    indices = lam.infer(clip).indices
    return predict_from_indices(wm, lam, indices, clip[:, 0], seed, steps,
                                guidance_scale)


@torch.no_grad()
def adapted_predict(wm, lam, adapter, real_actions, first_frame, seed=0,
                    steps=None, guidance_scale=None):
    """Predict a clip from real actions ``(B, T - 1, A)`` via the adapter.

    :raises ValueError: If the action dimension does not match the adapter.
    """
    actions = torch.as_tensor(np.asarray(real_actions), dtype=torch.float32)
    indices = adapter.predict_indices(actions)
    return predict_from_indices(wm, lam, indices, first_frame, seed, steps,
                                guidance_scale)


@dataclasses.dataclass
class CodeDistributionSnapshot:
    """Code counts of one index stream and their metrics."""

    distribution_kind: DistributionKind
    counts: list
    utilization: float
    max_usage: float
    entropy: float

    @classmethod
    def from_indices(cls, kind, indices, num_codes):
        """Build a snapshot of an index stream.

        :raises ValueError: If the stream is empty.
        """
        counts = code_counts(indices, num_codes)
        stats = stats_from_counts(counts)
        return cls(DistributionKind(kind), counts.tolist(),
                   stats.utilization, stats.max_usage, stats.entropy)

    def metrics(self):
        """Utilization, max usage and entropy."""
        return {'utilization': self.utilization,
                'max_usage': self.max_usage, 'entropy': self.entropy}


def codebook_distribution_report(streams, num_codes, max_usage=0.9,
                                 utilization_floor=None):
    """Compare the code distributions of training and adaptation streams.

    :param streams: ``{DistributionKind: index array}`` for all three kinds.
    :returns: Report dictionary with snapshots, deltas against ``TRAIN`` and
        the adapter-mode collapse flag.
    """
    floor = 2.0 / num_codes if utilization_floor is None \
        else utilization_floor
    snapshots = {
        DistributionKind(kind): CodeDistributionSnapshot.from_indices(
            kind, indices, num_codes)
        for kind, indices in streams.items()}
    missing = set(DistributionKind) - set(snapshots)
    if missing:
        raise ValueError('Missing index streams: {0}'.format(
            ', '.join(sorted(k.value for k in missing))))
    train = snapshots[DistributionKind.TRAIN].metrics()
    adapter = snapshots[DistributionKind.ADAPTER_INFERENCE]
    return {
        'snapshots': {kind.value: dataclasses.asdict(s) | {
            'distribution_kind': kind.value}
            for kind, s in snapshots.items()},
        'deltas': {
            kind.value: {m: s.metrics()[m] - train[m] for m in train}
            for kind, s in snapshots.items()},
        'adapter_collapse': bool(adapter.max_usage >= max_usage or
                                 adapter.utilization <= floor),
    }
