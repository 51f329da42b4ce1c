# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Latent action probing, video metrics, action transfer and reports."""

import dataclasses
import logging
import math
import os

import numpy as np
import torch
import torch.nn as nn
from einops import rearrange
from numpy.lib.stride_tricks import sliding_window_view

from .checkpoints import read_header
from .codebook import entropy_bound
from .errors import ActionsHiddenError, ConfigError, \
    IncompatibleArtifactError
from .files import atomic_write_json
from .plots import plot_codebook_curves, plot_method_comparison
from .seeds import derive_seed, seeded_init, torch_generator
from .store import fixed_windows
from .synthenv import agent_centroid
from .telemetry import read_telemetry
from .training import collapse_detector
from .validators import validate_same_shape

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
"""Version of the comparison report layout."""

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def psnr(pred, gt, cap=100.0):
    """Peak signal-to-noise ratio in dB of clips in ``[0, 1]``.

    >>> psnr(np.zeros((2, 2)), np.ones((2, 2)))
    0.0

    :raises ValueError: On a shape mismatch.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    validate_same_shape(pred, gt)
    mse = float(np.mean((pred - gt) ** 2))
    if mse == 0.0:
        return float(cap)
    return float(min(cap, 10.0 * math.log10(1.0 / mse)))


def ssim(pred, gt, window=7):
    """Structural similarity of two ``(H, W, C)`` frames.

    Statistics are population moments over ``window x window`` uniform
    windows; the result is the mean over windows and channels.

    :raises ValueError: On a shape mismatch or frames smaller than the window.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    validate_same_shape(pred, gt)
    if pred.ndim == 2:
        pred, gt = pred[..., None], gt[..., None]
    if pred.shape[0] < window or pred.shape[1] < window:
        raise ValueError('Frame of {0}x{1} is smaller than the {2}x{2} SSIM '
                         'window'.format(pred.shape[0], pred.shape[1], window))
    x = sliding_window_view(pred, (window, window), axis=(0, 1))
    y = sliding_window_view(gt, (window, window), axis=(0, 1))
    mu_x = x.mean(axis=(-2, -1))
    mu_y = y.mean(axis=(-2, -1))
    dx = x - mu_x[..., None, None]
    dy = y - mu_y[..., None, None]
    var_x = (dx * dx).mean(axis=(-2, -1))
    var_y = (dy * dy).mean(axis=(-2, -1))
    cov = (dx * dy).mean(axis=(-2, -1))
    index = ((2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)) / \
        ((mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (var_x + var_y + SSIM_C2))
    return float(index.mean())


def clip_ssim(pred, gt, window=7):
    """Mean SSIM over the frames of two ``(T, H, W, C)`` clips."""
    validate_same_shape(np.asarray(pred), np.asarray(gt))
    return float(np.mean([ssim(p, g, window) for p, g in zip(pred, gt)]))


@dataclasses.dataclass
class VideoMetricReport:
    """PSNR and SSIM of predicted clips."""

    psnr: list
    ssim: list

    @property
    def mean_psnr(self):
        """Mean PSNR in dB."""
        return float(np.mean(self.psnr))

    @property
    def mean_ssim(self):
        """Mean SSIM scaled by 100."""
        return float(100.0 * np.mean(self.ssim))

    def to_dict(self):
        """Aggregates for reports."""
        return {'psnr': round(self.mean_psnr, 6),
                'ssim_x100': round(self.mean_ssim, 6),
                'n_clips': len(self.psnr)}


def video_metrics(preds, gts, cap=100.0, window=7):
    """Per-clip PSNR and SSIM of ``(N, T, H, W, C)`` stacks."""
    preds, gts = np.asarray(preds), np.asarray(gts)
    validate_same_shape(preds, gts)
    return VideoMetricReport(
        [psnr(p, g, cap) for p, g in zip(preds, gts)],
        [clip_ssim(p, g, window) for p, g in zip(preds, gts)])


class ProbeHead(nn.Module):
    """A single linear map from latent actions to real actions."""

    def __init__(self, in_features, out_features):
        """Initialize the head."""
        super().__init__()
        self.linear = nn.Linear(in_features, out_features)

    def forward(self, features):
        """Predict real actions."""
        return self.linear(features)


@dataclasses.dataclass
class ProbeReport:
    """Validation L1 of the probe and its controls."""

    l1: float
    shuffled_l1: float
    baseline_l1: float
    n_train: int
    n_valid: int

    def to_dict(self):
        """Plain dictionary form."""
        return dataclasses.asdict(self)


def median_baseline(targets):
    """L1 of predicting the per-dimension median of ``targets``."""
    targets = np.asarray(targets, dtype=np.float64)
    return float(np.mean(np.abs(targets - np.median(targets, axis=0))))


def fit_probe(train_x, train_y, valid_x, valid_y, steps=300, batch=128,
              lr=1e-2, seed=0):
    """Train a :class:`ProbeHead` with an L1 objective.

    The learning rate decays linearly to zero over ``steps``.

    :returns: ``(validation L1, head)``.
    """
    train_x = torch.as_tensor(np.asarray(train_x), dtype=torch.float32)
    train_y = torch.as_tensor(np.asarray(train_y), dtype=torch.float32)
    valid_x = torch.as_tensor(np.asarray(valid_x), dtype=torch.float32)
    valid_y = torch.as_tensor(np.asarray(valid_y), dtype=torch.float32)
    generator = torch_generator(seed, 'probe')
    with seeded_init(seed, 'probe', 'init'):
        head = ProbeHead(train_x.shape[1], train_y.shape[1])
    optimizer = torch.optim.Adam(head.parameters(), lr=lr)
    schedule = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: 1.0 - step / steps)
    for _ in range(steps):
        index = torch.randint(len(train_x), (batch,), generator=generator)
        loss = (head(train_x[index]) - train_y[index]).abs().mean()
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        schedule.step()
    with torch.no_grad():
        l1 = float((head(valid_x) - valid_y).abs().mean())
    return l1, head


@torch.no_grad()
def latent_features(lam, clips, chunk=16):
    """Post-quantization embeddings of every transition.

    :param clips: ``(E, L, H, W, C)`` episodes.
    :returns: ``(E * (L - 1), G * D)`` array.
    """
    lam.eval()
    features = []
    for start in range(0, len(clips), chunk):
        batch = torch.as_tensor(np.asarray(clips[start:start + chunk]),
                                dtype=torch.float32)
        embeddings = lam.infer(batch).embeddings
        features.append(rearrange(embeddings, 'b n g d -> (b n) (g d)'))
    return torch.cat(features).numpy()


@torch.no_grad()
def latent_indices(lam, clips, chunk=16):
    """Code indices ``(E, L - 1, G)`` of every transition."""
    lam.eval()
    indices = []
    for start in range(0, len(clips), chunk):
        batch = torch.as_tensor(np.asarray(clips[start:start + chunk]),
                                dtype=torch.float32)
        indices.append(lam.infer(batch).indices)
    return torch.cat(indices).numpy()


def _actions_as_targets(actions):
    return rearrange(np.asarray(actions, dtype=np.float32),
                     'e n a -> (e n) a')


def probe_features(train_x, train_y, valid_x, valid_y, eval_config, seed=0):
    """Probe precomputed features and run the shuffled control.

    :returns: A :class:`ProbeReport`.
    """
    valid_x = np.asarray(valid_x)[:eval_config.probe_valid_samples]
    valid_y = np.asarray(valid_y)[:eval_config.probe_valid_samples]
    kwargs = dict(steps=eval_config.probe_steps,
                  batch=eval_config.probe_batch, lr=eval_config.probe_lr)
    l1, _ = fit_probe(train_x, train_y, valid_x, valid_y, seed=seed, **kwargs)
    rng = np.random.default_rng(derive_seed(seed, 'probe', 'shuffle'))
    shuffled_l1, _ = fit_probe(
        np.asarray(train_x)[rng.permutation(len(train_x))], train_y,
        valid_x[rng.permutation(len(valid_x))], valid_y, seed=seed, **kwargs)
    return ProbeReport(l1, shuffled_l1, median_baseline(valid_y),
                       len(train_x), len(valid_x))


def linear_probe(lam, manifest, eval_config, seed=0):
    """Probe how much real-action information the frozen LAM carries.

    :param lam: Frozen :class:`~cola_world.lam.LatentActionModel`.
    :param manifest: Dataset with visible actions.
    :raises ActionsHiddenError: If the dataset hides its actions.
    """
    if not manifest.actions_visible:
        raise ActionsHiddenError('Probing needs a dataset with visible '
                                 'actions')
    lam.requires_grad_(False)
    train_x = latent_features(lam, manifest.clips('train'))
    valid_x = latent_features(lam, manifest.clips('valid'))
    return probe_features(train_x, _actions_as_targets(
        manifest.actions('train')), valid_x, _actions_as_targets(
        manifest.actions('valid')), eval_config, seed)


@torch.no_grad()
def predict_clips(lam, wm, clips, seed=0, steps=None, guidance_scale=None):
    """Reconstruct clips from their first frame and inferred latents."""
    clips = torch.as_tensor(np.asarray(clips), dtype=torch.float32)
    latents = lam.infer(clips).embeddings
    return wm.sample(clips[:, 0], latents, steps=steps,
                     guidance_scale=guidance_scale, seed=seed).numpy()


def action_transfer(source_clip, target_first_frame, lam, wm, seed=0,
                    steps=None, guidance_scale=None):
    """Replay the latent actions of ``source_clip`` from another frame.

    :param source_clip: ``(B, T, H, W, C)`` clips.
    :param target_first_frame: ``(B, H, W, C)`` frames.
    :raises ValueError: If batch or frame shapes differ.
    """
    source = torch.as_tensor(np.asarray(source_clip), dtype=torch.float32)
    target = torch.as_tensor(np.asarray(target_first_frame),
                             dtype=torch.float32)
    if target.ndim != 4 or source.ndim != 5 or \
            target.shape != source[:, 0].shape:
        raise ValueError('Target frames {0} do not match source clips '
                         '{1}'.format(tuple(target.shape),
                                      tuple(source.shape)))
    with torch.no_grad():
        latents = lam.infer(source).embeddings
        return wm.sample(target, latents, steps=steps,
                         guidance_scale=guidance_scale, seed=seed)


def centroid_track(clip):
    """Agent displacements between consecutive frames of a clip."""
    points = [agent_centroid(frame) for frame in np.asarray(clip)]
    moves = []
    for before, after in zip(points[:-1], points[1:]):
        if before is not None and after is not None:
            moves.append((after[0] - before[0], after[1] - before[1]))
        else:
            moves.append((0.0, 0.0))
    return np.asarray(moves, dtype=np.float64).reshape(-1, 2)


def transfer_correlation(sources, generated):
    """Pearson correlation of source and generated agent displacements."""
    a = np.concatenate([centroid_track(c).ravel() for c in sources])
    b = np.concatenate([centroid_track(c).ravel() for c in generated])
    if a.std() == 0 or b.std() == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def evaluation_windows(config, manifest, n_windows=None, split='test'):
    """The fixed evaluation windows of a dataset.

    :raises ConfigError: If the split holds no episode.
    """
    if not manifest.split(split):
        raise ConfigError('Dataset {0} has no {1} episodes'.format(
            os.path.basename(manifest.root), split),
            fields=['split_fractions'])
    return fixed_windows(manifest.clips(split), config.training.clip_length,
                         n_windows or config.eval.test_clips,
                         derive_seed(config.seed, 'eval', split))[0]


def evaluate_models(lam, wm, config, windows, probe_manifest=None):
    """Video metrics and optionally probe L1 of one model pair."""
    preds = predict_clips(lam, wm, windows,
                          seed=derive_seed(config.seed, 'eval', 'noise'))
    row = video_metrics(preds, windows, config.eval.psnr_cap,
                        config.eval.ssim_window).to_dict()
    if probe_manifest is not None:
        probe = linear_probe(lam, probe_manifest, config.eval,
                             seed=derive_seed(config.seed, 'probe'))
        row['probe'] = probe.to_dict()
    return row


def final_codebook(telemetry, num_codes):
    """Last codebook metrics of a telemetry file, with entropy bound."""
    records = [r for r in read_telemetry(telemetry) if r.get('codebook')]
    if not records:
        return None
    metrics = dict(records[-1]['codebook'])
    metrics['entropy_fraction'] = metrics['entropy'] / entropy_bound(
        num_codes)
    return metrics


def first_collapse(records, num_codes, training_config, utilization_floor):
    """Step and reason of the first collapse alarm in a telemetry run.

    :returns: ``{'step', 'reason'}`` or ``None``.
    """
    window = training_config.collapse_window
    for end in range(window, len(records) + 1):
        alarm = collapse_detector(records[:end], num_codes, window,
                                  training_config.collapse_max_usage,
                                  utilization_floor)
        if alarm is not None:
            return {'step': alarm.step, 'reason': alarm.reason}
    return None


def compare_report(config, entries, manifests, out_dir, load_models,
                   plot=True):
    """Evaluate checkpoints on fixed test windows and write a report.

    :param entries: ``(method, checkpoint path)`` pairs.
    :param manifests: ``{dataset name: DatasetManifest}``; ``main`` is the
        reference test set, ``probe`` (if present) feeds the probe and any
        other dataset outside ``adaptation.datasets`` is reported as an
        environment variant.
    :param load_models: Callable ``(config, path) -> (lam, wm, header)``.
    :returns: ``(report dict, report path)``.
    :raises IncompatibleArtifactError: If a checkpoint was trained on a
        different environment than the reference test set.
    """
    reference = manifests['main']
    skipped = {'main', 'probe'} | set(config.adaptation.datasets)
    windows = {name: evaluation_windows(config, manifest)
               for name, manifest in sorted(manifests.items())
               if name not in skipped}
    main_windows = evaluation_windows(config, reference)
    rows, curves = [], {}
    for method, path in entries:
        if not os.path.exists(path):
            logger.info('Checkpoint of %s is absent: %s', method, path)
            rows.append({'method': method, 'checkpoint': path,
                         'status': 'absent'})
            continue
        header = read_header(path)
        env_hash = header.get('env_config_hash')
        if env_hash is not None and env_hash != reference.env_config_hash:
            raise IncompatibleArtifactError(
                'Checkpoint {0} was trained on environment {1}, the test set '
                'uses {2}'.format(path, env_hash[:12],
                                  reference.env_config_hash[:12]))
        lam, wm, header = load_models(config, path)
        row = {'method': method, 'checkpoint': path, 'status': 'ok',
               'chain': header.get('chain'),
               'config_digest': header.get('config_digest'),
               'seed': header.get('seed')}
        row.update(evaluate_models(lam, wm, config, main_windows,
                                   manifests.get('probe')))
        row['variants'] = {
            name: evaluate_models(lam, wm, config, clips)
            for name, clips in windows.items()}
        telemetry = path[:-len('.ckpt')] + '.telemetry.jsonl'
        if os.path.exists(telemetry):
            row['codebook'] = final_codebook(telemetry, lam.num_codes)
            curves[method] = read_telemetry(telemetry)
            row['collapse'] = first_collapse(
                curves[method], lam.num_codes, config.training,
                config.codebook_utilization_floor)
        rows.append(row)

    report = {
        'schema_version': REPORT_SCHEMA_VERSION,
        'config_digest': config.digest(),
        'seed': config.seed,
        'env_config_hash': reference.env_config_hash,
        'test_clips': int(len(main_windows)),
        'rows': rows,
        'plots': [],
    }
    report_dir = os.path.join(out_dir, 'reports', 'seed{0}'.format(
        config.seed))
    if plot and curves:
        plot_codebook_curves(curves, os.path.join(report_dir, 'codebook.png'))
        plot_method_comparison(rows, os.path.join(report_dir, 'methods.png'))
        report['plots'] = ['codebook.png', 'methods.png']
    path = os.path.join(report_dir, 'report.json')
    atomic_write_json(path, report)
    return report, path



SUMMARY_ORDERINGS = (
    ('cola', 'probe_l1', '<=', 'two-stage', 'probe_l1'),
    ('cola', 'psnr', '>=', 'ablate-frozen-lam', 'psnr'),
    ('cola', 'probe_l1', '<=', 'ablate-pure-warmup', 'probe_l1'),
)
"""Expected orderings of seed means.

Each entry reads ``(method, metric, relation, method, metric)``.
"""

ADAPTATION_ORDERINGS = (
    ('cola', 'adapter_max_usage', '<=', 'two-stage', 'adapter_max_usage'),
)
"""Expected orderings between pipelines adapted to the same dataset."""

_RELATIONS = {'<=': lambda a, b: a <= b, '>=': lambda a, b: a >= b}


def spread(values):
    """Mean, sample standard deviation and count of per-seed values.

    :param values: ``{seed: value}``; ``None`` values are skipped.
    """
    present = {str(s): float(v) for s, v in sorted(values.items())
               if v is not None}
    array = np.asarray(list(present.values()), dtype=np.float64)
    return {
        'mean': float(array.mean()) if len(array) else None,
        'std': float(array.std(ddof=1)) if len(array) > 1 else 0.0,
        'n': len(array),
        'values': present,
    }


def report_metrics(row):
    """Scalar metrics of one report row."""
    probe = row.get('probe') or {}
    codebook = row.get('codebook') or {}
    return {
        'psnr': row.get('psnr'),
        'ssim_x100': row.get('ssim_x100'),
        'probe_l1': probe.get('l1'),
        'utilization': codebook.get('utilization'),
        'max_usage': codebook.get('max_usage'),
        'entropy_fraction': codebook.get('entropy_fraction'),
    }


def adaptation_metrics(report):
    """Scalar metrics of one adaptation report."""
    snapshot = report['distribution']['snapshots']['ADAPTER_INFERENCE']
    accuracy = report['adapter']['accuracy']
    return {
        'gt_lam_psnr': report['gt_lam']['psnr'],
        'adapter_psnr': report['adapter_mode']['psnr'],
        'adapter_max_usage': snapshot['max_usage'],
        'adapter_accuracy': float(np.mean(accuracy)) if accuracy else None,
    }


def _ordering(table, left, left_metric, relation, right, right_metric,
              **extra):
    a = table.get(left, {}).get(left_metric, {}).get('mean')
    b = table.get(right, {}).get(right_metric, {}).get('mean')
    return dict(extra, left=left, left_metric=left_metric,
                relation=relation, right=right, right_metric=right_metric,
                left_mean=a, right_mean=b,
                holds=None if a is None or b is None
                else bool(_RELATIONS[relation](a, b)))


def _tabulate(per_seed):
    """``{seed: {name: {metric: value}}}`` to ``{name: {metric: spread}}``.
    """
    names = sorted({n for rows in per_seed.values() for n in rows})
    table = {}
    for name in names:
        metrics = sorted({m for rows in per_seed.values()
                          for m in rows.get(name, {})})
        table[name] = {
            metric: spread({seed: rows[name].get(metric)
                            for seed, rows in per_seed.items()
                            if name in rows})
            for metric in metrics}
    return table


def seed_summary(reports, adaptations=None, plans=None):
    """Aggregate the comparison reports of several seeds.

    :param reports: ``{seed: report}`` of :func:`compare_report`.
    :param adaptations: ``{dataset: {seed: {method: adaptation report}}}``.
    :param plans: ``{dataset: {seed: {model: planning results}}}``.
    :returns: Summary with per-method spreads, collapse counts and the
        expected orderings evaluated on seed means.
    """
    rows = {seed: {row['method']: row for row in report['rows']
                   if row.get('status') == 'ok'}
            for seed, report in reports.items()}
    methods = _tabulate({seed: {m: report_metrics(r)
                                for m, r in by_method.items()}
                         for seed, by_method in rows.items()})
    collapse = {}
    for method in methods:
        seeds = [seed for seed, by_method in rows.items()
                 if method in by_method]
        collapsed = [seed for seed in seeds
                     if rows[seed][method].get('collapse')]
        collapse[method] = {'collapsed': len(collapsed), 'seeds': len(seeds),
                            'collapsed_seeds': sorted(collapsed)}
    orderings = [_ordering(methods, *o) for o in SUMMARY_ORDERINGS]

    adapted = {}
    for dataset, per_seed in sorted((adaptations or {}).items()):
        table = _tabulate({seed: {m: adaptation_metrics(r)
                                  for m, r in by_method.items()}
                           for seed, by_method in per_seed.items()})
        adapted[dataset] = table
        orderings += [_ordering(table, *o, dataset=dataset)
                      for o in ADAPTATION_ORDERINGS]
        orderings += [_ordering(table, m, 'gt_lam_psnr', '>=', m,
                                'adapter_psnr', dataset=dataset)
                      for m in sorted(table)]
    planning = {
        dataset: _tabulate({seed: {
            model: {task: result['success_rate']
                    for task, result in document['tasks'].items()}
            for model, document in by_model.items()}
            for seed, by_model in per_seed.items()})
        for dataset, per_seed in sorted((plans or {}).items())}
    return {
        'schema_version': REPORT_SCHEMA_VERSION,
        'seeds': sorted(reports),
        'config_digests': {str(s): reports[s]['config_digest']
                           for s in sorted(reports)},
        'methods': methods,
        'collapse': collapse,
        'adaptation': adapted,
        'planning': planning,
        'orderings': orderings,
    }
