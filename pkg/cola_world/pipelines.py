# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Experiment orchestration.

Pipelines are chains of phases. Every prefix of a chain is one checkpoint
named after the phases it ran, e.g. ``PRETRAIN_WM-2000+WARMUP-400.ckpt``,
so pipelines sharing a prefix share its artifact. An artifact whose header
matches the current training digest is reused instead of retrained.
"""

import dataclasses
import logging
import os
from typing import List, Optional

import torch

from .adaptation import Adapter, DistributionKind, adapted_predict, \
    codebook_distribution_report, extract_gt_lam, finetune_wm, \
    gt_lam_predict, train_adapter
from .checkpoints import load_checkpoint, read_header, restore, \
    save_checkpoint
from .errors import CheckpointMismatchError, ConfigError, \
    MissingArtifactError
from .evaluation import action_transfer, compare_report, evaluate_models, \
    evaluation_windows, latent_indices, linear_probe, seed_summary, \
    transfer_correlation, video_metrics
from .files import atomic_write_json, file_digest, read_json
from .lam import LatentActionModel
from .phases import PhaseKind
from .planner import EnvironmentOracle, WorldModelDynamics, evaluate_task, \
    make_tasks, train_success_classifier
from .plots import plot_code_distribution
from .schema import canonical_digest
from .seeds import derive_seed, seeded_init
from .store import MANIFEST_NAME, DatasetManifest, fixed_windows, \
    generate_dataset
from .synthenv import ACTION_DIM, SyntheticEnv
from .training import model_groups, run_phase
from .worldmodel import WorldModel

logger = logging.getLogger(__name__)

PIPELINES = {
    'two-stage': (PhaseKind.PRETRAIN_WM, PhaseKind.TWO_STAGE_LAM,
                  PhaseKind.TWO_STAGE_WM),
    'naive-joint': (PhaseKind.PRETRAIN_WM, PhaseKind.NAIVE_JOINT),
    'cola': (PhaseKind.PRETRAIN_WM, PhaseKind.WARMUP, PhaseKind.JOINT_E2E),
    'ablate-pure-warmup': (PhaseKind.PRETRAIN_WM, PhaseKind.WARMUP,
                           PhaseKind.ABLATE_PURE_WARMUP),
    'ablate-frozen-lam': (PhaseKind.PRETRAIN_WM, PhaseKind.WARMUP,
                          PhaseKind.ABLATE_FROZEN_LAM),
    'scratch-joint': (PhaseKind.NAIVE_JOINT,),
    'naive-joint-pretrained-lam': (PhaseKind.PRETRAIN_WM,
                                   PhaseKind.TWO_STAGE_LAM,
                                   PhaseKind.NAIVE_JOINT),
}
"""Phase chains of the named pipelines."""

WARMUP_SWEEP = 'warmup-sweep'
"""Pipeline running ``cola`` once per configured warm-up budget."""


@dataclasses.dataclass(frozen=True)
class Stage:
    """One phase of a chain with its step budget."""

    kind: PhaseKind
    steps: int

    @property
    def name(self):
        """Artifact name component."""
        return '{0}-{1}'.format(self.kind.value, self.steps)


@dataclasses.dataclass
class StageOutcome:
    """What happened to one stage of a pipeline run."""

    stage: Stage
    checkpoint: str
    telemetry: str
    skipped: bool
    alarm: Optional[dict] = None


def pipeline_names():
    """Every runnable pipeline name."""
    return sorted(PIPELINES) + [WARMUP_SWEEP]


def chains(config, name):
    """Stage chains of a pipeline; the sweep yields one chain per budget.

    :raises ConfigError: If the pipeline is unknown.
    """
    steps = config.training.steps
    if name == WARMUP_SWEEP:
        return [[Stage(PhaseKind.PRETRAIN_WM, steps[PhaseKind.PRETRAIN_WM]),
                 Stage(PhaseKind.WARMUP, budget),
                 Stage(PhaseKind.JOINT_E2E, steps[PhaseKind.JOINT_E2E])]
                for budget in config.training.warmup_sweep]
    if name in PIPELINES:
        return [[Stage(kind, steps[kind]) for kind in PIPELINES[name]]]
    try:
        kind = PhaseKind(name)
    except ValueError:
        raise ConfigError('Unknown phase or pipeline {0!r}; choose one of '
                          '{1}'.format(name, ', '.join(
                              pipeline_names() + [k.value for k in PhaseKind]
                          )), fields=['pipeline'])
    return [[Stage(kind, steps[kind])]]


def runs_dir(config, out_dir):
    """Directory of the trained artifacts of one seed."""
    return os.path.join(out_dir, 'runs', 'seed{0}'.format(config.seed))


def data_dir(config, out_dir, dataset):
    """Directory of a dataset generated for the seed of ``config``."""
    return os.path.join(out_dir, 'data', 'seed{0}'.format(config.seed),
                        dataset)


def artifact_path(config, out_dir, chain):
    """Checkpoint path of a chain prefix."""
    name = '+'.join(stage.name for stage in chain)
    return os.path.join(runs_dir(config, out_dir), name + '.ckpt')


def telemetry_path(checkpoint):
    """Telemetry file written next to a checkpoint."""
    return checkpoint[:-len('.ckpt')] + '.telemetry.jsonl'


def final_artifacts(config, out_dir, name):
    """Final checkpoint of each chain of a pipeline."""
    return [artifact_path(config, out_dir, chain)
            for chain in chains(config, name)]


def build_models(config):
    """Freshly initialized models, identical for every pipeline of a seed."""
    with seeded_init(config.seed, 'init'):
        lam = LatentActionModel.from_config(config)
        wm = WorldModel.from_config(config)
    return lam, wm


def load_models(config, checkpoint):
    """Models restored from a checkpoint.

    :returns: ``(lam, wm, header)``.
    """
    header, state = load_checkpoint(checkpoint,
                                    config_hash=config.model_hash())
    lam, wm = build_models(config)
    restore(model_groups(lam, wm), state)
    lam.eval()
    wm.eval()
    return lam, wm, header


def ensure_dataset(config, out_dir, name, force=False, workers=1):
    """Generate dataset ``name`` unless it is already up to date."""
    dataset = config.datasets[name]
    return generate_dataset(
        config.resolved_env(name), dataset.n_episodes,
        derive_seed(config.seed, 'dataset', name),
        data_dir(config, out_dir, name),
        actions_visible=dataset.actions_visible,
        fractions=config.split_fractions, force=force, workers=workers,
        config_digest=config.digest())


def load_dataset(config, out_dir, name):
    """Manifest of a generated dataset.

    :raises MissingArtifactError: If it has not been generated.
    """
    return DatasetManifest.load(data_dir(config, out_dir, name))


def _up_to_date(path, digest, key='training_digest'):
    if not os.path.exists(path):
        return False
    try:
        return read_header(path).get(key) == digest
    except CheckpointMismatchError:
        return False


def run_chain(config, out_dir, chain, force=False, log_every=50):
    """Run a chain of stages, reusing completed prefixes.

    :returns: A list of :class:`StageOutcome`.
    """
    manifest = load_dataset(config, out_dir, 'main')
    digest = config.training_digest()
    clips = None
    outcomes = []
    previous = None
    for index in range(len(chain)):
        prefix = chain[:index + 1]
        stage = prefix[-1]
        path = artifact_path(config, out_dir, prefix)
        telemetry = telemetry_path(path)
        if not force and _up_to_date(path, digest):
            logger.info('Reusing %s', path)
            outcomes.append(StageOutcome(stage, path, telemetry, True))
            previous = path
            continue
        if clips is None:
            clips = manifest.clips('train')
        lam, wm = build_models(config)
        init_from = {'all': previous} if previous else {}
        phase = config.phase(stage.kind, steps=stage.steps,
                             init_from=init_from)
        seed = derive_seed(config.seed, 'phase', *[s.name for s in prefix])
        logger.info('Running %s (%d steps)', stage.kind.value, stage.steps)
        result = run_phase(
            phase, lam, wm, clips, config, seed=seed, checkpoint_path=path,
            telemetry_path=telemetry, log_every=log_every,
            header={'training_digest': digest,
                    'env_config_hash': manifest.env_config_hash,
                    'chain': [s.name for s in prefix]})
        outcomes.append(StageOutcome(
            stage, path, telemetry, False,
            result.alarm.to_dict() if result.alarm else None))
        previous = path
    return outcomes


def run_pipeline(config, out_dir, name, force=False, log_every=50):
    """Run a phase or a named pipeline.

    :returns: A list of outcome lists, one per chain.
    """
    return [run_chain(config, out_dir, chain, force=force,
                      log_every=log_every)
            for chain in chains(config, name)]


def require_checkpoint(path):
    """Fail with exit code 4 if a dependency checkpoint is missing."""
    if not os.path.exists(path):
        raise MissingArtifactError(
            'Checkpoint {0} not found; run the training pipeline '
            'first'.format(path))
    return path


def pipeline_checkpoint(config, out_dir, name):
    """Final checkpoint of a single-chain pipeline."""
    paths = final_artifacts(config, out_dir, name)
    if len(paths) != 1:
        raise ConfigError('Pipeline {0} has several final checkpoints'.format(
            name), fields=['pipeline'])
    return paths[0]


def comparison_entries(config, out_dir, names=None) -> List[tuple]:
    """``(method, checkpoint)`` pairs of the pipelines to compare."""
    entries = []
    for name in names or config.pipelines:
        for chain in chains(config, name):
            method = name if len(chains(config, name)) == 1 else \
                '{0}/{1}'.format(name, chain[1].name)
            entries.append((method, artifact_path(config, out_dir, chain)))
    return entries


def reports_dir(config, out_dir):
    """Directory of the reports of one seed."""
    return os.path.join(out_dir, 'reports', 'seed{0}'.format(config.seed))


def run_probe(config, out_dir, name):
    """Linear probe of the LAM of a pipeline on the probe dataset."""
    lam, _, header = load_models(config, require_checkpoint(
        pipeline_checkpoint(config, out_dir, name)))
    manifest = load_dataset(config, out_dir, 'probe')
    report = linear_probe(lam, manifest, config.eval,
                          seed=derive_seed(config.seed, 'probe'))
    document = dict(report.to_dict(), method=name,
                    config_digest=config.digest(), seed=config.seed,
                    chain=header.get('chain'))
    path = os.path.join(reports_dir(config, out_dir),
                        'probe-{0}.json'.format(name))
    atomic_write_json(path, document)
    return document, path


def run_evaluation(config, out_dir, name, transfer=False):
    """Video metrics of a pipeline on the test windows of ``main``.

    With ``transfer`` the latent actions of every even test window are
    replayed from the first frame of the following one, and the agent
    displacement correlation is reported.
    """
    lam, wm, header = load_models(config, require_checkpoint(
        pipeline_checkpoint(config, out_dir, name)))
    manifest = load_dataset(config, out_dir, 'main')
    windows = evaluation_windows(config, manifest)
    document = dict(evaluate_models(lam, wm, config, windows), method=name,
                    config_digest=config.digest(), seed=config.seed,
                    chain=header.get('chain'),
                    env_config_hash=manifest.env_config_hash)
    if transfer:
        n = len(windows) // 2
        if n == 0:
            raise ConfigError('Action transfer needs at least two test '
                              'windows', fields=['eval.test_clips'])
        sources, targets = windows[0:2 * n:2], windows[1:2 * n:2]
        generated = action_transfer(
            sources, targets[:, 0], lam, wm,
            seed=derive_seed(config.seed, 'transfer')).numpy()
        document['transfer'] = {
            'pairs': n,
            'correlation': transfer_correlation(sources, generated)}
    path = os.path.join(reports_dir(config, out_dir),
                        'eval-{0}.json'.format(name))
    atomic_write_json(path, document)
    return document, path


def adaptation_path(config, out_dir, name, dataset):
    """Checkpoint of the adapter and finetuned world model of a pipeline."""
    return os.path.join(runs_dir(config, out_dir),
                        '{0}.{1}.adapted.ckpt'.format(name, dataset))


def adaptation_report_path(config, out_dir, name, dataset):
    """Report written next to an adaptation checkpoint."""
    path = adaptation_path(config, out_dir, name, dataset)
    return path[:-len('.ckpt')] + '.json'


def plan_path(config, out_dir, label, dataset):
    """Planning results of model ``label`` on ``dataset``."""
    return os.path.join(reports_dir(config, out_dir),
                        'plan-{0}-{1}.json'.format(label, dataset))


def adaptation_digest(config, source, dataset):
    """Digest of everything that shapes an adaptation artifact."""
    return canonical_digest({
        'training': config.training_digest(dataset),
        'adaptation': config.adaptation.model_dump(mode='json'),
        'eval': config.eval.model_dump(mode='json'),
        'source': file_digest(source),
    })


def run_adaptation(config, out_dir, name, dataset, force=False,
                   log_every=50):
    """Adapt a trained pipeline to the real actions of ``dataset``.

    GT-LAM pairs of the dataset train split fit the adapter, the world
    model is finetuned on GT-LAM conditions, and both prediction modes are
    compared on the test windows of the dataset.

    :returns: ``(report, report path)``.
    """
    source = require_checkpoint(pipeline_checkpoint(config, out_dir, name))
    path = adaptation_path(config, out_dir, name, dataset)
    report_path = adaptation_report_path(config, out_dir, name, dataset)
    digest = adaptation_digest(config, source, dataset)
    if not force and os.path.exists(report_path) and \
            _up_to_date(path, digest, 'adaptation_digest'):
        logger.info('Reusing %s', path)
        return read_json(report_path), report_path

    manifest = load_dataset(config, out_dir, dataset)
    if not manifest.split('test'):
        raise ConfigError('Dataset {0} has no test episodes'.format(dataset),
                          fields=['split_fractions'])
    lam, wm, _ = load_models(config, source)
    lam.requires_grad_(False)
    seed = derive_seed(config.seed, 'adapt', name, dataset)
    adaptation = config.adaptation
    pairs = extract_gt_lam(manifest, lam, 'train')
    adapter, adapter_report = train_adapter(
        pairs, lam.num_codes, adaptation.hidden, adaptation.adapter_steps,
        adaptation.adapter_batch, adaptation.adapter_lr, seed)

    windows, actions = fixed_windows(
        manifest.clips('test'), config.training.clip_length,
        config.eval.test_clips, derive_seed(config.seed, 'eval', dataset),
        actions=manifest.actions('test'))
    noise = derive_seed(config.seed, 'eval', 'noise')
    metrics = config.eval.psnr_cap, config.eval.ssim_window
    before = video_metrics(gt_lam_predict(wm, lam, windows, seed=noise)
                           .numpy(), windows, *metrics)

    train_clips = manifest.clips('train')
    finetune_wm(wm, lam, train_clips, config, adaptation.finetune_steps,
                adaptation.finetune_batch, seed,
                telemetry_path=path[:-len('.ckpt')] + '.telemetry.jsonl',
                adapter=adapter, log_every=log_every)
    wm.eval()
    gt_lam = video_metrics(gt_lam_predict(wm, lam, windows, seed=noise)
                           .numpy(), windows, *metrics)
    adapted = video_metrics(adapted_predict(
        wm, lam, adapter, actions, windows[:, 0], seed=noise).numpy(),
        windows, *metrics)

    reference = load_dataset(config, out_dir, 'main')
    streams = {
        DistributionKind.TRAIN: latent_indices(lam, evaluation_windows(
            config, reference, split='train')),
        DistributionKind.GT_LAM_FINETUNE: pairs.indices,
        DistributionKind.ADAPTER_INFERENCE: adapter.predict_indices(
            torch.as_tensor(actions, dtype=torch.float32)).numpy(),
    }
    distribution = codebook_distribution_report(
        streams, lam.num_codes, config.training.collapse_max_usage,
        config.codebook_utilization_floor)
    plot = os.path.join(reports_dir(config, out_dir),
                        'codes-{0}-{1}.png'.format(name, dataset))
    plot_code_distribution({
        kind: {m: s[m] for m in ('utilization', 'max_usage', 'entropy')}
        for kind, s in distribution['snapshots'].items()}, plot)

    groups = dict(model_groups(lam, wm), adapter=adapter)
    save_checkpoint(path, groups, config_hash=config.model_hash(),
                    config_digest=config.digest(), seed=config.seed,
                    adaptation_digest=digest, source=os.path.basename(source),
                    env_config_hash=manifest.env_config_hash,
                    adapter_hidden=adaptation.hidden)
    report = {
        'method': name,
        'dataset': dataset,
        'embodiment': manifest.env_config.embodiment,
        'config_digest': config.digest(),
        'seed': config.seed,
        'env_config_hash': manifest.env_config_hash,
        'adapter': adapter_report.to_dict(),
        'before_finetune': before.to_dict(),
        'gt_lam': gt_lam.to_dict(),
        'adapter_mode': adapted.to_dict(),
        'distribution': distribution,
        'plot': os.path.basename(plot),
    }
    atomic_write_json(report_path, report)
    return report, report_path


def load_adapted(config, out_dir, name, dataset):
    """Models and adapter of a pipeline adapted to ``dataset``.

    :returns: ``(lam, wm, adapter)``.
    """
    path = require_checkpoint(adaptation_path(config, out_dir, name,
                                              dataset))
    header, state = load_checkpoint(path, config_hash=config.model_hash())
    lam, wm = build_models(config)
    groups = model_groups(lam, wm)
    restore(groups, state, sorted(groups))
    adapter = Adapter(ACTION_DIM, lam.num_tokens, lam.num_codes,
                      header.get('adapter_hidden', config.adaptation.hidden))
    restore({'adapter': adapter}, state, ['adapter'])
    for module in (lam, wm, adapter):
        module.eval()
    return lam, wm, adapter


def run_planning(config, out_dir, model='oracle', name=None,
                 dataset='downstream'):
    """Plan every configured task in the environment of ``dataset``.

    :param model: ``'oracle'`` plans with the true environment, ``'wm'``
        with the adapted world model of pipeline ``name``.
    :returns: ``(results document, results path)``.
    """
    env = SyntheticEnv(config.resolved_env(dataset))
    tasks = make_tasks(env, config.planner, derive_seed(config.seed, 'tasks'))
    if model == 'oracle':
        dynamics = EnvironmentOracle(env)
        label = 'oracle'
    else:
        lam, wm, adapter = load_adapted(config, out_dir, name, dataset)
        dynamics = WorldModelDynamics(env, wm, lam, adapter,
                                      config.training.clip_length)
        label = name
    classifier = None
    if config.planner.use_classifier:
        classifier = train_success_classifier(
            env, tasks, seed=derive_seed(config.seed, 'classifier'))
    results = [evaluate_task(task, dynamics, env, config.planner,
                             seed=derive_seed(config.seed, 'plan', label),
                             classifier=classifier)
               for task in tasks]
    directory = reports_dir(config, out_dir)
    atomic_write_json(
        os.path.join(directory, 'tasks-{0}.json'.format(dataset)),
        [task.to_dict() for task in tasks])
    document = {
        'model': label,
        'dataset': dataset,
        'config_digest': config.digest(),
        'seed': config.seed,
        'env_config_hash': env.config_hash,
        'tasks': {r.task_id: r.to_dict() for r in results},
    }
    path = plan_path(config, out_dir, label, dataset)
    atomic_write_json(path, document)
    return document, path


def run_report(config, out_dir, names=None):
    """Comparison report over the pipelines of the experiment."""
    manifests = {'main': load_dataset(config, out_dir, 'main')}
    for dataset in config.datasets:
        if dataset != 'main' and os.path.exists(os.path.join(
                data_dir(config, out_dir, dataset), MANIFEST_NAME)):
            manifests[dataset] = load_dataset(config, out_dir, dataset)
    return compare_report(config, comparison_entries(config, out_dir, names),
                          manifests, out_dir, load_models)


def _report_is_current(report, config, methods):
    if report is None or report.get('config_digest') != config.digest():
        return False
    if [row['method'] for row in report['rows']] != methods:
        return False
    # A checkpoint trained after the report invalidates its absent row
    return not any(row['status'] == 'absent' and
                   os.path.exists(row['checkpoint'])
                   for row in report['rows'])


def _current_documents(config, paths):
    """Existing JSON documents of ``{key: path}`` produced from ``config``.
    """
    documents = {}
    for key, path in sorted(paths.items()):
        if os.path.exists(path):
            document = read_json(path)
            if document.get('config_digest') == config.digest():
                documents[key] = document
    return documents


def run_summary(config, out_dir, seeds, names=None):
    """Aggregate the reports of several seeds.

    The stored report of a seed is reused when it was produced from the
    same configuration and methods, and regenerated otherwise. Adaptation
    reports and planning results of the configured downstream datasets
    are included when present.

    :returns: ``(summary, summary path)``.
    """
    if not seeds:
        raise ConfigError('No seeds to summarize', fields=['seeds'])
    reports = {}
    adaptations = {dataset: {} for dataset in config.adaptation.datasets}
    plans = {dataset: {} for dataset in config.adaptation.datasets}
    pipelines = list(names or config.pipelines)
    for seed in sorted(set(seeds)):
        seeded = config.model_copy(update={'seed': seed})
        methods = [m for m, _ in comparison_entries(seeded, out_dir, names)]
        path = os.path.join(reports_dir(seeded, out_dir), 'report.json')
        report = read_json(path) if os.path.exists(path) else None
        if not _report_is_current(report, seeded, methods):
            report, _ = run_report(seeded, out_dir, names)
        reports[seed] = report
        for dataset in config.adaptation.datasets:
            adaptations[dataset][seed] = _current_documents(seeded, {
                name: adaptation_report_path(seeded, out_dir, name, dataset)
                for name in pipelines})
            plans[dataset][seed] = _current_documents(seeded, {
                label: plan_path(seeded, out_dir, label, dataset)
                for label in ['oracle'] + pipelines})
    summary = seed_summary(reports, adaptations, plans)
    path = os.path.join(out_dir, 'reports', 'summary.json')
    atomic_write_json(path, summary)
    logger.info('Summarized %d seeds in %s', len(reports), path)
    return summary, path
