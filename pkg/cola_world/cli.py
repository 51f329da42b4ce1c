# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Command line interface.

Every command loads the experiment of the application, writes its
artifacts below the output directory and prints a JSON summary. Failures
print one JSON error record to stderr and exit with the code of the error
class.
"""

import functools
import json

import click
from flask import Flask, current_app
from flask.cli import ScriptInfo, with_appcontext

from .api import current_cola
from .errors import ColaWorldError, ConfigError
from .ext import ColaWorld
from .pipelines import data_dir, ensure_dataset, pipeline_names, \
    run_adaptation, run_evaluation, run_pipeline, run_planning, run_probe, \
    run_report, run_summary


def create_app(settings=None):
    """Application carrying the CoLA-World extension."""
    app = Flask('cola_world')
    app.config.update(settings or {})
    ColaWorld(app)
    return app


def _echo(document):
    click.echo(json.dumps(document, sort_keys=True, indent=2))


def handle_errors(f):
    """Turn library errors into an error record and exit code."""
    @functools.wraps(f)
    def decorated(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ColaWorldError as e:
            current_app.logger.error('%s: %s', type(e).__name__, e)
            click.echo(json.dumps(e.to_record(), sort_keys=True), err=True)
            raise click.exceptions.Exit(e.exit_code)
    return decorated


def _experiment(runnable=True):
    experiment = current_cola.experiment
    if runnable:
        experiment.ensure_runnable()
    return experiment


def _parse_seeds(text):
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise ConfigError('--seeds expects comma separated integers, got '
                          '{0!r}'.format(text), fields=['seeds'])


@click.group()
@click.option('--config', 'config_path', type=click.Path(dir_okay=False),
              help='JSON experiment file.')
@click.option('--seed', type=int, help='Experiment seed.')
@click.option('--out', 'out_dir', type=click.Path(file_okay=False),
              help='Output directory.')
@click.option('--force', is_flag=True, default=False,
              help='Recompute existing artifacts.')
@click.option('--preset', type=click.Choice(['desk', 'paper']),
              help='Configuration preset.')
@click.pass_context
def cli(ctx, config_path, seed, out_dir, force, preset):
    """CoLA-World desk-scale laboratory."""
    settings = {'COLA_FORCE': force}
    for key, value in (('COLA_CONFIG_PATH', config_path),
                       ('COLA_SEED', seed), ('COLA_OUTPUT_DIR', out_dir),
                       ('COLA_PRESET', preset)):
        if value is not None:
            settings[key] = value
    if isinstance(ctx.obj, ScriptInfo):
        app = ctx.obj.load_app()
        app.config.update(settings)
        app.extensions['cola-world'].reset()
    else:
        ctx.obj = ScriptInfo(create_app=lambda *args: create_app(settings))


@cli.command('gen-data')
@click.option('--dataset', 'datasets', multiple=True,
              help='Dataset to generate (default: all).')
@click.option('--workers', default=1, type=int,
              help='Episode generation processes.')
@with_appcontext
@handle_errors
def gen_data(datasets, workers):
    """Generate the synthetic datasets."""
    experiment = _experiment()
    out_dir = current_cola.out_dir
    summary = {}
    for name in datasets or sorted(experiment.datasets):
        manifest = ensure_dataset(experiment, out_dir, name,
                                  force=current_cola.force, workers=workers)
        summary[name] = {'path': data_dir(experiment, out_dir, name),
                         'episodes': len(manifest.entries),
                         'env_config_hash': manifest.env_config_hash}
    _echo(summary)


@cli.command()
@click.argument('target')
@with_appcontext
@handle_errors
def train(target):
    """Train a phase or a pipeline (``cola`` or ``pipeline=cola``)."""
    if target.startswith('pipeline='):
        target = target[len('pipeline='):]
    experiment = _experiment()
    runs = run_pipeline(experiment, current_cola.out_dir, target,
                        force=current_cola.force,
                        log_every=current_cola.log_every)
    _echo({'target': target, 'chains': [
        [{'stage': o.stage.name, 'checkpoint': o.checkpoint,
          'telemetry': o.telemetry, 'skipped': o.skipped, 'alarm': o.alarm}
         for o in outcomes] for outcomes in runs]})


@cli.command()
@click.option('--pipeline', default='cola', show_default=True)
@with_appcontext
@handle_errors
def probe(pipeline):
    """Linear probe of a trained LAM."""
    document, path = run_probe(_experiment(), current_cola.out_dir, pipeline)
    _echo(dict(document, path=path))


@cli.command('eval')
@click.option('--pipeline', default='cola', show_default=True)
@click.option('--transfer', is_flag=True, default=False,
              help='Also evaluate action transfer.')
@with_appcontext
@handle_errors
def evaluate(pipeline, transfer):
    """Video metrics of a trained pipeline."""
    document, path = run_evaluation(_experiment(), current_cola.out_dir,
                                    pipeline, transfer=transfer)
    _echo(dict(document, path=path))


@cli.command()
@click.option('--pipeline', default='cola', show_default=True)
@click.option('--dataset', 'datasets', multiple=True,
              help='Downstream dataset (default: configured datasets).')
@with_appcontext
@handle_errors
def adapt(pipeline, datasets):
    """Adapt a trained pipeline to real actions."""
    experiment = _experiment()
    summary = {}
    for dataset in datasets or experiment.adaptation.datasets:
        document, path = run_adaptation(
            experiment, current_cola.out_dir, pipeline, dataset,
            force=current_cola.force, log_every=current_cola.log_every)
        summary[dataset] = dict(document, path=path)
    _echo(summary)


@cli.command()
@click.option('--model', type=click.Choice(['oracle', 'wm']),
              default='oracle', show_default=True)
@click.option('--pipeline', default='cola', show_default=True,
              help='Adapted pipeline used with --model wm.')
@click.option('--dataset', 'datasets', multiple=True,
              help='Dataset whose environment hosts the tasks '
                   '(default: configured downstream datasets).')
@with_appcontext
@handle_errors
def plan(model, pipeline, datasets):
    """Plan the configured tasks with CEM."""
    experiment = _experiment()
    summary = {}
    for dataset in datasets or experiment.adaptation.datasets:
        document, path = run_planning(experiment, current_cola.out_dir,
                                      model, pipeline, dataset)
        summary[dataset] = {'path': path, 'success_rate': {
            task: result['success_rate']
            for task, result in document['tasks'].items()}}
    _echo(summary)


@cli.command()
@click.option('--pipeline', 'pipelines', multiple=True,
              type=click.Choice(pipeline_names()),
              help='Pipeline to include (default: configured pipelines).')
@click.option('--seeds', help='Comma separated seeds to aggregate, e.g. '
                              '"0,1,2".')
@with_appcontext
@handle_errors
def report(pipelines, seeds):
    """Compare trained pipelines on the fixed test windows.

    With ``--seeds`` the reports of every listed seed are aggregated into
    ``reports/summary.json``.
    """
    experiment = _experiment()
    names = list(pipelines) or None
    if seeds:
        summary, path = run_summary(experiment, current_cola.out_dir,
                                    _parse_seeds(seeds), names)
        _echo({'path': path, 'seeds': summary['seeds'],
               'collapse': summary['collapse'],
               'orderings': summary['orderings']})
        return
    document, path = run_report(experiment, current_cola.out_dir, names)
    _echo({'path': path, 'rows': [
        {k: row.get(k) for k in ('method', 'status', 'psnr', 'ssim_x100')}
        for row in document['rows']]})


@cli.command('show-config')
@with_appcontext
@handle_errors
def show_config():
    """Print the validated experiment and its digest."""
    experiment = _experiment(runnable=False)
    _echo({'digest': experiment.digest(),
           'config': experiment.model_dump(mode='json')})
