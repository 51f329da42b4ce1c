# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Command line tests."""

import json
import os

import pytest
from click.testing import CliRunner
from flask.cli import ScriptInfo
from helpers import parse_json

from cola_world.cli import cli, create_app
from cola_world.store import MANIFEST_NAME


def invoke(app, *args):
    """Run a command against ``app``."""
    runner = CliRunner()
    script_info = ScriptInfo(create_app=lambda *a: app)
    return runner.invoke(cli, list(args), obj=script_info)


def test_create_app():
    """Test the console script application."""
    app = create_app({'COLA_SEED': 3})
    assert 'cola-world' in app.extensions
    assert app.config['COLA_SEED'] == 3


def test_show_config(app):
    """Test printing the validated experiment."""
    result = invoke(app, 'show-config')
    assert result.exit_code == 0, result.output
    document = parse_json(result.output)
    assert document['digest'] == \
        app.extensions['cola-world'].experiment.digest()
    assert document['config']['lam']['width'] == 16

    result = invoke(app, '--seed', '5', 'show-config')
    assert parse_json(result.output)['config']['seed'] == 5


def test_gen_data_is_idempotent(app, out_dir):
    """Test that regenerating an existing dataset is a no-op."""
    result = invoke(app, 'gen-data', '--dataset', 'main')
    assert result.exit_code == 0, result.output
    summary = parse_json(result.output)
    assert list(summary) == ['main']
    assert summary['main']['episodes'] == 12

    manifest = os.path.join(out_dir, 'data', 'seed0', 'main', MANIFEST_NAME)
    mtime = os.stat(manifest).st_mtime_ns
    result = invoke(app, 'gen-data', '--dataset', 'main')
    assert result.exit_code == 0, result.output
    assert parse_json(result.output) == summary
    assert os.stat(manifest).st_mtime_ns == mtime


def test_config_errors(app, tmpdir):
    """Test the error record and exit code of an invalid experiment."""
    path = tmpdir.join('experiment.json')
    path.write(json.dumps({'lam': {'foo': 1}}))

    result = invoke(app, '--config', str(path), 'show-config')

    assert result.exit_code == 2
    record = parse_json(result.output)
    assert record['error'] == 'ConfigError'
    assert record['fields'] == ['lam.foo']
    assert record['exit_code'] == 2


def test_paper_preset_is_not_runnable(app):
    """Test that the documented scale is shown but never executed."""
    result = invoke(app, '--preset', 'paper', 'show-config')
    assert result.exit_code == 0, result.output
    assert parse_json(result.output)['config']['wm']['denoise_steps'] == 10

    result = invoke(app, '--preset', 'paper', 'gen-data')
    assert result.exit_code == 2
    assert parse_json(result.output)['fields'] == ['wm.input_size']


def test_missing_artifacts(app):
    """Test that commands fail cleanly without their inputs."""
    result = invoke(app, 'train', 'cola')
    assert result.exit_code == 4
    assert parse_json(result.output)['error'] == 'MissingArtifactError'

    result = invoke(app, 'probe', '--pipeline', 'cola')
    assert result.exit_code == 4

    result = invoke(app, 'gen-data', '--dataset', 'main')
    assert result.exit_code == 0, result.output
    result = invoke(app, 'train', 'nosuch')
    assert result.exit_code == 2
    assert parse_json(result.output)['fields'] == ['pipeline']


def test_pipeline_end_to_end(app, out_dir):
    """Test training, evaluation, adaptation, planning and reporting."""
    result = invoke(app, 'gen-data')
    assert result.exit_code == 0, result.output
    assert sorted(parse_json(result.output)) == [
        'downstream', 'downstream-shapes', 'main', 'probe', 'variant']

    result = invoke(app, 'train', 'pipeline=cola')
    assert result.exit_code == 0, result.output
    chain, = parse_json(result.output)['chains']
    assert [s['stage'] for s in chain] == [
        'PRETRAIN_WM-3', 'WARMUP-3', 'JOINT_E2E-3']
    assert not any(s['skipped'] for s in chain)
    assert all(os.path.exists(s['telemetry']) for s in chain)

    result = invoke(app, 'train', 'cola')
    assert all(s['skipped'] for s in parse_json(result.output)['chains'][0])

    result = invoke(app, 'probe')
    assert result.exit_code == 0, result.output
    probe = parse_json(result.output)
    assert probe['method'] == 'cola'
    assert probe['l1'] >= 0.0
    assert os.path.exists(probe['path'])

    result = invoke(app, 'eval', '--transfer')
    assert result.exit_code == 0, result.output
    evaluation = parse_json(result.output)
    assert evaluation['n_clips'] == 4
    assert evaluation['transfer']['pairs'] == 2
    assert -1.0 <= evaluation['transfer']['correlation'] <= 1.0

    result = invoke(app, 'adapt')
    assert result.exit_code == 0, result.output
    adapted = parse_json(result.output)
    assert sorted(adapted) == ['downstream', 'downstream-shapes']
    assert adapted['downstream']['embodiment'] == 'POLAR'
    assert adapted['downstream-shapes']['embodiment'] == 'CARTESIAN'
    for document in adapted.values():
        assert set(document['distribution']['snapshots']) == {
            'TRAIN', 'GT_LAM_FINETUNE', 'ADAPTER_INFERENCE'}
        assert document['adapter_mode']['n_clips'] == 4
    result = invoke(app, 'adapt')
    assert parse_json(result.output) == adapted

    result = invoke(app, 'plan', '--model', 'oracle')
    assert result.exit_code == 0, result.output
    planned = parse_json(result.output)
    assert sorted(planned) == ['downstream', 'downstream-shapes']
    for summary in planned.values():
        assert 0.0 <= summary['success_rate']['reach'] <= 1.0

    result = invoke(app, 'plan', '--model', 'wm', '--dataset', 'downstream')
    assert result.exit_code == 0, result.output
    assert os.path.basename(
        parse_json(result.output)['downstream']['path']) == \
        'plan-cola-downstream.json'

    result = invoke(app, 'report', '--pipeline', 'cola')
    assert result.exit_code == 0, result.output
    rows = parse_json(result.output)['rows']
    assert [(r['method'], r['status']) for r in rows] == [('cola', 'ok')]

    result = invoke(app, '--seed', '1', 'eval')
    assert result.exit_code == 4


def test_report_over_seeds(app, out_dir):
    """Test the aggregated report of two seeds."""
    for seed in ('0', '1'):
        for dataset in ('main', 'probe'):
            result = invoke(app, '--seed', seed, 'gen-data', '--dataset',
                            dataset)
            assert result.exit_code == 0, result.output
        result = invoke(app, '--seed', seed, 'train', 'cola')
        assert result.exit_code == 0, result.output

    result = invoke(app, '--seed', '0', 'report', '--pipeline', 'cola',
                    '--pipeline', 'two-stage', '--seeds', '0,1')
    assert result.exit_code == 0, result.output
    document = parse_json(result.output)
    assert document['seeds'] == [0, 1]
    assert document['collapse']['cola']['seeds'] == 2
    assert 'two-stage' not in document['collapse']
    ordering, = [o for o in document['orderings']
                 if o['right'] == 'two-stage' and
                 o['left_metric'] == 'probe_l1']
    assert ordering['left_mean'] is not None
    assert ordering['holds'] is None
    assert os.path.exists(
        os.path.join(out_dir, 'reports', 'seed1', 'report.json'))

    with open(document['path']) as fp:
        summary = json.load(fp)
    psnr = summary['methods']['cola']['psnr']
    assert psnr['n'] == 2
    assert sorted(psnr['values']) == ['0', '1']
    assert psnr['mean'] == pytest.approx(sum(psnr['values'].values()) / 2)
    assert summary['methods']['cola']['probe_l1']['n'] == 2

    with open(document['path'], 'rb') as fp:
        before = fp.read()
    result = invoke(app, '--seed', '0', 'report', '--pipeline', 'cola',
                    '--pipeline', 'two-stage', '--seeds', '1,0')
    assert result.exit_code == 0, result.output
    with open(document['path'], 'rb') as fp:
        assert fp.read() == before

    result = invoke(app, 'report', '--seeds', 'a,b')
    assert result.exit_code == 2
    assert parse_json(result.output)['fields'] == ['seeds']
