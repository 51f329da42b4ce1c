# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Static report figures rendered with the Agg backend."""

import os

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CODEBOOK_METRICS = ('utilization', 'max_usage', 'entropy')
"""Panels of the codebook figures."""


def _save(fig, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, dpi=120, metadata={'Software': None})
    plt.close(fig)
    return path


def plot_codebook_curves(curves, path):
    """Codebook metrics against training step, one line per method.

    :param curves: ``{method: [telemetry record dict, ...]}``.
    """
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6), constrained_layout=True)
    for method, records in sorted(curves.items()):
        points = [(r['step'], r['codebook']) for r in records
                  if r.get('codebook')]
        if not points:
            continue
        steps = [s for s, _ in points]
        for ax, metric in zip(axes, CODEBOOK_METRICS):
            ax.plot(steps, [c[metric] for _, c in points], label=method)
    for ax, metric in zip(axes, CODEBOOK_METRICS):
        ax.set_title(metric.replace('_', ' '))
        ax.set_xlabel('step')
        ax.grid(True, alpha=0.3)
    axes[0].legend(fontsize='small')
    return _save(fig, path)


def plot_method_comparison(rows, path):
    """PSNR and probe L1 per method."""
    rows = [r for r in rows if r.get('status') == 'ok']
    names = [r['method'] for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.6), constrained_layout=True)
    positions = np.arange(len(rows))
    axes[0].bar(positions, [r['psnr'] for r in rows])
    axes[0].set_title('test PSNR (dB)')
    axes[1].bar(positions, [r.get('probe', {}).get('l1', np.nan)
                            for r in rows])
    axes[1].set_title('probe L1')
    for ax in axes:
        ax.set_xticks(positions)
        ax.set_xticklabels(names, rotation=30, ha='right', fontsize='small')
        ax.grid(True, axis='y', alpha=0.3)
    return _save(fig, path)


def plot_code_distribution(snapshots, path):
    """Grouped bars of codebook metrics for each distribution kind.

    :param snapshots: ``{kind: {metric: value}}``.
    """
    kinds = list(snapshots)
    fig, ax = plt.subplots(figsize=(7, 3.6), constrained_layout=True)
    width = 0.8 / max(len(kinds), 1)
    positions = np.arange(len(CODEBOOK_METRICS))
    for offset, kind in enumerate(kinds):
        ax.bar(positions + offset * width,
               [snapshots[kind][m] for m in CODEBOOK_METRICS], width,
               label=kind)
    ax.set_xticks(positions + width * (len(kinds) - 1) / 2)
    ax.set_xticklabels(CODEBOOK_METRICS)
    ax.legend(fontsize='small')
    ax.grid(True, axis='y', alpha=0.3)
    return _save(fig, path)
