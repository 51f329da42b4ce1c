# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Codebook usage statistics.

``utilization`` is the fraction of distinct codes seen, ``max_usage`` the
share of the most frequent code and ``entropy`` the Shannon entropy (nats)
of the code frequencies.
"""

import collections
import dataclasses
import math

import numpy as np


@dataclasses.dataclass(frozen=True)
class CodebookStats:
    """Usage metrics of one window of quantization events."""

    utilization: float
    max_usage: float
    entropy: float

    def to_dict(self):
        """Plain dictionary form."""
        return dataclasses.asdict(self)


def stats_from_counts(counts):
    """Metrics of per-code event counts.

    >>> stats_from_counts([1, 1, 1, 1]).max_usage
    0.25

    :raises ValueError: If no event was counted.
    """
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        raise ValueError('Cannot compute codebook statistics of an empty '
                         'window')
    used = counts[counts > 0]
    p = used.astype(np.float64) / total
    return CodebookStats(
        utilization=len(used) / len(counts),
        max_usage=float(used.max()) / total,
        entropy=float(max(0.0, -(p * np.log(p)).sum())),
    )


def code_counts(indices, num_codes):
    """Histogram of code indices."""
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    if indices.size and (indices.min() < 0 or indices.max() >= num_codes):
        raise ValueError('code index outside [0, {0})'.format(num_codes))
    return np.bincount(indices, minlength=num_codes)


def codebook_stats(index_stream, num_codes, window=None):
    """Metrics of the last ``window`` events of an index stream.

    :param index_stream: Sequence of code indices.
    :param num_codes: Codebook size ``K``.
    :param window: Number of trailing events to consider; all by default.
    :raises ValueError: On an empty stream.
    """
    indices = np.asarray(index_stream, dtype=np.int64).reshape(-1)
    if window is not None:
        indices = indices[-window:] if window > 0 else indices[:0]
    return stats_from_counts(code_counts(indices, num_codes))


class CodebookUsage(object):
    """Sliding window of per-step code counts.

    :param num_codes: Codebook size.
    :param window: Number of optimizer steps kept.
    """

    def __init__(self, num_codes, window):
        """Initialize an empty window."""
        self.num_codes = num_codes
        self.window = window
        self.steps = collections.deque(maxlen=window)

    def update(self, indices):
        """Record the quantization events of one step."""
        if hasattr(indices, 'detach'):
            indices = indices.detach().cpu().numpy()
        self.steps.append(code_counts(indices, self.num_codes))

    @property
    def counts(self):
        """Per-code counts over the window."""
        if not self.steps:
            return np.zeros(self.num_codes, dtype=np.int64)
        return np.sum(self.steps, axis=0)

    @property
    def events(self):
        """Number of quantization events in the window."""
        return int(self.counts.sum())

    def stats(self):
        """Metrics over the window."""
        return stats_from_counts(self.counts)

    def merge(self, other):
        """Combine with a window recorded over the same steps elsewhere."""
        if other.num_codes != self.num_codes:
            raise ValueError('Cannot merge windows of different codebooks')
        merged = CodebookUsage(self.num_codes, self.window)
        mine, theirs = list(self.steps), list(other.steps)
        length = max(len(mine), len(theirs))
        zeros = np.zeros(self.num_codes, dtype=np.int64)
        mine = [zeros] * (length - len(mine)) + mine
        theirs = [zeros] * (length - len(theirs)) + theirs
        for a, b in zip(mine, theirs):
            merged.steps.append(a + b)
        return merged


def entropy_bound(num_codes):
    """Largest possible entropy of a ``num_codes`` codebook."""
    return math.log(num_codes)
