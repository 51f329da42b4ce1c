# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Versioned checkpoints of parameter groups.

A checkpoint is a ``torch.save`` archive holding a JSON header and one
state dict per parameter group. The header's ``config_hash`` identifies the
architecture; loading into a different architecture is refused.
"""

import hashlib
import io
import json
import os
import pickle

import torch

from .errors import CheckpointMismatchError, MissingArtifactError
from .files import atomic_write_bytes

FORMAT_VERSION = 1
"""Version of the checkpoint container."""

MODULE_NAME = 'cola-world'
"""Value of the ``module`` header field."""


def state_digest(module):
    """SHA-256 over the names, dtypes, shapes and bytes of a state dict."""
    sha = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        tensor = tensor.detach().cpu().contiguous()
        sha.update(name.encode('utf-8'))
        sha.update(str(tensor.dtype).encode('utf-8'))
        sha.update(str(tuple(tensor.shape)).encode('utf-8'))
        sha.update(tensor.numpy().tobytes())
    return sha.hexdigest()


def group_digests(groups):
    """Digest of every parameter group of a ``{name: module}`` mapping."""
    return {name: state_digest(module)
            for name, module in sorted(groups.items())}


def save_checkpoint(path, groups, **header):
    """Atomically write the state of ``groups`` with a header.

    :param path: Destination file.
    :param groups: ``{group name: module}``.
    :param header: Header fields, e.g. ``config_hash``, ``phase_kind``,
        ``step`` and ``seed``.
    :returns: The header as written.
    """
    header = dict(header, format_version=FORMAT_VERSION, module=MODULE_NAME,
                  digests=group_digests(groups))
    buffer = io.BytesIO()
    torch.save({
        'header': json.dumps(header, sort_keys=True),
        'state': {name: module.state_dict()
                  for name, module in sorted(groups.items())},
    }, buffer)
    atomic_write_bytes(path, buffer.getvalue())
    return header


def read_header(path):
    """Header of a checkpoint without restoring any state."""
    return load_checkpoint(path)[0]


def load_checkpoint(path, config_hash=None):
    """Load a checkpoint.

    :param path: Checkpoint file.
    :param config_hash: Expected architecture digest, if any.
    :returns: ``(header, {group: state_dict})``.
    :raises MissingArtifactError: If the file does not exist.
    :raises CheckpointMismatchError: If the container version or the
        architecture digest differ, or the file cannot be
        read.
    """
    if not os.path.exists(path):
        raise MissingArtifactError('Checkpoint {0} does not exist'.format(
            path))
    try:
        blob = torch.load(path, map_location='cpu', weights_only=True)
        header = json.loads(blob['header'])
    except (pickle.UnpicklingError, EOFError, RuntimeError, KeyError,
            TypeError, ValueError) as e:
        raise CheckpointMismatchError(
            'Checkpoint {0} is unreadable: {1}'.format(path, e))
    if header.get('format_version') != FORMAT_VERSION or \
            header.get('module') != MODULE_NAME:
        raise CheckpointMismatchError(
            '{0} is not a version {1} {2} checkpoint'.format(
                path, FORMAT_VERSION, MODULE_NAME))
    if config_hash is not None and header.get('config_hash') != config_hash:
        raise CheckpointMismatchError(
            'Checkpoint {0} was built for architecture {1}, expected '
            '{2}'.format(path, header.get('config_hash', '')[:12],
                         config_hash[:12]))
    return header, blob['state']


def restore(groups, state, names=None):
    """Load group states into modules.

    :param groups: ``{group name: module}``.
    :param state: ``{group name: state_dict}`` from :func:`load_checkpoint`.
    :param names: Groups to restore; all groups present in ``state`` by
        default.
    :raises CheckpointMismatchError: If a requested group is missing.
    """
    names = sorted(state) if names is None else names
    for name in names:
        if name not in state:
            raise CheckpointMismatchError(
                'Checkpoint has no parameter group {0!r}'.format(name))
        groups[name].load_state_dict(state[name])
