# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Atomic file output and digests."""

import hashlib
import json
import os
import tempfile


def file_digest(path):
    """SHA-256 of a file's bytes."""
    sha = hashlib.sha256()
    with open(path, 'rb') as fp:
        for chunk in iter(lambda: fp.read(1 << 20), b''):
            sha.update(chunk)
    return sha.hexdigest()


def atomic_write_bytes(path, data):
    """Write ``data`` to ``path`` through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix='.tmp-')
    try:
        with os.fdopen(fd, 'wb') as fp:
            fp.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(obj):
    """Canonical, human-readable JSON text."""
    return json.dumps(obj, sort_keys=True, indent=2) + '\n'


def atomic_write_json(path, obj):
    """Atomically write ``obj`` as canonical JSON."""
    atomic_write_bytes(path, dumps_json(obj).encode('utf-8'))


def read_json(path):
    """Load a JSON document."""
    with open(path, 'rt') as fp:
        return json.load(fp)
