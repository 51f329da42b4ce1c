# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Per-step training telemetry as JSON lines."""

import dataclasses
import hashlib
import json
import os
import tempfile
from typing import Dict, Optional


@dataclasses.dataclass
class TelemetryRecord:
    """Metrics of one optimizer step."""

    step: int
    phase_kind: str
    lr: float
    losses: Dict[str, float]
    codebook: Optional[Dict[str, float]]
    wall_time: float
    config_digest: Optional[str] = None
    seed: Optional[int] = None

    def to_json(self):
        """One line of canonical JSON."""
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


class TelemetryWriter(object):
    """Single writer of a telemetry file.

    Lines go to a temporary file that replaces ``path`` on close, so readers
    never see a partial phase. Closing with ``commit=False`` discards
    the lines.
    """

    def __init__(self, path):
        """Open the writer."""
        self.path = path
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        fd, self._tmp = tempfile.mkstemp(dir=directory, prefix='.tmp-')
        self._fp = os.fdopen(fd, 'wt')
        self.count = 0

    def write(self, record):
        """Append one record."""
        self._fp.write(record.to_json() + '\n')
        self.count += 1

    def close(self, commit=True):
        """Close the file, publishing it unless ``commit`` is false."""
        self._fp.close()
        if commit:
            os.replace(self._tmp, self.path)
        elif os.path.exists(self._tmp):
            os.unlink(self._tmp)


def read_telemetry(path):
    """Records of a telemetry file as dictionaries."""
    with open(path, 'rt') as fp:
        return [json.loads(line) for line in fp if line.strip()]


def telemetry_digest(path):
    """SHA-256 of a telemetry file, ignoring ``wall_time``."""
    sha = hashlib.sha256()
    for record in read_telemetry(path):
        record.pop('wall_time', None)
        sha.update(json.dumps(record, sort_keys=True).encode('utf-8'))
        sha.update(b'\n')
    return sha.hexdigest()
