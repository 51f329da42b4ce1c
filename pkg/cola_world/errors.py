# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Errors raised by CoLA-World.

Every error carries the exit code the command line reports for it.
"""


class ColaWorldError(Exception):
    """Base class for CoLA-World errors."""

    exit_code = 1

    def to_record(self):
        """Return a machine-readable description of the error."""
        return {
            'error': type(self).__name__,
            'message': str(self),
            'exit_code': self.exit_code,
        }


class ConfigError(ColaWorldError, ValueError):
    """Invalid experiment configuration.

    :param message: Human readable summary.
    :param fields: Dotted paths of the offending fields.
    """

    exit_code = 2

    def __init__(self, message, fields=None):
        """Initialize the error."""
        super(ConfigError, self).__init__(message)
        self.fields = list(fields or [])

    def to_record(self):
        """Return a machine-readable description including field paths."""
        record = super(ConfigError, self).to_record()
        record['fields'] = self.fields
        return record


class ManifestConflictError(ColaWorldError):
    """A dataset manifest exists with a different environment config."""

    exit_code = 2


class ContractViolation(ColaWorldError):
    """A training or evaluation contract was broken."""

    exit_code = 3


class FreezeDriftError(ContractViolation):
    """A parameter group excluded from training changed."""

    def __init__(self, groups):
        """Initialize the error with the drifted group names."""
        self.groups = sorted(groups)
        super(FreezeDriftError, self).__init__(
            'Frozen parameter groups drifted: {0}'.format(
                ', '.join(self.groups)))


class CollapseAlarmError(ContractViolation):
    """Codebook collapse in a phase where collapse is not expected."""

    def __init__(self, alarm):
        """Initialize the error from a collapse alarm."""
        self.alarm = alarm
        super(CollapseAlarmError, self).__init__(
            'Codebook collapse detected at step {0} ({1})'.format(
                alarm.step, alarm.reason))


class CheckpointMismatchError(ContractViolation):
    """A checkpoint was produced by an incompatible configuration."""


class IncompatibleArtifactError(ContractViolation):
    """Artifacts produced from different environments were mixed."""


class MissingArtifactError(ColaWorldError, FileNotFoundError):
    """A required upstream artifact does not exist."""

    exit_code = 4


class ActionBoundsError(ColaWorldError, ValueError):
    """An action lies outside the bounds of its embodiment."""


class ActionsHiddenError(ColaWorldError, PermissionError):
    """Actions were requested from an action-free dataset."""
