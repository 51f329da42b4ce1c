# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Training regimes and the parameter groups each of them may update."""

import enum

PARAMETER_GROUPS = ('idm', 'quantizer', 'fdm', 'wm_backbone', 'wm_action_cond')
"""Names of the parameter groups a phase can train."""

LAM_GROUPS = frozenset(['idm', 'quantizer'])
"""Groups whose training turns on random-crop augmentation."""


class PhaseKind(str, enum.Enum):
    """Named training regimes."""

    PRETRAIN_WM = 'PRETRAIN_WM'
    TWO_STAGE_LAM = 'TWO_STAGE_LAM'
    TWO_STAGE_WM = 'TWO_STAGE_WM'
    NAIVE_JOINT = 'NAIVE_JOINT'
    WARMUP = 'WARMUP'
    JOINT_E2E = 'JOINT_E2E'
    ABLATE_PURE_WARMUP = 'ABLATE_PURE_WARMUP'
    ABLATE_FROZEN_LAM = 'ABLATE_FROZEN_LAM'


_FREEZE_TABLE = {
    PhaseKind.PRETRAIN_WM: ('wm_backbone',),
    PhaseKind.TWO_STAGE_LAM: ('idm', 'quantizer', 'fdm'),
    PhaseKind.TWO_STAGE_WM: ('wm_backbone', 'wm_action_cond'),
    PhaseKind.NAIVE_JOINT: (
        'idm', 'quantizer', 'wm_backbone', 'wm_action_cond'),
    PhaseKind.JOINT_E2E: (
        'idm', 'quantizer', 'wm_backbone', 'wm_action_cond'),
    PhaseKind.WARMUP: ('idm', 'quantizer', 'wm_action_cond'),
    PhaseKind.ABLATE_PURE_WARMUP: ('idm', 'quantizer', 'wm_action_cond'),
    PhaseKind.ABLATE_FROZEN_LAM: ('wm_backbone', 'wm_action_cond'),
}

COLLAPSE_EXPECTED = frozenset([PhaseKind.NAIVE_JOINT])
"""Phases in which a collapse alarm is part of the studied behaviour."""


class FreezeMask(frozenset):
    """Set of trainable parameter-group names."""

    @property
    def frozen(self):
        """Groups excluded from training."""
        return frozenset(PARAMETER_GROUPS) - self

    @property
    def trains_lam(self):
        """Whether the IDM or the quantizer receive updates."""
        return bool(self & LAM_GROUPS)

    @property
    def uses_lam_loss(self):
        """Whether the phase optimizes the FDM reconstruction objective."""
        return 'fdm' in self

    @property
    def uses_world_model(self):
        """Whether the phase optimizes the flow matching objective."""
        return bool(self & {'wm_backbone', 'wm_action_cond'})


def freeze_mask(phase_kind):
    """Return the trainable parameter groups of a phase.

    >>> sorted(freeze_mask('WARMUP'))
    ['idm', 'quantizer', 'wm_action_cond']

    :param phase_kind: A :class:`PhaseKind` or its name.
    :raises ValueError: If the phase is unknown.
    """
    try:
        kind = PhaseKind(phase_kind)
    except ValueError:
        raise ValueError('Unknown phase kind: {0!r}'.format(phase_kind))
    return FreezeMask(_FREEZE_TABLE[kind])


def lr_at(step, lr, lr_warmup_steps):
    """Learning rate of a linear warm-up followed by a constant rate.

    >>> lr_at(50, 1e-3, 100)
    0.0005

    :param step: Optimizer step, starting at zero.
    :param lr: Peak learning rate.
    :param lr_warmup_steps: Length of the linear ramp.
    """
    if step < 0:
        raise ValueError('step must be non-negative')
    if lr_warmup_steps <= 0:
        return lr
    return lr * min(1.0, step / lr_warmup_steps)
