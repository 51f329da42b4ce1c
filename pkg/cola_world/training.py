# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Phase engine.

A phase trains the parameter groups of its :class:`~cola_world.phases.
FreezeMask` and nothing else. After the phase every excluded group must be
bit-identical to its value at phase start; any drift aborts the run.
"""

import dataclasses
import logging
import time
from typing import List, Optional

import torch
import torch.nn.functional as F
from einops import rearrange

from . import phases
from .checkpoints import group_digests, load_checkpoint, restore, \
    save_checkpoint
from .codebook import CodebookUsage
from .errors import CollapseAlarmError, FreezeDriftError
from .phases import COLLAPSE_EXPECTED, PhaseKind
from .seeds import derive_seed, torch_generator
from .store import ClipSampler
from .telemetry import TelemetryRecord, TelemetryWriter
from .validators import validate_clip
from .worldmodel import sample_action_mask

logger = logging.getLogger(__name__)

freeze_mask = phases.freeze_mask


@dataclasses.dataclass
class CollapseAlarm:
    """A window of telemetry in which the codebook stayed degenerate."""

    step: int
    reason: str
    max_usage: List[float]
    utilization: List[float]
    max_usage_threshold: float
    utilization_floor: float

    def to_dict(self):
        """Plain dictionary form."""
        return dataclasses.asdict(self)


@dataclasses.dataclass
class PhaseResult:
    """Outcome of :func:`run_phase`."""

    phase_kind: PhaseKind
    steps: int
    records: List[TelemetryRecord]
    alarm: Optional[CollapseAlarm]
    digests: dict
    header: Optional[dict] = None


def lr_at(step, config):
    """Learning rate of a phase at ``step``.

    >>> from cola_world.schema import load_config
    >>> phase = load_config().phase('WARMUP')
    >>> lr_at(0, phase)
    0.0
    """
    return phases.lr_at(step, config.lr, config.lr_warmup_steps)


def _codebook(record):
    if isinstance(record, dict):
        return record.get('codebook'), record['step']
    return record.codebook, record.step


def collapse_detector(records, num_codes, window=50, max_usage=0.9,
                      utilization_floor=None):
    """Alarm when the codebook stays degenerate over the last ``window``.

    The codebook counts as degenerate while its max usage is at least
    ``max_usage``, or while its utilization is at most
    ``utilization_floor`` (``2 / num_codes`` by default).

    :param records: Telemetry records or their dictionaries.
    :raises ValueError: If fewer than ``window`` records are given.
    :returns: A :class:`CollapseAlarm` or ``None``.
    """
    if len(records) < window:
        raise ValueError('collapse_detector needs at least {0} records, got '
                         '{1}'.format(window, len(records)))
    floor = 2.0 / num_codes if utilization_floor is None \
        else utilization_floor
    tail = [_codebook(r) for r in records[-window:]]
    if any(codebook is None for codebook, _ in tail):
        return None
    usage = [c['max_usage'] for c, _ in tail]
    utilization = [c['utilization'] for c, _ in tail]
    if all(u >= max_usage for u in usage):
        reason = 'max_usage'
    elif all(u <= floor for u in utilization):
        reason = 'utilization'
    else:
        return None
    return CollapseAlarm(tail[-1][1], reason, usage, utilization, max_usage,
                         floor)


def random_crop(clip, out_size, generator=None, resize_to=None):
    """Crop every clip of a batch at one offset shared by its frames.

    :param clip: ``(B, T, H, W, C)`` tensor.
    :param out_size: Side of the square crop.
    :param generator: Source of the offsets.
    :param resize_to: Resize crops back to this side with bilinear
        interpolation.
    :raises ValueError: If the crop is larger than the frames.
    """
    validate_clip(clip)
    height, width = clip.shape[2], clip.shape[3]
    if out_size > height or out_size > width:
        raise ValueError('Crop of {0} pixels exceeds {1}x{2} frames'.format(
            out_size, height, width))
    batch = clip.shape[0]
    tops = torch.randint(height - out_size + 1, (batch,), generator=generator)
    lefts = torch.randint(width - out_size + 1, (batch,), generator=generator)
    crops = torch.stack([
        clip[i, :, top:top + out_size, left:left + out_size]
        for i, (top, left) in enumerate(zip(tops.tolist(), lefts.tolist()))])
    if resize_to is None or resize_to == out_size:
        return crops
    frames = rearrange(crops, 'b t h w c -> (b t) c h w')
    frames = F.interpolate(frames, size=(resize_to, resize_to),
                           mode='bilinear', align_corners=False)
    return rearrange(frames, '(b t) c h w -> b t h w c', b=batch)


def model_groups(lam, wm):
    """All five parameter groups of a model pair."""
    groups = dict(lam.parameter_groups())
    groups.update(wm.parameter_groups())
    return groups


def set_trainable(groups, mask):
    """Enable gradients exactly for the groups of ``mask``."""
    for name, module in groups.items():
        module.requires_grad_(name in mask)


def apply_init_from(init_from, groups, config_hash):
    """Restore groups named by a phase's ``init_from`` references.

    The key ``'all'`` restores every group stored in the checkpoint.
    """
    for name, path in sorted(init_from.items()):
        _, state = load_checkpoint(path, config_hash=config_hash)
        restore(groups, state, None if name == 'all' else [name])


def phase_losses(kind, batch, lam, wm, usage, generator, p_drop):
    """Objective of one step of a phase.

    :returns: ``(total loss, {term: value})``.
    """
    if kind == PhaseKind.TWO_STAGE_LAM:
        terms, _ = lam.lam_loss(batch, usage=usage)
        return terms.total, terms.to_dict()
    if kind == PhaseKind.PRETRAIN_WM:
        flow = wm.flow_loss(batch, None, generator=generator)
        return flow, {'flow': float(flow), 'total': float(flow)}
    drop = sample_action_mask(batch.shape[0], batch.shape[1] - 1, p_drop,
                              generator)
    if not freeze_mask(kind).trains_lam:
        with torch.no_grad():
            latent = lam.infer(batch, usage=usage)
        flow = wm.flow_loss(batch, latent.embeddings, drop, generator)
        return flow, {'flow': float(flow), 'total': float(flow)}
    latent = lam.infer(batch, usage=usage)
    flow = wm.flow_loss(batch, latent.quantized, drop, generator)
    total = flow + lam.vq_weight * latent.vq + \
        lam.commit_weight * latent.commit
    return total, {'flow': float(flow), 'vq': float(latent.vq),
                   'commit': float(latent.commit), 'total': float(total)}


def run_phase(phase, lam, wm, clips, config, seed=0, checkpoint_path=None,
              telemetry_path=None, header=None, log_every=50):
    """Train one phase.

    :param phase: The :class:`~cola_world.schema.PhaseConfig`.
    :param lam: :class:`~cola_world.lam.LatentActionModel`.
    :param wm: :class:`~cola_world.worldmodel.WorldModel`.
    :param clips: ``(E, L, H, W, C)`` training episodes.
    :param config: The :class:`~cola_world.schema.ExperimentConfig`.
    :param seed: Phase seed; data order, crops, noise and drop flags derive
        from it.
    :param checkpoint_path: Where to save all five groups afterwards.
    :param telemetry_path: Where to write one JSON line per step.
    :param header: Extra checkpoint header fields.
    :param log_every: Progress log interval in steps.
    :raises FreezeDriftError: If a group excluded from training changed.
    :raises CollapseAlarmError: If the codebook collapses in a phase where
        collapse is not expected and aborting is enabled.
    """
    kind = PhaseKind(phase.phase_kind)
    mask = phase.mask
    training = config.training
    groups = model_groups(lam, wm)
    if phase.init_from:
        apply_init_from(phase.init_from, groups, config.model_hash())
    set_trainable(groups, mask)
    frozen_before = group_digests(
        {name: groups[name] for name in mask.frozen})

    params = [p for name in sorted(mask) for p in groups[name].parameters()]
    optimizer = torch.optim.AdamW(params, lr=phase.lr, betas=training.betas,
                                  weight_decay=training.weight_decay)
    sampler = ClipSampler(clips, training.clip_length,
                          derive_seed(seed, kind.value, 'data'))
    generator = torch_generator(seed, kind.value, 'noise')
    usage = CodebookUsage(lam.num_codes, config.lam.usage_window)
    floor = config.codebook_utilization_floor
    image_size = config.env.image_size
    config_digest = config.digest()
    records, alarm = [], None
    writer = TelemetryWriter(telemetry_path) if telemetry_path else None
    lam.train()
    wm.train()
    started = time.time()
    completed = False
    try:
        for step in range(phase.steps):
            lr = lr_at(step, phase)
            for group in optimizer.param_groups:
                group['lr'] = lr
            batch = sampler.sample(phase.batch_size)
            if phase.augment_random_crop:
                batch = random_crop(batch, training.crop_size, generator,
                                    resize_to=image_size)
            total, losses = phase_losses(kind, batch, lam, wm, usage,
                                         generator, config.wm.p_drop)
            optimizer.zero_grad(set_to_none=True)
            total.backward()
            torch.nn.utils.clip_grad_norm_(params, training.grad_clip)
            optimizer.step()

            codebook = usage.stats().to_dict() if usage.steps else None
            record = TelemetryRecord(
                step=step, phase_kind=kind.value, lr=lr, losses=losses,
                codebook=codebook,
                wall_time=(time.time() - started
                           if training.record_wall_time else 0.0),
                config_digest=config_digest, seed=seed)
            records.append(record)
            if writer:
                writer.write(record)
            if log_every and (step + 1) % log_every == 0:
                logger.info('%s step %d/%d loss %.5f lr %.2e', kind.value,
                            step + 1, phase.steps, losses['total'], lr)
            if alarm is None and len(records) >= training.collapse_window:
                alarm = collapse_detector(
                    records, lam.num_codes, training.collapse_window,
                    training.collapse_max_usage, floor)
                if alarm is not None:
                    logger.warning('%s codebook collapse at step %d (%s)',
                                   kind.value, alarm.step, alarm.reason)
                    if kind not in COLLAPSE_EXPECTED and mask.trains_lam \
                            and training.abort_on_unexpected_collapse:
                        raise CollapseAlarmError(alarm)

        digests = group_digests(groups)
        drifted = [name for name, digest in frozen_before.items()
                   if digests[name] != digest]
        if drifted:
            raise FreezeDriftError(drifted)
        completed = True
    finally:
        # Aborted phases publish no telemetry.
        if writer:
            writer.close(commit=completed)
        lam.eval()
        wm.eval()

    written = None
    if checkpoint_path:
        written = save_checkpoint(
            checkpoint_path, groups, config_hash=config.model_hash(),
            config_digest=config_digest, phase_kind=kind.value,
            step=phase.steps, seed=seed, **(header or {}))
    return PhaseResult(kind, phase.steps, records, alarm, digests, written)
