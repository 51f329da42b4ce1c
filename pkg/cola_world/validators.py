# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Validators for clips, frames and model inputs."""


def validate_patch_size(height, width, patch_size):
    """Validate that a frame can be cut into square patches.

    :param height: Frame height in pixels.
    :param width: Frame width in pixels.
    :param patch_size: Side of a square patch.
    :raises ValueError: If either side is not divisible by ``patch_size``.
    """
    if patch_size < 1 or height % patch_size or width % patch_size:
        raise ValueError(
            'Frame of {0}x{1} pixels is not divisible into {2}x{2} '
            'patches.'.format(height, width, patch_size))


def validate_clip(clip, min_frames=1):
    """Validate a batched clip of shape ``(B, T, H, W, C)``.

    :param clip: Array or tensor.
    :param min_frames: Minimum number of frames ``T``.
    :raises ValueError: If the rank or the number of frames is wrong.
    """
    if clip.ndim != 5:
        raise ValueError(
            'Expected a clip batch of shape (B, T, H, W, C), got {0}.'.format(
                tuple(clip.shape)))
    if clip.shape[1] < min_frames:
        raise ValueError(
            'Clip has {0} frames, at least {1} required.'.format(
                clip.shape[1], min_frames))


def validate_same_shape(first, second):
    """Validate that two arrays have the same shape.

    :raises ValueError: If the shapes differ.
    """
    if tuple(first.shape) != tuple(second.shape):
        raise ValueError('Shape mismatch: {0} vs {1}.'.format(
            tuple(first.shape), tuple(second.shape)))


def validate_sequence_length(latents, clip_frames):
    """Validate that a latent sequence has one entry per transition.

    :param latents: Tensor whose second dimension indexes transitions.
    :param clip_frames: Number of frames of the clip it conditions.
    :raises ValueError: If ``latents`` does not hold ``clip_frames - 1``
        transitions.
    """
    if latents.shape[1] != clip_frames - 1:
        raise ValueError(
            'Expected {0} latent actions for a {1}-frame clip, got '
            '{2}.'.format(clip_frames - 1, clip_frames, latents.shape[1]))
