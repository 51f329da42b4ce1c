# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Tests for shared layers and validators."""

import numpy as np
import pytest
import torch

from cola_world.layers import Attention, STBlock, causal_mask, patchify, \
    sinusoidal_embedding, unpatchify
from cola_world.validators import validate_clip, validate_patch_size, \
    validate_same_shape, validate_sequence_length


def test_validators():
    """Validators accept valid inputs and reject the rest."""
    validate_patch_size(16, 16, 4)
    with pytest.raises(ValueError):
        validate_patch_size(16, 18, 4)
    with pytest.raises(ValueError):
        validate_patch_size(16, 16, 0)

    validate_clip(np.zeros((1, 2, 4, 4, 3)), min_frames=2)
    with pytest.raises(ValueError):
        validate_clip(np.zeros((2, 4, 4, 3)))
    with pytest.raises(ValueError):
        validate_clip(np.zeros((1, 1, 4, 4, 3)), min_frames=2)

    with pytest.raises(ValueError):
        validate_same_shape(np.zeros((2, 3)), np.zeros((3, 2)))
    validate_sequence_length(torch.zeros(1, 3, 2, 4), clip_frames=4)
    with pytest.raises(ValueError):
        validate_sequence_length(torch.zeros(1, 3, 2, 4), clip_frames=3)


def test_patchify_layout():
    """Patches are read row-major and restored exactly."""
    frames = torch.arange(8 * 8 * 3, dtype=torch.float32).reshape(8, 8, 3)
    patches = patchify(frames, 4)
    assert tuple(patches.shape) == (4, 48)
    assert torch.equal(patches[1, :3], frames[0, 4])
    assert torch.equal(unpatchify(patches, 4, 8, 8), frames)


def test_causal_mask():
    """Only later positions are blocked."""
    mask = causal_mask(3)
    assert mask.tolist() == [[False, True, True],
                             [False, False, True],
                             [False, False, False]]


def test_sinusoidal_embedding():
    """Embeddings have the requested width, padded when odd."""
    assert tuple(sinusoidal_embedding(torch.tensor([0.0, 0.5]), 6).shape) \
        == (2, 6)
    odd = sinusoidal_embedding(torch.tensor([1.0]), 5)
    assert tuple(odd.shape) == (1, 5)
    assert odd[0, -1] == 0.0


def test_attention_rejects_uneven_heads():
    """Width must split evenly across heads."""
    with pytest.raises(ValueError):
        Attention(10, 3)


def test_st_block_is_causal_in_time():
    """Perturbing a late frame leaves earlier frames untouched."""
    torch.manual_seed(0)
    block = STBlock(16, 2).eval()
    x = torch.randn(2, 4, 5, 16)
    y = x.clone()
    y[:, 2:] += torch.randn(2, 2, 5, 16)
    with torch.no_grad():
        out_x, out_y = block(x), block(y)
    assert torch.equal(out_x[:, :2], out_y[:, :2])
    assert not torch.allclose(out_x[:, 2:], out_y[:, 2:])
