# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Transformer building blocks shared by the latent action and world models."""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from .validators import validate_patch_size


def patchify(frames, patch_size):
    """Split ``(..., H, W, C)`` frames into ``(..., N, p * p * C)`` patches.

    :raises ValueError: If ``H`` or ``W`` is not divisible by the patch size.
    """
    height, width = frames.shape[-3], frames.shape[-2]
    validate_patch_size(height, width, patch_size)
    return rearrange(frames, '... (h p1) (w p2) c -> ... (h w) (p1 p2 c)',
                     p1=patch_size, p2=patch_size)


def unpatchify(tokens, patch_size, height, width):
    """Inverse of :func:`patchify`."""
    validate_patch_size(height, width, patch_size)
    return rearrange(tokens, '... (h w) (p1 p2 c) -> ... (h p1) (w p2) c',
                     h=height // patch_size, p1=patch_size, p2=patch_size)


def causal_mask(length, device=None):
    """Boolean mask blocking attention to later positions."""
    return torch.triu(torch.ones(length, length, dtype=torch.bool,
                                 device=device), diagonal=1)


def sinusoidal_embedding(positions, dim, max_period=10000):
    """Sine/cosine features of (possibly fractional) positions."""
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) *
                      torch.arange(half, dtype=torch.float32) / half)
    args = positions.float()[..., None] * freqs.to(positions.device)
    embedding = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        embedding = F.pad(embedding, (0, 1))
    return embedding


class Attention(nn.Module):
    """Multi-head attention with an optional boolean block mask.

    With ``context`` given the layer cross-attends from ``x`` to it.
    """

    def __init__(self, width, heads):
        """Initialize the layer."""
        super().__init__()
        if width % heads:
            raise ValueError('width must be divisible by heads')
        self.heads = heads
        self.head_dim = width // heads
        self.q = nn.Linear(width, width, bias=False)
        self.k = nn.Linear(width, width, bias=False)
        self.v = nn.Linear(width, width, bias=False)
        self.out = nn.Linear(width, width)

    def forward(self, x, context=None, mask=None):
        """Attend; ``mask`` is ``True`` where attention is blocked."""
        context = x if context is None else context
        q = rearrange(self.q(x), 'b n (h d) -> b h n d', h=self.heads)
        k = rearrange(self.k(context), 'b n (h d) -> b h n d', h=self.heads)
        v = rearrange(self.v(context), 'b n (h d) -> b h n d', h=self.heads)
        attn = (q * self.head_dim ** -0.5) @ k.transpose(-2, -1)
        if mask is not None:
            attn = attn.masked_fill(mask, float('-inf'))
        attn = F.softmax(attn, dim=-1)
        return self.out(rearrange(attn @ v, 'b h n d -> b n (h d)'))


class Mlp(nn.Sequential):
    """Two-layer GELU perceptron."""

    def __init__(self, width, ratio=4):
        """Initialize the layer."""
        super().__init__(
            nn.Linear(width, ratio * width),
            nn.GELU(),
            nn.Linear(ratio * width, width),
        )


class TransformerBlock(nn.Module):
    """Pre-norm self-attention block."""

    def __init__(self, width, heads):
        """Initialize the block."""
        super().__init__()
        self.norm1 = nn.LayerNorm(width)
        self.attn = Attention(width, heads)
        self.norm2 = nn.LayerNorm(width)
        self.mlp = Mlp(width)

    def forward(self, x, mask=None):
        """Apply the block to ``(B, N, width)`` tokens."""
        x = x + self.attn(self.norm1(x), mask=mask)
        return x + self.mlp(self.norm2(x))


class STBlock(nn.Module):
    """Spatial attention within frames, causal attention across frames."""

    def __init__(self, width, heads):
        """Initialize the block."""
        super().__init__()
        self.norm_spatial = nn.LayerNorm(width)
        self.spatial_attn = Attention(width, heads)
        self.norm_temporal = nn.LayerNorm(width)
        self.temporal_attn = Attention(width, heads)
        self.norm_mlp = nn.LayerNorm(width)
        self.mlp = Mlp(width)

    def forward(self, x):
        """Apply the block to ``(B, T, S, width)`` tokens."""
        frames = x.shape[1]
        x_s = rearrange(x, 'b t s d -> (b t) s d')
        x_s = x_s + self.spatial_attn(self.norm_spatial(x_s))
        x_t = rearrange(x_s, '(b t) s d -> (b s) t d', t=frames)
        x_t = x_t + self.temporal_attn(
            self.norm_temporal(x_t), mask=causal_mask(frames, x.device))
        x = rearrange(x_t, '(b s) t d -> b t s d', s=x.shape[2])
        return x + self.mlp(self.norm_mlp(x))


class PatchEmbed(nn.Module):
    """Patchify frames and project patches to the model width."""

    def __init__(self, patch_size, width, channels=3):
        """Initialize the layer."""
        super().__init__()
        self.patch_size = patch_size
        self.proj = nn.Linear(patch_size * patch_size * channels, width)

    def forward(self, frames):
        """``(..., H, W, C)`` frames to ``(..., N, width)`` tokens."""
        return self.proj(patchify(frames, self.patch_size))


def init_weights(module):
    """Xavier-uniform linear layers with zero bias."""
    if isinstance(module, nn.Linear):
        nn.init.xavier_uniform_(module.weight)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
