# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Latent action model.

The inverse dynamics model (IDM) reads a frame pair and emits ``G`` latent
vectors. A vector-quantized bottleneck snaps each of them to one of ``K``
codebook entries. The forward dynamics model (FDM) predicts the next frame
from the current frame and the quantized latents; it is only trained by the
two-stage baseline.
"""

import dataclasses

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange, repeat

from .layers import Attention, PatchEmbed, STBlock, TransformerBlock, \
    init_weights, unpatchify
from .validators import validate_clip


@dataclasses.dataclass
class LamLossTerms:
    """Loss terms of the latent action model."""

    recon: torch.Tensor
    vq: torch.Tensor
    commit: torch.Tensor
    total: torch.Tensor

    @classmethod
    def compose(cls, recon, vq, commit, vq_weight=1.0, commit_weight=0.25):
        """Combine the terms into ``recon + vq_weight * vq + ...``."""
        return cls(recon, vq, commit,
                   recon + vq_weight * vq + commit_weight * commit)

    def to_dict(self):
        """Scalar values of the terms."""
        return {k: float(getattr(self, k))
                for k in ('recon', 'vq', 'commit', 'total')}


@dataclasses.dataclass
class LatentAction:
    """Quantized latent actions of a batch of transitions.

    ``embeddings`` are exact codebook rows; ``quantized`` carries the same
    values through the straight-through surrogate so gradients reach the
    encoder.
    """

    indices: torch.Tensor
    embeddings: torch.Tensor
    quantized: torch.Tensor
    pre_quant: torch.Tensor
    vq: torch.Tensor
    commit: torch.Tensor


def nearest_codes(flat, codebook):
    """Index of the nearest codebook row of every vector, lowest on ties."""
    distances = (flat[:, None, :] - codebook[None, :, :]).pow(2).sum(-1)
    return torch.argmin(distances, dim=1)


def vq_quantize(pre_quant, codebook, usage=None):
    """Snap latents of shape ``(..., D)`` to their nearest codebook rows.

    :param pre_quant: Encoder outputs.
    :param codebook: ``(K, D)`` embedding table.
    :param usage: Optional :class:`~cola_world.codebook.CodebookUsage`
        receiving the chosen indices.
    :returns: A :class:`LatentAction`.
    :raises ValueError: If the codebook is empty or the widths differ.
    """
    if codebook.ndim != 2 or codebook.shape[0] == 0:
        raise ValueError('Cannot quantize with an empty codebook')
    if pre_quant.shape[-1] != codebook.shape[1]:
        raise ValueError('Latent width {0} does not match codebook width '
                         '{1}'.format(pre_quant.shape[-1], codebook.shape[1]))
    flat = pre_quant.reshape(-1, codebook.shape[1])
    indices = nearest_codes(flat.detach(), codebook.detach())
    entries = F.embedding(indices, codebook)
    vq = (flat.detach() - entries).pow(2).sum(-1).mean()
    commit = (flat - entries.detach()).pow(2).sum(-1).mean()
    quantized = flat + (entries - flat).detach()
    shape = pre_quant.shape
    if usage is not None:
        usage.update(indices)
    return LatentAction(
        indices=indices.reshape(shape[:-1]),
        embeddings=entries.detach().reshape(shape),
        quantized=quantized.reshape(shape),
        pre_quant=pre_quant,
        vq=vq,
        commit=commit,
    )


class InverseDynamics(nn.Module):
    """ST-Transformer over frame pairs with a learned query per token slot."""

    def __init__(self, image_size, patch_size, width, depth, heads,
                 num_tokens, code_dim, channels=3):
        """Initialize the model."""
        super().__init__()
        n_patches = (image_size // patch_size) ** 2
        self.embed = PatchEmbed(patch_size, width, channels)
        self.spatial_pos = nn.Parameter(torch.zeros(1, 1, n_patches, width))
        self.temporal_pos = nn.Parameter(torch.zeros(1, 2, 1, width))
        self.blocks = nn.ModuleList(
            [STBlock(width, heads) for _ in range(depth)])
        self.norm = nn.LayerNorm(width)
        self.queries = nn.Parameter(torch.zeros(num_tokens, width))
        self.readout = Attention(width, heads)
        self.proj = nn.Linear(width, code_dim)
        self.apply(init_weights)
        for param in (self.spatial_pos, self.temporal_pos, self.queries):
            nn.init.normal_(param, std=0.02)

    def forward(self, clip):
        """``(B, T, H, W, C)`` clip to ``(B, T - 1, G, D)`` latents."""
        validate_clip(clip, min_frames=2)
        batch = clip.shape[0]
        pairs = torch.stack([clip[:, :-1], clip[:, 1:]], dim=2)
        pairs = rearrange(pairs, 'b n f h w c -> (b n) f h w c')
        x = self.embed(pairs) + self.spatial_pos + self.temporal_pos
        for block in self.blocks:
            x = block(x)
        features = rearrange(self.norm(x), 'n f s d -> n (f s) d')
        queries = repeat(self.queries, 'g d -> n g d', n=len(features))
        latents = self.proj(self.readout(queries, context=features))
        return rearrange(latents, '(b n) g d -> b n g d', b=batch)


class VectorQuantizer(nn.Module):
    """The ``K x D`` codebook, trained through the vq loss."""

    def __init__(self, num_codes, code_dim):
        """Initialize a standard normal codebook."""
        super().__init__()
        self.codebook = nn.Embedding(num_codes, code_dim)

    @property
    def num_codes(self):
        """Codebook size ``K``."""
        return self.codebook.num_embeddings

    def forward(self, pre_quant, usage=None):
        """Quantize, see :func:`vq_quantize`."""
        return vq_quantize(pre_quant, self.codebook.weight, usage=usage)

    def lookup(self, indices):
        """Codebook rows of integer indices."""
        return self.codebook(indices)


class ForwardDynamics(nn.Module):
    """Spatial transformer over frame patches and latent action tokens.

    The head predicts a residual over the current frame; the prediction is
    clamped to ``[0, 1]``.
    """

    def __init__(self, image_size, patch_size, width, depth, heads,
                 num_tokens, code_dim, channels=3):
        """Initialize the model."""
        super().__init__()
        self.image_size = image_size
        self.patch_size = patch_size
        n_patches = (image_size // patch_size) ** 2
        self.embed = PatchEmbed(patch_size, width, channels)
        self.pos = nn.Parameter(torch.zeros(1, n_patches, width))
        self.action_in = nn.Linear(code_dim, width)
        self.action_pos = nn.Parameter(torch.zeros(1, num_tokens, width))
        self.blocks = nn.ModuleList(
            [TransformerBlock(width, heads) for _ in range(depth)])
        self.norm = nn.LayerNorm(width)
        self.head = nn.Linear(width, patch_size * patch_size * channels)
        self.apply(init_weights)
        nn.init.normal_(self.pos, std=0.02)
        nn.init.normal_(self.action_pos, std=0.02)

    def forward(self, frames, latents):
        """Predict ``(B, H, W, C)`` next frames from ``(B, G, D)`` latents."""
        tokens = self.embed(frames) + self.pos
        n_patches = tokens.shape[1]
        x = torch.cat([tokens, self.action_in(latents) + self.action_pos], 1)
        for block in self.blocks:
            x = block(x)
        residual = unpatchify(self.head(self.norm(x[:, :n_patches])),
                              self.patch_size, frames.shape[1],
                              frames.shape[2])
        return (frames + residual).clamp(0.0, 1.0)


class LatentActionModel(nn.Module):
    """IDM, quantizer and FDM as three parameter groups."""

    def __init__(self, image_size, patch_size=4, width=128, depth=4, heads=4,
                 fdm_depth=4, num_codes=16, code_dim=16, num_tokens=2,
                 vq_weight=1.0, commit_weight=0.25, channels=3):
        """Initialize the model."""
        super().__init__()
        self.num_tokens = num_tokens
        self.code_dim = code_dim
        self.vq_weight = vq_weight
        self.commit_weight = commit_weight
        self.idm = InverseDynamics(image_size, patch_size, width, depth,
                                   heads, num_tokens, code_dim, channels)
        self.quantizer = VectorQuantizer(num_codes, code_dim)
        self.fdm = ForwardDynamics(image_size, patch_size, width, fdm_depth,
                                   heads, num_tokens, code_dim, channels)

    @classmethod
    def from_config(cls, config):
        """Build the model of an :class:`~cola_world.schema.ExperimentConfig`.
        """
        lam = config.lam
        return cls(config.env.image_size, patch_size=lam.patch_size,
                   width=lam.width, depth=lam.depth, heads=lam.heads,
                   fdm_depth=lam.fdm_depth, num_codes=lam.num_codes,
                   code_dim=lam.code_dim, num_tokens=lam.num_tokens,
                   vq_weight=lam.vq_weight, commit_weight=lam.commit_weight)

    @property
    def num_codes(self):
        """Codebook size ``K``."""
        return self.quantizer.num_codes

    def parameter_groups(self):
        """Modules owning each parameter group."""
        return {'idm': self.idm, 'quantizer': self.quantizer,
                'fdm': self.fdm}

    def encode(self, clip):
        """Pre-quantization latents ``(B, T - 1, G, D)``."""
        return self.idm(clip)

    def infer(self, clip, usage=None):
        """Encode and quantize the transitions of a clip."""
        return self.quantizer(self.encode(clip), usage=usage)

    def predict_next(self, frames, latents):
        """FDM prediction of the frame following each of ``frames``."""
        return self.fdm(frames, latents)

    def lam_loss(self, clip, usage=None):
        """Reconstruction objective of the two-stage baseline.

        :returns: ``(LamLossTerms, LatentAction)``.
        """
        latent = self.infer(clip, usage=usage)
        current = rearrange(clip[:, :-1], 'b n h w c -> (b n) h w c')
        target = rearrange(clip[:, 1:], 'b n h w c -> (b n) h w c')
        quantized = rearrange(latent.quantized, 'b n g d -> (b n) g d')
        recon = F.mse_loss(self.predict_next(current, quantized), target)
        terms = LamLossTerms.compose(recon, latent.vq, latent.commit,
                                     self.vq_weight, self.commit_weight)
        return terms, latent
