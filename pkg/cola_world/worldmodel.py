# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Action-conditioned video diffusion transformer.

The backbone is a pixel-space DiT with spatial attention inside frames and
causal attention across frames, trained with a rectified-flow velocity
objective: ``xt = (1 - t) x0 + t x1`` and ``v = x1 - x0``. Frame 1 is the
clean conditioning frame.

Latent actions are contextualized by a small causal transformer and turned
into per-block ``(shift, scale, gate)`` offsets that are added to the
timestep modulation. The projection producing these offsets starts at zero,
so an untrained action branch leaves the backbone untouched. Action ``t``
modulates frame ``t + 1``; frame 1 always receives the null action.
"""

import dataclasses

import torch
import torch.nn as nn
from einops import rearrange

from .layers import Attention, Mlp, PatchEmbed, TransformerBlock, \
    causal_mask, init_weights, sinusoidal_embedding, unpatchify
from .seeds import derive_seed
from .validators import validate_clip, validate_sequence_length

SITES = 3
"""Modulated sites per block: spatial attention, temporal attention, MLP."""


@dataclasses.dataclass
class ModulationTriple:
    """Per-block, per-frame ``(shift, scale, gate)`` of every site.

    Both branches have shape ``(B, T, depth, SITES, 3, width)``.
    """

    timestep_branch: torch.Tensor
    action_branch: torch.Tensor

    @property
    def effective(self):
        """Modulation applied by the backbone."""
        return self.timestep_branch + self.action_branch

    @property
    def shift(self):
        """Shift vectors."""
        return self.effective[..., 0, :]

    @property
    def scale(self):
        """Scale vectors."""
        return self.effective[..., 1, :]

    @property
    def gate(self):
        """Gate vectors."""
        return self.effective[..., 2, :]


@dataclasses.dataclass
class DiffusionSample:
    """Noise, data, time and the straight-line interpolant between them."""

    x0: torch.Tensor
    x1: torch.Tensor
    t: torch.Tensor
    xt: torch.Tensor
    v_target: torch.Tensor

    @classmethod
    def create(cls, x0, x1, t):
        """Interpolate; ``t`` broadcasts against the clips."""
        t = torch.as_tensor(t, dtype=x1.dtype)
        return cls(x0, x1, t, (1 - t) * x0 + t * x1, x1 - x0)


def flow_matching_loss(prediction, target):
    """Mean squared velocity error over frames ``2..T``."""
    return (prediction[:, 1:] - target[:, 1:]).pow(2).mean()


def guided_velocity(v_cond, v_null, guidance_scale):
    """Classifier-free guidance ``v_null + s (v_cond - v_null)``."""
    if guidance_scale == 1.0:
        return v_cond
    if guidance_scale == 0.0:
        return v_null
    return v_null + guidance_scale * (v_cond - v_null)


def sample_action_mask(batch, transitions, p_drop, generator=None):
    """Per-transition drop flags, each set with probability ``p_drop``."""
    return torch.rand(batch, transitions, generator=generator) < p_drop


def modulate(x, shift, scale):
    """Apply an adaLN shift and scale."""
    return x * (1 + scale) + shift


class TimestepEmbedder(nn.Module):
    """Sinusoidal features of ``1000 t`` followed by a two-layer MLP."""

    def __init__(self, width, frequency_size=256):
        """Initialize the embedder."""
        super().__init__()
        self.frequency_size = frequency_size
        self.mlp = nn.Sequential(
            nn.Linear(frequency_size, width),
            nn.SiLU(),
            nn.Linear(width, width),
        )

    def forward(self, t):
        """Embed diffusion times of any shape."""
        features = sinusoidal_embedding(1000.0 * t, self.frequency_size)
        return self.mlp(features.to(self.mlp[0].weight.dtype))


class DiTBlock(nn.Module):
    """Spatial attention, causal temporal attention and MLP, each gated."""

    def __init__(self, width, heads):
        """Initialize the block."""
        super().__init__()
        self.norms = nn.ModuleList([
            nn.LayerNorm(width, elementwise_affine=False, eps=1e-6)
            for _ in range(SITES)])
        self.spatial_attn = Attention(width, heads)
        self.temporal_attn = Attention(width, heads)
        self.mlp = Mlp(width)

    def forward(self, x, mod):
        """``(B, T, S, width)`` tokens, ``mod`` of ``(B, T, SITES, 3, width)``.
        """
        frames, tokens = x.shape[1], x.shape[2]
        mod = mod.unsqueeze(2)

        def site(index):
            return (modulate(self.norms[index](x), mod[..., index, 0, :],
                             mod[..., index, 1, :]),
                    mod[..., index, 2, :])

        h, gate = site(0)
        h = rearrange(h, 'b t s d -> (b t) s d')
        h = rearrange(self.spatial_attn(h), '(b t) s d -> b t s d', t=frames)
        x = x + gate * h

        h, gate = site(1)
        h = rearrange(h, 'b t s d -> (b s) t d')
        h = self.temporal_attn(h, mask=causal_mask(frames, x.device))
        x = x + gate * rearrange(h, '(b s) t d -> b t s d', s=tokens)

        h, gate = site(2)
        return x + gate * self.mlp(h)


class FinalLayer(nn.Module):
    """Timestep-modulated projection back to pixel patches."""

    def __init__(self, width, patch_size, channels):
        """Initialize the layer with zero weights."""
        super().__init__()
        self.norm = nn.LayerNorm(width, elementwise_affine=False, eps=1e-6)
        self.adaln = nn.Sequential(nn.SiLU(), nn.Linear(width, 2 * width))
        self.linear = nn.Linear(width, patch_size * patch_size * channels)
        for layer in (self.adaln[-1], self.linear):
            nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)

    def forward(self, x, t_emb):
        """Project ``(B, T, S, width)`` tokens given ``(B, T, width)`` times.
        """
        shift, scale = self.adaln(t_emb).unsqueeze(2).chunk(2, dim=-1)
        return self.linear(modulate(self.norm(x), shift, scale))


class DiffusionBackbone(nn.Module):
    """The ``wm_backbone`` parameter group."""

    def __init__(self, image_size, patch_size, width, depth, heads,
                 max_frames, channels=3):
        """Initialize the backbone."""
        super().__init__()
        self.image_size = image_size
        self.patch_size = patch_size
        self.width = width
        self.depth = depth
        self.max_frames = max_frames
        n_patches = (image_size // patch_size) ** 2
        self.embed = PatchEmbed(patch_size, width, channels)
        self.spatial_pos = nn.Parameter(torch.zeros(1, 1, n_patches, width))
        self.temporal_pos = nn.Parameter(torch.zeros(1, max_frames, 1, width))
        self.t_embed = TimestepEmbedder(width)
        self.blocks = nn.ModuleList(
            [DiTBlock(width, heads) for _ in range(depth)])
        self.adaln = nn.ModuleList([
            nn.Sequential(nn.SiLU(), nn.Linear(width, SITES * 3 * width))
            for _ in range(depth)])
        self.final = FinalLayer(width, patch_size, channels)
        self.blocks.apply(init_weights)
        self.embed.apply(init_weights)
        nn.init.normal_(self.spatial_pos, std=0.02)
        nn.init.normal_(self.temporal_pos, std=0.02)
        for adaln in self.adaln:
            nn.init.zeros_(adaln[-1].weight)
            nn.init.zeros_(adaln[-1].bias)

    def timestep_modulation(self, t):
        """``(B, T)`` times to ``(B, T, depth, SITES, 3, width)``."""
        t_emb = self.t_embed(t)
        return torch.stack([
            rearrange(adaln(t_emb), 'b t (s k d) -> b t s k d', s=SITES, k=3)
            for adaln in self.adaln], dim=2)

    def forward(self, xt, t, modulation, skip_blocks=False):
        """Velocity prediction for ``(B, T, H, W, C)`` noisy clips."""
        frames = xt.shape[1]
        x = self.embed(xt) + self.spatial_pos + \
            self.temporal_pos[:, :frames]
        if not skip_blocks:
            effective = modulation.effective
            for index, block in enumerate(self.blocks):
                x = block(x, effective[:, :, index])
        out = self.final(x, self.t_embed(t))
        return unpatchify(out, self.patch_size, xt.shape[2], xt.shape[3])


class ActionConditioning(nn.Module):
    """The ``wm_action_cond`` parameter group.

    A causal transformer contextualizes the latent action sequence; a
    zero-initialized projection maps each embedding to modulation offsets.
    """

    def __init__(self, num_tokens, code_dim, width, depth, action_depth,
                 action_heads, max_frames):
        """Initialize the conditioning modules."""
        super().__init__()
        self.depth = depth
        self.proj = nn.Linear(num_tokens * code_dim, width)
        self.null = nn.Parameter(torch.zeros(width))
        self.pos = nn.Parameter(torch.zeros(1, max_frames - 1, width))
        self.blocks = nn.ModuleList([
            TransformerBlock(width, action_heads)
            for _ in range(action_depth)])
        self.norm = nn.LayerNorm(width)
        self.to_modulation = nn.Sequential(
            nn.SiLU(), nn.Linear(width, depth * SITES * 3 * width))
        self.proj.apply(init_weights)
        self.blocks.apply(init_weights)
        nn.init.normal_(self.null, std=0.02)
        nn.init.normal_(self.pos, std=0.02)
        nn.init.zeros_(self.to_modulation[-1].weight)
        nn.init.zeros_(self.to_modulation[-1].bias)

    def forward(self, latents, mask):
        """Contextual embeddings ``(B, N, width)`` of ``(B, N, G, D)`` latents.
        """
        transitions = latents.shape[1]
        x = self.proj(rearrange(latents, 'b n g d -> b n (g d)'))
        x = torch.where(mask[..., None].to(x.device), self.null, x)
        x = x + self.pos[:, :transitions]
        attn_mask = causal_mask(transitions, x.device)
        for block in self.blocks:
            x = block(x, mask=attn_mask)
        return self.norm(x)

    def modulation(self, embeddings):
        """Action branch for all frames; frame 1 gets the null action."""
        batch = embeddings.shape[0]
        null = self.null.expand(batch, 1, -1)
        per_frame = torch.cat([null, embeddings], dim=1)
        return rearrange(self.to_modulation(per_frame),
                         'b t (l s k d) -> b t l s k d', l=self.depth,
                         s=SITES, k=3)


class WorldModel(nn.Module):
    """Flow-matching video world model conditioned on latent actions."""

    def __init__(self, image_size, patch_size=4, width=192, depth=6, heads=6,
                 action_depth=2, action_heads=4, max_frames=8, num_tokens=2,
                 code_dim=16, p_drop=0.1, guidance_scale=4.0,
                 denoise_steps=10, channels=3):
        """Initialize the model."""
        super().__init__()
        self.num_tokens = num_tokens
        self.code_dim = code_dim
        self.p_drop = p_drop
        self.guidance_scale = guidance_scale
        self.denoise_steps = denoise_steps
        self.backbone = DiffusionBackbone(image_size, patch_size, width,
                                          depth, heads, max_frames, channels)
        self.action_cond = ActionConditioning(
            num_tokens, code_dim, width, depth, action_depth, action_heads,
            max_frames)

    @classmethod
    def from_config(cls, config):
        """Build the model of an :class:`~cola_world.schema.ExperimentConfig`.
        """
        wm = config.wm
        return cls(config.env.image_size, patch_size=wm.patch_size,
                   width=wm.width, depth=wm.depth, heads=wm.heads,
                   action_depth=wm.action_depth,
                   action_heads=wm.action_heads, max_frames=wm.max_frames,
                   num_tokens=config.lam.num_tokens,
                   code_dim=config.lam.code_dim, p_drop=wm.p_drop,
                   guidance_scale=wm.guidance_scale,
                   denoise_steps=wm.denoise_steps)

    @property
    def max_frames(self):
        """Longest clip the temporal position table covers."""
        return self.backbone.max_frames

    def parameter_groups(self):
        """Modules owning each parameter group."""
        return {'wm_backbone': self.backbone,
                'wm_action_cond': self.action_cond}

    def _device(self):
        return self.action_cond.null.device

    def null_latents(self, batch, transitions):
        """Placeholder latents for the all-null action sequence."""
        shape = (batch, transitions, self.num_tokens, self.code_dim)
        return torch.zeros(shape, device=self._device())

    def embed_actions(self, latents, mask=None):
        """Contextual action embeddings.

        :param latents: ``(B, T - 1, G, D)`` quantized latents, or ``None``
            for the all-null sequence (then ``mask`` gives the shape).
        :param mask: ``(B, T - 1)`` boolean drop flags; ``True`` replaces the
            transition by the null embedding.
        """
        if latents is None:
            if mask is None:
                raise ValueError('latents or mask required')
            latents = self.null_latents(*mask.shape)
            mask = torch.ones(mask.shape, dtype=torch.bool)
        if mask is None:
            mask = torch.zeros(latents.shape[:2], dtype=torch.bool)
        if tuple(mask.shape) != tuple(latents.shape[:2]):
            raise ValueError('Mask shape {0} does not match latents {1}'
                             .format(tuple(mask.shape),
                                     tuple(latents.shape[:2])))
        return self.action_cond(latents, mask)

    def modulate(self, t, action_embeddings, ablate_actions=False):
        """Modulation of every block and frame.

        :param t: ``(B, T)`` per-frame diffusion times.
        :param action_embeddings: ``(B, T - 1, width)``.
        :param ablate_actions: Zero the action branch.
        """
        timestep = self.backbone.timestep_modulation(t)
        if ablate_actions:
            action = torch.zeros_like(timestep)
        else:
            action = self.action_cond.modulation(action_embeddings)
        return ModulationTriple(timestep, action)

    def dit_forward(self, xt, t, modulation, skip_blocks=False):
        """Backbone velocity prediction under a given modulation."""
        validate_clip(xt)
        if xt.shape[1] > self.max_frames:
            raise ValueError('Clip of {0} frames exceeds max_frames={1}'
                             .format(xt.shape[1], self.max_frames))
        if tuple(modulation.timestep_branch.shape[:2]) != \
                tuple(xt.shape[:2]):
            raise ValueError('Modulation does not match the clip shape')
        return self.backbone(xt, t, modulation, skip_blocks=skip_blocks)

    def velocity(self, xt, t, latents, mask=None):
        """Predicted velocity given latents and drop flags."""
        validate_clip(xt, min_frames=2)
        if xt.shape[1] > self.max_frames:
            raise ValueError('Clip of {0} frames exceeds max_frames={1}'
                             .format(xt.shape[1], self.max_frames))
        if latents is not None:
            validate_sequence_length(latents, xt.shape[1])
        elif mask is None:
            mask = torch.ones(xt.shape[0], xt.shape[1] - 1, dtype=torch.bool)
        embeddings = self.embed_actions(latents, mask)
        return self.dit_forward(xt, t, self.modulate(t, embeddings))

    def frame_times(self, t, frames):
        """Per-frame times with the conditioning frame held at one."""
        times = t.reshape(-1, 1).expand(-1, frames).clone()
        times[:, 0] = 1.0
        return times

    def flow_loss(self, clip, latents, mask=None, generator=None):
        """Rectified-flow loss on frames ``2..T``.

        :param clip: ``(B, T, H, W, C)`` data clips.
        :param latents: ``(B, T - 1, G, D)`` latents or ``None`` (null).
        :param mask: Drop flags; ``None`` keeps every action.
        :param generator: Source of ``t`` and of the noise.
        """
        validate_clip(clip, min_frames=2)
        batch, frames = clip.shape[:2]
        t = torch.rand(batch, generator=generator).to(clip)
        x0 = torch.randn(clip.shape, generator=generator).to(clip)
        times = self.frame_times(t, frames)
        sample = DiffusionSample.create(x0, clip, times[..., None, None, None])
        xt = sample.xt.clone()
        xt[:, 0] = clip[:, 0]
        prediction = self.velocity(xt, times, latents, mask)
        return flow_matching_loss(prediction, sample.v_target)

    @torch.no_grad()
    def sample(self, first_frame, latents, steps=None, guidance_scale=None,
               seed=0, frames=None):
        """Generate a clip with Euler steps from noise to data.

        :param first_frame: ``(B, H, W, C)`` conditioning frames.
        :param latents: ``(B, T - 1, G, D)`` latents or ``None`` for the
            all-null sequence (then ``frames`` gives ``T``).
        :param steps: Euler steps; defaults to the configured count.
        :param guidance_scale: Classifier-free guidance scale.
        :param seed: Noise seed.
        :raises ValueError: If ``steps < 1``.
        """
        steps = self.denoise_steps if steps is None else steps
        scale = self.guidance_scale if guidance_scale is None \
            else guidance_scale
        if steps < 1:
            raise ValueError('steps must be at least 1')
        batch = first_frame.shape[0]
        frames = latents.shape[1] + 1 if latents is not None else frames
        if frames is None or frames < 2:
            raise ValueError('Cannot sample fewer than two frames')
        generator = torch.Generator().manual_seed(int(seed) % 2 ** 63)
        x = torch.randn((batch, frames) + tuple(first_frame.shape[1:]),
                        generator=generator).to(first_frame)
        x[:, 0] = first_frame
        null_mask = torch.ones(batch, frames - 1, dtype=torch.bool)
        dt = 1.0 / steps
        for step in range(steps):
            times = self.frame_times(
                torch.full((batch,), step * dt, device=x.device), frames)
            if latents is None or scale == 0.0:
                v = self.velocity(x, times, None, null_mask)
            elif scale == 1.0:
                v = self.velocity(x, times, latents)
            else:
                v = guided_velocity(self.velocity(x, times, latents),
                                    self.velocity(x, times, None, null_mask),
                                    scale)
            x = x + dt * v
            x[:, 0] = first_frame
        out = x.clamp(0.0, 1.0)
        out[:, 0] = first_frame
        return out

    def rollout(self, first_frame, latents, horizon, clip_length, steps=None,
                guidance_scale=None, seed=0):
        """Chain ``horizon`` clips of ``clip_length`` frames.

        Each chunk starts from the last generated frame of the previous one.
        Chunk 0 uses ``seed``; later chunks derive their own noise seeds.

        :returns: ``(B, 1 + horizon * (clip_length - 1), H, W, C)``.
        :raises ValueError: If there are fewer than
            ``horizon * (clip_length - 1)`` latents.
        """
        if horizon < 1:
            raise ValueError('horizon must be at least 1')
        per_chunk = clip_length - 1
        if latents.shape[1] < horizon * per_chunk:
            raise ValueError(
                'Rollout of horizon {0} needs {1} latents, got {2}'.format(
                    horizon, horizon * per_chunk, latents.shape[1]))
        frames = [first_frame[:, None]]
        current = first_frame
        for chunk in range(horizon):
            chunk_seed = seed if chunk == 0 else derive_seed(seed, chunk)
            clip = self.sample(
                current, latents[:, chunk * per_chunk:(chunk + 1) * per_chunk],
                steps=steps, guidance_scale=guidance_scale, seed=chunk_seed)
            frames.append(clip[:, 1:])
            current = clip[:, -1]
        return torch.cat(frames, dim=1)
