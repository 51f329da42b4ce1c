# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Helper functions for tests."""

import json

import torch


def activate_backbone(wm, seed=0, std=0.1):
    """Give the zero-initialized backbone layers random weights."""
    generator = torch.Generator().manual_seed(seed)
    layers = [adaln[-1] for adaln in wm.backbone.adaln]
    layers += [wm.backbone.final.adaln[-1], wm.backbone.final.linear]
    with torch.no_grad():
        for layer in layers:
            layer.weight.copy_(std * torch.randn(
                layer.weight.shape, generator=generator))
    return wm


def activate_actions(wm, seed=1, std=0.1):
    """Give the zero-initialized action projection random weights."""
    generator = torch.Generator().manual_seed(seed)
    layer = wm.action_cond.to_modulation[-1]
    with torch.no_grad():
        layer.weight.copy_(std * torch.randn(layer.weight.shape,
                                             generator=generator))
    return wm


def random_latents(batch, transitions, tokens=2, dim=4, seed=0):
    """Random latent action sequence."""
    generator = torch.Generator().manual_seed(seed)
    return torch.randn(batch, transitions, tokens, dim, generator=generator)


def parse_json(output):
    """First JSON document printed at the start of a line of ``output``."""
    decoder = json.JSONDecoder()
    for index, line in enumerate(output.splitlines(True)):
        if line.startswith('{'):
            text = ''.join(output.splitlines(True)[index:])
            return decoder.raw_decode(text)[0]
    raise AssertionError('No JSON document in {0!r}'.format(output))
