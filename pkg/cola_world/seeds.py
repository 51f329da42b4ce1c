# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Seed derivation.

Every random stream of an experiment is keyed by the experiment seed and a
purpose, so streams do not depend on the order in which they are drawn.
"""

import contextlib
import zlib

import numpy as np
import torch


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode('utf-8'))
    return int(part)


def derive_seed(seed, *purpose):
    """Derive an independent 63-bit seed for ``purpose``.

    >>> derive_seed(0, 'probe') == derive_seed(0, 'probe')
    True
    >>> derive_seed(0, 'probe') == derive_seed(0, 'adapter')
    False
    """
    entropy = [int(seed)] + [_key(p) for p in purpose]
    state = np.random.SeedSequence(entropy).generate_state(1, np.uint64)
    return int(state[0]) >> 1


def torch_generator(seed, *purpose):
    """A CPU :class:`torch.Generator` seeded for ``purpose``."""
    generator = torch.Generator()
    generator.manual_seed(derive_seed(seed, *purpose) if purpose
                          else int(seed) % 2 ** 63)
    return generator


@contextlib.contextmanager
def seeded_init(seed, *purpose):
    """Seed the global torch RNG for module initialization.

    The caller's RNG state is restored on exit.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(derive_seed(seed, *purpose))
        yield
