# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Deterministic synthetic video environment.

An agent moves in the continuous arena ``[0, 1]^2`` and can grip one of a
few rigid objects. Two embodiments drive the same dynamics: ``CARTESIAN``
actions give a displacement ``(dx, dy)``, ``POLAR`` actions give
``(angle, magnitude)``. Frames are rasterized with 2x2 supersampling and a
box filter, all in 32-bit floats.
"""

import dataclasses
import enum
import math
from typing import Optional, Tuple

import numpy as np
from einops import reduce

from . import config as default_config
from .errors import ActionBoundsError
from .schema import EnvConfig

DISPLACEMENT_GRID = 1024
"""Induced displacements are snapped to multiples of ``1 / 1024``."""

SNAP_TOLERANCE = 0.5 / DISPLACEMENT_GRID
"""Largest change snapping makes to one displacement component.

Bounds are checked before snapping, so a displacement may exceed the
nominal action bound by up to this amount.
"""

BACKGROUND = (0.1, 0.1, 0.12)
"""Arena background color."""

AGENT_COLOR = (0.95, 0.95, 0.95)
"""Agent color while not holding an object."""

AGENT_HOLDING_COLOR = (1.0, 0.8, 0.2)
"""Agent color while holding an object."""

PALETTE = (
    (0.9, 0.2, 0.2),
    (0.2, 0.8, 0.3),
    (0.25, 0.4, 0.95),
    (0.9, 0.3, 0.85),
    (0.2, 0.85, 0.9),
    (0.6, 0.45, 0.2),
)
"""Object colors, indexed by ``color_id``."""

SHAPES = ('disc', 'square', 'diamond')
"""Object shapes, indexed by ``shape_id``."""

ACTION_DIM = 3
"""Length of the action vector ``(value_0, value_1, grip)``."""


class Embodiment(str, enum.Enum):
    """Real-action control interfaces."""

    CARTESIAN = 'CARTESIAN'
    POLAR = 'POLAR'


@dataclasses.dataclass(frozen=True)
class SceneObject:
    """A rigid object in the arena."""

    shape_id: int
    pos: Tuple[float, float]
    color_id: int


@dataclasses.dataclass(frozen=True)
class EnvState:
    """Complete environment state; positions are float32 values."""

    agent_pos: Tuple[float, float]
    objects: Tuple[SceneObject, ...] = ()
    held_object: Optional[int] = None
    rng_state: int = 0

    def to_dict(self):
        """Serialize to plain JSON types."""
        return {
            'agent_pos': list(self.agent_pos),
            'objects': [dataclasses.asdict(o) for o in self.objects],
            'held_object': self.held_object,
            'rng_state': self.rng_state,
        }

    @classmethod
    def from_dict(cls, data):
        """Inverse of :meth:`to_dict`."""
        return cls(
            agent_pos=tuple(data['agent_pos']),
            objects=tuple(SceneObject(o['shape_id'], tuple(o['pos']),
                                      o['color_id'])
                          for o in data['objects']),
            held_object=data['held_object'],
            rng_state=data['rng_state'],
        )


@dataclasses.dataclass(frozen=True)
class RealAction:
    """An action in one of the embodiments."""

    embodiment: Embodiment
    values: Tuple[float, float]
    grip: int = 0

    def to_vector(self):
        """Action as a float32 vector ``(value_0, value_1, grip)``."""
        return np.array([self.values[0], self.values[1], self.grip],
                        dtype=np.float32)

    def to_dict(self):
        """Serialize to plain JSON types."""
        return {'embodiment': self.embodiment.value,
                'values': [float(v) for v in self.values],
                'grip': int(self.grip)}

    @classmethod
    def from_dict(cls, data):
        """Inverse of :meth:`to_dict`."""
        return cls(Embodiment(data['embodiment']), tuple(data['values']),
                   int(data['grip']))


@dataclasses.dataclass
class Episode:
    """A rendered episode and the actions that produced it."""

    clip: np.ndarray
    actions: list
    seed: int
    env_config_hash: str


def default_env_config():
    """The desk-scale environment configuration."""
    return EnvConfig.model_validate(default_config.COLA_ENV)


def _f32(value):
    return float(np.float32(value))


def snap(value):
    """Snap a displacement component to the displacement grid."""
    return _f32(round(value * DISPLACEMENT_GRID) / DISPLACEMENT_GRID)


def remap_to_polar(action):
    """Re-express a ``CARTESIAN`` action in the ``POLAR`` embodiment.

    >>> remap_to_polar(RealAction(Embodiment.CARTESIAN, (1.0, 0.0))).values
    (0.0, 1.0)

    :param action: A ``CARTESIAN`` :class:`RealAction`.
    :raises ValueError: If the action is not ``CARTESIAN``.
    """
    if action.embodiment != Embodiment.CARTESIAN:
        raise ValueError('remap_to_polar expects a CARTESIAN action')
    dx, dy = action.values
    return RealAction(Embodiment.POLAR,
                      (math.atan2(dy, dx), math.hypot(dx, dy)), action.grip)


def polar_to_cartesian(action):
    """Re-express a ``POLAR`` action in the ``CARTESIAN`` embodiment."""
    if action.embodiment != Embodiment.POLAR:
        raise ValueError('polar_to_cartesian expects a POLAR action')
    angle, magnitude = action.values
    return RealAction(Embodiment.CARTESIAN,
                      (magnitude * math.cos(angle),
                       magnitude * math.sin(angle)), action.grip)


def displacement(action):
    """Displacement induced by an action, snapped to the grid."""
    if action.embodiment == Embodiment.POLAR:
        action = polar_to_cartesian(action)
    dx, dy = action.values
    return snap(dx), snap(dy)


def action_bounds(embodiment, env_config):
    """Lower and upper bounds of the action vector of an embodiment."""
    if Embodiment(embodiment) == Embodiment.CARTESIAN:
        step = env_config.max_step
        return (np.array([-step, -step, 0.0], dtype=np.float32),
                np.array([step, step, 1.0], dtype=np.float32))
    return (np.array([-math.pi, 0.0, 0.0], dtype=np.float32),
            np.array([math.pi, env_config.max_magnitude, 1.0],
                     dtype=np.float32))


def action_from_vector(vector, embodiment, env_config):
    """Build a valid action from an unconstrained vector.

    Values are clipped into the embodiment bounds and the grip channel is
    thresholded at one half.
    """
    low, high = action_bounds(embodiment, env_config)
    clipped = np.clip(np.asarray(vector, dtype=np.float64), low, high)
    return RealAction(Embodiment(embodiment),
                      (float(clipped[0]), float(clipped[1])),
                      int(clipped[2] >= 0.5))


def counter_rng(seed, counter):
    """Counter-based generator keyed by ``seed``, positioned at ``counter``.

    Generation for ``(seed, counter)`` does not depend on any other draw, so
    episodes can be produced in any order.
    """
    bit_generator = np.random.Philox(key=int(seed), counter=int(counter))
    return np.random.Generator(bit_generator)


def episode_seed(seed, index):
    """Derive the 64-bit seed of episode ``index`` of a dataset."""
    state = np.random.SeedSequence([int(seed), int(index)]).generate_state(
        1, dtype=np.uint64)
    return int(state[0])


class SyntheticEnv(object):
    """Arena dynamics and renderer for one environment configuration.

    :param env_config: An :class:`~cola_world.schema.EnvConfig`; defaults to
        the desk-scale environment.
    """

    def __init__(self, env_config=None):
        """Initialize the environment."""
        self.config = env_config or default_env_config()
        self.config_hash = self.config.digest()
        size = 2 * self.config.image_size
        centers = (np.arange(size, dtype=np.float32) + 0.5) / size
        self._xs = centers[None, :]
        self._ys = centers[:, None]

    @property
    def embodiment(self):
        """Embodiment of the actions recorded by this environment."""
        return Embodiment(self.config.embodiment)

    def validate_action(self, action):
        """Check an action against its embodiment bounds.

        Bounds apply to the nominal values; see :data:`SNAP_TOLERANCE`.

        :raises ActionBoundsError: If a value is out of bounds.
        """
        if action.grip not in (0, 1):
            raise ActionBoundsError('grip must be 0 or 1')
        low, high = action_bounds(action.embodiment, self.config)
        values = np.asarray(action.values, dtype=np.float64)
        if not np.all(np.isfinite(values)) or \
                np.any(values < low[:2].astype(np.float64) - 1e-6) or \
                np.any(values > high[:2].astype(np.float64) + 1e-6):
            raise ActionBoundsError(
                '{0} action {1} outside bounds [{2}, {3}]'.format(
                    action.embodiment.value, tuple(action.values),
                    low[:2].tolist(), high[:2].tolist()))

    def _touching(self, state):
        reach = self.config.agent_radius + self.config.object_radius
        ax, ay = state.agent_pos
        for index, obj in enumerate(state.objects):
            if math.hypot(obj.pos[0] - ax, obj.pos[1] - ay) <= reach:
                return index
        return None

    @staticmethod
    def _clamp(x, y):
        pos = np.clip(np.array([x, y], dtype=np.float32), 0.0, 1.0)
        return float(pos[0]), float(pos[1])

    def step(self, state, action):
        """Apply one action; a pure function of ``(state, action)``.

        A grip action picks up the first object overlapping the agent and
        carries it along; releasing the grip drops it.

        :raises ActionBoundsError: If the action is out of bounds.
        """
        self.validate_action(action)
        dx, dy = displacement(action)
        held = state.held_object
        if action.grip:
            if held is None:
                held = self._touching(state)
        else:
            held = None
        ax, ay = state.agent_pos
        agent = self._clamp(np.float32(ax) + np.float32(dx),
                            np.float32(ay) + np.float32(dy))
        moved_x = np.float32(agent[0]) - np.float32(ax)
        moved_y = np.float32(agent[1]) - np.float32(ay)
        objects = list(state.objects)
        if held is not None:
            obj = objects[held]
            objects[held] = dataclasses.replace(obj, pos=self._clamp(
                np.float32(obj.pos[0]) + moved_x,
                np.float32(obj.pos[1]) + moved_y))
        return EnvState(agent, tuple(objects), held, state.rng_state + 1)

    def _shape_mask(self, shape_id, x, y, radius):
        dx = self._xs - np.float32(x)
        dy = self._ys - np.float32(y)
        r = np.float32(radius)
        if shape_id == 1:
            return (np.abs(dx) <= r) & (np.abs(dy) <= r)
        if shape_id == 2:
            return np.abs(dx) + np.abs(dy) <= np.float32(1.3) * r
        return dx * dx + dy * dy <= r * r

    def render(self, state, agent=True):
        """Rasterize a state into an ``(H, W, 3)`` float32 frame.

        :param state: The state to draw.
        :param agent: Draw the agent on top of the objects.
        """
        size = 2 * self.config.image_size
        canvas = np.empty((size, size, 3), dtype=np.float32)
        canvas[...] = np.asarray(BACKGROUND, dtype=np.float32)
        for obj in state.objects:
            mask = self._shape_mask(obj.shape_id, obj.pos[0], obj.pos[1],
                                    self.config.object_radius)
            canvas[mask] = np.asarray(PALETTE[obj.color_id % len(PALETTE)],
                                      dtype=np.float32)
        if agent:
            color = AGENT_HOLDING_COLOR if state.held_object is not None \
                else AGENT_COLOR
            mask = self._shape_mask(0, state.agent_pos[0],
                                    state.agent_pos[1],
                                    self.config.agent_radius)
            canvas[mask] = np.asarray(color, dtype=np.float32)
        return reduce(canvas, '(h a) (w b) c -> h w c', 'mean', a=2, b=2)

    def initial_state(self, seed):
        """Random initial state of an episode."""
        rng = counter_rng(seed, 0)
        agent = tuple(_f32(v) for v in rng.uniform(0.1, 0.9, size=2))
        objects = []
        for _ in range(self.config.n_objects):
            shape_id = int(rng.choice(self.config.object_shapes))
            color_id = int(rng.integers(len(PALETTE)))
            pos = tuple(_f32(v) for v in rng.uniform(0.1, 0.9, size=2))
            objects.append(SceneObject(shape_id, pos, color_id))
        return EnvState(agent, tuple(objects), None, 0)

    def policy_action(self, seed, step):
        """Random exploration action of an episode at ``step``."""
        rng = counter_rng(seed, step + 1)
        limit = self.config.policy_step
        dx, dy = (snap(v) for v in rng.uniform(-limit, limit, size=2))
        grip = int(rng.random() < self.config.grip_probability)
        action = RealAction(Embodiment.CARTESIAN, (dx, dy), grip)
        if self.embodiment == Embodiment.POLAR:
            action = remap_to_polar(action)
        return action

    def generate_episode(self, seed):
        """Roll out the exploration policy for one episode."""
        state = self.initial_state(seed)
        frames = [self.render(state)]
        actions = []
        for step in range(self.config.episode_length - 1):
            action = self.policy_action(seed, step)
            state = self.step(state, action)
            frames.append(self.render(state))
            actions.append(action)
        return Episode(np.stack(frames).astype(np.float32), actions,
                       int(seed), self.config_hash)

    def rollout(self, state, actions):
        """Apply a sequence of actions, returning every visited state."""
        states = [state]
        for action in actions:
            states.append(self.step(states[-1], action))
        return states


def agent_centroid(frame, tolerance=0.1):
    """Locate the agent in a frame by its colors.

    :returns: ``(x, y)`` arena coordinates, or ``None`` when no pixel is
        close to an agent color.
    """
    frame = np.asarray(frame, dtype=np.float32)
    weights = np.zeros(frame.shape[:2], dtype=np.float64)
    for color in (AGENT_COLOR, AGENT_HOLDING_COLOR):
        distance = np.abs(frame - np.asarray(color, dtype=np.float32)).max(-1)
        weights = np.maximum(weights, np.clip(1.0 - distance / tolerance,
                                              0.0, 1.0))
    total = weights.sum()
    if total == 0:
        return None
    height, width = weights.shape
    ys, xs = np.mgrid[0:height, 0:width]
    x = ((xs + 0.5) * weights).sum() / total / width
    y = ((ys + 0.5) * weights).sum() / total / height
    return float(x), float(y)
