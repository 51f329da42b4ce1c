# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Synthetic environment tests."""

import numpy as np
import pytest

from cola_world.errors import ActionBoundsError
from cola_world.synthenv import AGENT_COLOR, AGENT_HOLDING_COLOR, \
    BACKGROUND, Embodiment, EnvState, RealAction, SceneObject, \
    SNAP_TOLERANCE, action_bounds, action_from_vector, agent_centroid, \
    displacement, polar_to_cartesian, remap_to_polar


def _state():
    return EnvState((0.5, 0.5), (SceneObject(0, (0.55, 0.5), 1),
                                 SceneObject(1, (0.2, 0.2), 2)))


def test_cartesian_and_remapped_polar_agree(env, polar_env):
    """Remapped actions produce identical successor states."""
    for values in [(0.125, -0.0625), (-0.25, 0.0), (0.0, 0.0),
                   (0.0009765625, 0.5)]:
        for grip in (0, 1):
            action = RealAction(Embodiment.CARTESIAN, values, grip)
            polar = remap_to_polar(action)
            assert polar.embodiment == Embodiment.POLAR
            assert env.step(_state(), action) == \
                polar_env.step(_state(), polar)


def test_remap_rejects_polar_actions():
    """Only Cartesian actions are remapped."""
    with pytest.raises(ValueError):
        remap_to_polar(RealAction(Embodiment.POLAR, (0.0, 0.1)))
    with pytest.raises(ValueError):
        polar_to_cartesian(RealAction(Embodiment.CARTESIAN, (0.0, 0.1)))


def test_displacement_snaps_to_grid():
    """Displacements are multiples of 1/1024."""
    dx, dy = displacement(RealAction(Embodiment.POLAR, (0.3, 0.2)))
    assert dx * 1024 == round(dx * 1024)
    assert dy * 1024 == round(dy * 1024)


def test_snapping_stays_within_tolerance(env):
    """Snapping moves a component by at most half a grid cell."""
    assert SNAP_TOLERANCE == pytest.approx(4.8828125e-4)
    rng = np.random.default_rng(0)
    for dx, dy in rng.uniform(-0.5, 0.5, (200, 2)):
        action = RealAction(Embodiment.CARTESIAN, (float(dx), float(dy)))
        for candidate in (action, remap_to_polar(action)):
            exact = polar_to_cartesian(candidate).values \
                if candidate.embodiment == Embodiment.POLAR \
                else candidate.values
            snapped = displacement(candidate)
            for a, b in zip(snapped, exact):
                assert abs(float(a) - b) <= SNAP_TOLERANCE

    edge = RealAction(Embodiment.CARTESIAN, (0.5, 0.0))
    env.validate_action(edge)
    assert displacement(edge)[0] <= 0.5 + SNAP_TOLERANCE


def test_step_is_pure_and_clamps(env):
    """Stepping twice gives the same state; the agent stays in the arena."""
    state = EnvState((0.95, 0.02))
    action = RealAction(Embodiment.CARTESIAN, (0.5, -0.5))
    first = env.step(state, action)
    assert first == env.step(state, action)
    assert first.agent_pos == (1.0, 0.0)
    assert first.rng_state == state.rng_state + 1
    assert state.agent_pos == (0.95, 0.02)


def test_grip_carries_and_releases(env):
    """A gripped object follows the agent until the grip is released."""
    move = RealAction(Embodiment.CARTESIAN, (0.125, 0.0), 1)
    held = env.step(_state(), move)
    assert held.held_object == 0
    assert held.objects[0].pos == pytest.approx((0.675, 0.5))
    assert held.objects[1] == _state().objects[1]
    released = env.step(held, RealAction(Embodiment.CARTESIAN,
                                         (0.125, 0.0), 0))
    assert released.held_object is None
    assert released.objects[0].pos == held.objects[0].pos


def test_grip_without_contact(env):
    """Gripping far from every object holds nothing."""
    state = EnvState((0.9, 0.9), _state().objects)
    after = env.step(state, RealAction(Embodiment.CARTESIAN, (0.0, 0.0), 1))
    assert after.held_object is None


def test_action_bounds(env):
    """Out-of-bounds actions are rejected."""
    with pytest.raises(ActionBoundsError):
        env.step(_state(), RealAction(Embodiment.CARTESIAN, (0.6, 0.0)))
    with pytest.raises(ActionBoundsError):
        env.step(_state(), RealAction(Embodiment.CARTESIAN, (0.1, 0.0), 2))
    with pytest.raises(ActionBoundsError):
        env.step(_state(), RealAction(Embodiment.CARTESIAN,
                                      (float('nan'), 0.0)))
    low, high = action_bounds(Embodiment.POLAR, env.config)
    assert low.tolist() == pytest.approx([-np.pi, 0.0, 0.0])
    assert high[1] == pytest.approx(env.config.max_magnitude)


def test_action_from_vector(env):
    """Unconstrained vectors are clipped and the grip thresholded."""
    action = action_from_vector([3.0, -0.1, 0.7], Embodiment.CARTESIAN,
                                env.config)
    assert action.values == (pytest.approx(env.config.max_step),
                             pytest.approx(-0.1))
    assert action.grip == 1
    env.validate_action(action)


def test_render(env):
    """Frames are float32 in [0, 1] with the configured size."""
    frame = env.render(_state())
    assert frame.shape == (16, 16, 3)
    assert frame.dtype == np.float32
    assert frame.min() >= 0.0 and frame.max() <= 1.0

    empty = env.render(EnvState((0.5, 0.5)), agent=False)
    assert np.allclose(empty, np.asarray(BACKGROUND, dtype=np.float32))


def test_holding_changes_agent_color(env):
    """The agent is drawn in its holding color while gripping."""
    held = env.step(_state(), RealAction(Embodiment.CARTESIAN, (0.0, 0.0),
                                         1))
    frame = env.render(held)
    center = frame[8, 8]
    assert np.allclose(center, AGENT_HOLDING_COLOR)
    assert not np.allclose(env.render(_state())[8, 8] - AGENT_HOLDING_COLOR,
                           0.0)
    assert np.allclose(env.render(EnvState((0.5, 0.5)))[8, 8], AGENT_COLOR)


def test_agent_centroid(env):
    """The agent is located from its colors."""
    x, y = agent_centroid(env.render(EnvState((0.3, 0.7))))
    assert x == pytest.approx(0.3, abs=1 / 16)
    assert y == pytest.approx(0.7, abs=1 / 16)
    assert agent_centroid(env.render(EnvState((0.3, 0.7)),
                                     agent=False)) is None


def test_generate_episode_deterministic(env):
    """Episodes are a pure function of their seed."""
    first, second = env.generate_episode(7), env.generate_episode(7)
    assert first.clip.shape == (6, 16, 16, 3)
    assert first.clip.tobytes() == second.clip.tobytes()
    assert first.actions == second.actions
    assert len(first.actions) == 5
    assert first.env_config_hash == env.config_hash
    assert env.generate_episode(8).clip.tobytes() != first.clip.tobytes()


def test_polar_episode_actions(polar_env):
    """Polar environments record polar actions."""
    episode = polar_env.generate_episode(1)
    assert all(a.embodiment == Embodiment.POLAR for a in episode.actions)
    for action in episode.actions:
        polar_env.validate_action(action)


def test_rollout(env):
    """Rollouts return every visited state."""
    actions = [env.policy_action(2, step) for step in range(3)]
    states = env.rollout(_state(), actions)
    assert len(states) == 4
    assert states[0] == _state()
    assert states[-1] == env.step(env.step(env.step(
        _state(), actions[0]), actions[1]), actions[2])


def test_state_serialization():
    """States survive a JSON round trip."""
    state = _state()
    assert EnvState.from_dict(state.to_dict()) == state
    action = RealAction(Embodiment.POLAR, (0.5, 0.25), 1)
    assert RealAction.from_dict(action.to_dict()) == action
