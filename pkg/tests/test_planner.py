# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Planner tests."""

import itertools
import math

import numpy as np
import pytest
import torch

from cola_world.adaptation import Adapter
from cola_world.errors import ConfigError
from cola_world.planner import EnvironmentOracle, SuccessClassifier, \
    TaskSpec, WorldModelDynamics, candidate_action, evaluate_task, \
    make_task, make_tasks, plan, planning_bounds, reward, \
    train_success_classifier
from cola_world.schema import load_config
from cola_world.synthenv import SyntheticEnv, action_bounds, \
    action_from_vector, displacement


def action_grid(env, per_axis=5):
    """Horizon-one candidates covering the displacement bounds."""
    low, high = planning_bounds(env.embodiment, env.config)
    xs = np.linspace(low[0], high[0], per_axis)
    ys = np.linspace(low[1], high[1], per_axis)
    return np.array([[[x, y, 0.0]] for x, y in itertools.product(xs, ys)])


def test_reward():
    """Test the goal distance and the classifier term."""
    goal = np.zeros((4, 4, 3))
    clip = np.stack([np.ones((4, 4, 3)), np.full((4, 4, 3), 0.5)])
    assert reward(clip, goal) == pytest.approx(-0.25)
    assert reward(clip[:1], np.ones((4, 4, 3))) == 0.0
    assert reward(clip, goal, classifier_logit=2.0) == pytest.approx(1.75)
    assert reward(clip, goal, classifier_logit=2.0, weight=0.5) == \
        pytest.approx(0.75)
    assert reward(clip, goal, classifier_logit=2.0, weight=0.0) == \
        pytest.approx(-0.25)


def test_plan_matches_brute_force(env):
    """Test that the oracle planner picks the best candidate of a grid."""
    state = env.initial_state(5)
    grid = action_grid(env)
    goal_action = action_from_vector(grid[7, 0], env.embodiment, env.config)
    goal_frame = env.render(env.rollout(state, [goal_action])[-1])

    result = plan(EnvironmentOracle(env), state, goal_frame, horizon=1,
                  n_iters=1, candidates=grid, seed=3)

    expected = []
    for candidate in grid:
        actions = [action_from_vector(candidate[0], env.embodiment,
                                      env.config)]
        frames = np.stack([env.render(s) for s in env.rollout(state,
                                                              actions)])
        expected.append(reward(frames, goal_frame))
    assert result.rewards == pytest.approx(expected)
    assert result.best_reward == 0.0
    assert result.best_index == int(np.argmax(expected))
    final = env.rollout(state, result.actions)[-1]
    assert np.array_equal(env.render(final), goal_frame)

    n_elite = int(round(0.1 * len(grid)))
    order = np.argsort(-np.asarray(expected), kind='stable')
    np.testing.assert_allclose(
        result.elite_mean, grid[order[:n_elite]].mean(axis=0))


def test_plan_is_deterministic(polar_env):
    """Test that equal seeds give equal plans within the bounds."""
    state = polar_env.initial_state(1)
    goal = polar_env.render(polar_env.initial_state(2))
    oracle = EnvironmentOracle(polar_env)

    first = plan(oracle, state, goal, horizon=3, n_samples=6, n_iters=2,
                 elite_fraction=0.5, seed=9)
    second = plan(oracle, state, goal, horizon=3, n_samples=6, n_iters=2,
                  elite_fraction=0.5, seed=9)

    np.testing.assert_array_equal(first.action_array, second.action_array)
    assert first.rewards == second.rewards
    assert len(first.actions) == 3
    low, high = planning_bounds(polar_env.embodiment, polar_env.config)
    assert np.all(first.action_array >= low)
    assert np.all(first.action_array <= high)
    for action in first.actions:
        polar_env.validate_action(action)

    with pytest.raises(ValueError):
        plan(oracle, state, goal, horizon=3, n_samples=1)


def test_candidate_action(env, polar_env):
    """Test the displacement space shared by both embodiments."""
    for e in (env, polar_env):
        action = candidate_action([0.0, 0.0, 0.4], e.embodiment, e.config)
        assert displacement(action) == (0.0, 0.0)
        assert action.grip == 0
        e.validate_action(action)

    low, high = planning_bounds(polar_env.embodiment, polar_env.config)
    np.testing.assert_allclose(low[:2], -high[:2])
    action = candidate_action([5.0, 5.0, 1.0], polar_env.embodiment,
                              polar_env.config)
    assert action.values[1] <= polar_env.config.max_magnitude + 1e-6
    assert action.grip == 1
    polar_env.validate_action(action)
    dx, dy = displacement(action)
    assert dx == pytest.approx(high[0], abs=1e-3)
    assert dy == pytest.approx(high[1], abs=1e-3)

    assert np.array_equal(planning_bounds(env.embodiment, env.config)[1],
                          action_bounds(env.embodiment, env.config)[1])


@pytest.mark.parametrize('dataset', ['main', 'downstream'])
def test_oracle_reaches_goals(dataset):
    """Test that planning with the true environment solves reach."""
    config = load_config()
    env = SyntheticEnv(config.resolved_env(dataset))
    task = make_task(env, 'reach', n_pairs=30, horizon=4,
                     goal_step=config.planner.goal_step,
                     success_radius=config.planner.success_radius, seed=0)
    result = evaluate_task(task, EnvironmentOracle(env), env,
                           config.planner)
    assert result.success_rate >= 0.9


def test_world_model_dynamics(polar_env, lam, wm):
    """Test single-clip and chained predictions and the horizon check."""
    torch.manual_seed(0)
    dynamics = WorldModelDynamics(polar_env, wm, lam,
                                  Adapter(3, 2, 8, hidden=4), clip_length=4,
                                  steps=1)
    state = polar_env.initial_state(0)
    frame = polar_env.render(state)
    actions = [polar_env.policy_action(0, step) for step in range(6)]

    short = dynamics.predict(state, frame, actions[:2], seed=1)
    assert short.shape == (3, 16, 16, 3)
    np.testing.assert_allclose(short[0], frame)
    chained = dynamics.predict(state, frame, actions, seed=1)
    assert chained.shape == (7, 16, 16, 3)

    dynamics.check_horizon(5)
    dynamics.check_horizon(6)
    with pytest.raises(ValueError):
        dynamics.check_horizon(7)
    with pytest.raises(ValueError):
        plan(dynamics, state, frame, horizon=7, n_samples=2)


def test_evaluate_task_uses_environment_predicate(env, tiny_config):
    """Test that success is judged on environment states only."""
    task = make_task(env, 'reach', n_pairs=2, horizon=2)
    oracle = EnvironmentOracle(env)

    always = TaskSpec('reach', task.pairs, 2, predicate=lambda s, p: True)
    result = evaluate_task(always, oracle, env, tiny_config.planner)
    assert result.success_rate == 1.0
    assert [t['pair'] for t in result.traces] == [0, 1]
    assert all(len(t['actions']) == 2 for t in result.traces)

    never = TaskSpec('reach', task.pairs, 2, predicate=lambda s, p: False)
    assert evaluate_task(never, oracle, env,
                         tiny_config.planner).success_rate == 0.0

    empty = TaskSpec('reach', [], 2)
    assert evaluate_task(empty, oracle, env,
                         tiny_config.planner).success_rate == 0.0


def test_make_tasks(env, polar_env, tiny_config):
    """Test that generated goals satisfy their own predicates."""
    for task_id in ('reach', 'push', 'hold'):
        task = make_task(polar_env, task_id, n_pairs=3, horizon=2, seed=1)
        assert len(task.pairs) == 3
        for pair in task.pairs:
            assert task.success(pair.goal, pair)

    reach = make_task(env, 'reach', n_pairs=3, horizon=2)
    for pair in reach.pairs:
        dx = pair.goal.agent_pos[0] - pair.initial.agent_pos[0]
        dy = pair.goal.agent_pos[1] - pair.initial.agent_pos[1]
        assert math.hypot(dx, dy) <= 2 * 0.04 + 1e-3

    push = make_task(env, 'push', n_pairs=2, horizon=2)
    for pair in push.pairs:
        assert pair.initial.agent_pos == pair.initial.objects[0].pos

    hold = make_task(env, 'hold', n_pairs=2, horizon=1)
    for pair in hold.pairs:
        assert pair.initial.held_object is None
        assert not hold.success(pair.initial, pair)

    again = make_task(env, 'reach', n_pairs=3, horizon=2)
    assert [p.goal for p in again.pairs] == [p.goal for p in reach.pairs]
    restored = TaskSpec.from_dict(reach.to_dict())
    assert [p.initial for p in restored.pairs] == \
        [p.initial for p in reach.pairs]

    tasks = make_tasks(env, tiny_config.planner)
    assert [t.task_id for t in tasks] == ['reach']
    assert tasks[0].horizon == tiny_config.planner.horizon

    with pytest.raises(ConfigError):
        make_task(env, 'stack', n_pairs=1, horizon=1)
    with pytest.raises(ConfigError):
        TaskSpec('stack', [], 1).success(env.initial_state(0), None)


def test_success_classifier(env):
    """Test classifier shapes and training on environment labels."""
    torch.manual_seed(0)
    classifier = SuccessClassifier()
    frames = torch.zeros(5, 16, 16, 3)
    assert classifier(frames, frames).shape == (5,)

    tasks = [make_task(env, 'reach', n_pairs=2, horizon=2)]
    state = torch.get_rng_state()
    trained = train_success_classifier(env, tasks, steps=3, batch=4,
                                       rollouts=1)
    assert torch.equal(torch.get_rng_state(), state)
    pair = tasks[0].pairs[0]
    logit = trained.logit(env.render(pair.goal), env.render(pair.goal))
    assert isinstance(logit, float)
    assert math.isfinite(logit)
    assert not trained.training
