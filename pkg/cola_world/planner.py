# -*- coding: utf-8 -*-
#
# This file is part of CoLA-World.
# Copyright (C) 2025 CoLA-World contributors.
#
# CoLA-World is free software; you can redistribute it and/or modify it
# under the terms of the MIT License; see LICENSE file for more details.

"""Cross-entropy-method visual planning.

Candidates are real-action sequences sampled from a diagonal Gaussian and
scored by rolling them out in a dynamics model and comparing the last frame
with the goal frame. Success is always judged on real environment states.
"""

import dataclasses
import logging
import math
from typing import Callable, List, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from .errors import ConfigError
from .seeds import derive_seed, seeded_init, torch_generator
from .synthenv import ACTION_DIM, EnvState, Embodiment, RealAction, \
    action_bounds, action_from_vector, counter_rng, remap_to_polar

logger = logging.getLogger(__name__)

TASKS = ('reach', 'push', 'hold')
"""Desk-scale planning tasks."""


@dataclasses.dataclass
class TaskPair:
    """An initial state and the goal state its goal frame is rendered from."""

    initial: EnvState
    goal: EnvState

    def to_dict(self):
        """Plain dictionary form."""
        return {'initial': self.initial.to_dict(),
                'goal': self.goal.to_dict()}


@dataclasses.dataclass
class TaskSpec:
    """A planning task: pairs, horizon and environment success predicate."""

    task_id: str
    pairs: List[TaskPair]
    horizon: int
    success_radius: float = 0.05
    predicate: Optional[Callable] = None

    def success(self, state, pair):
        """Whether ``state`` solves ``pair``."""
        if self.predicate is not None:
            return bool(self.predicate(state, pair))
        if self.task_id == 'reach':
            return _distance(state.agent_pos, pair.goal.agent_pos) <= \
                self.success_radius
        if self.task_id == 'push':
            return _distance(state.objects[0].pos, pair.goal.objects[0].pos) \
                <= self.success_radius
        if self.task_id == 'hold':
            return state.held_object is not None
        raise ConfigError('Unknown task {0!r}'.format(self.task_id),
                          fields=['planner.tasks'])

    def to_dict(self):
        """JSON form of the task."""
        return {'task_id': self.task_id, 'horizon': self.horizon,
                'success_radius': self.success_radius,
                'pairs': [p.to_dict() for p in self.pairs]}

    @classmethod
    def from_dict(cls, data):
        """Inverse of :meth:`to_dict`."""
        return cls(data['task_id'], [
            TaskPair(EnvState.from_dict(p['initial']),
                     EnvState.from_dict(p['goal']))
            for p in data['pairs']], data['horizon'],
            data.get('success_radius', 0.05))


@dataclasses.dataclass
class PlanResult:
    """Outcome of one planning call."""

    actions: List[RealAction]
    action_array: np.ndarray
    rewards: List[float]
    best_index: int
    elite_mean: np.ndarray
    success: Optional[bool] = None

    @property
    def best_reward(self):
        """Reward of the chosen sequence."""
        return self.rewards[self.best_index]


def _distance(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])


def reward(pred_clip, goal_frame, classifier_logit=None, weight=1.0):
    """Negative MSE of the last frame to the goal, plus a weighted logit."""
    final = np.asarray(pred_clip, dtype=np.float64)[-1]
    value = -float(np.mean((final - np.asarray(goal_frame,
                                               dtype=np.float64)) ** 2))
    if classifier_logit is not None and weight != 0.0:
        value += weight * float(classifier_logit)
    return value


class EnvironmentOracle(object):
    """The true environment used as a dynamics model."""

    def __init__(self, env):
        """Wrap a :class:`~cola_world.synthenv.SyntheticEnv`."""
        self.env = env

    def check_horizon(self, horizon):
        """Any horizon is feasible."""

    def predict(self, state, frame, actions, seed=0):
        """Rendered frames of the real rollout."""
        return np.stack([self.env.render(s)
                         for s in self.env.rollout(state, actions)])


class WorldModelDynamics(object):
    """Adapter, codebook and world model as a dynamics model.

    Horizons up to ``max_frames - 1`` are sampled in one clip; longer ones
    are chained in chunks of ``clip_length - 1`` actions.
    """

    def __init__(self, env, wm, lam, adapter, clip_length, steps=None,
                 guidance_scale=None):
        """Initialize the dynamics model."""
        self.env = env
        self.wm = wm
        self.lam = lam
        self.adapter = adapter
        self.clip_length = clip_length
        self.steps = steps
        self.guidance_scale = guidance_scale

    def check_horizon(self, horizon):
        """Reject horizons the world model cannot roll out.

        :raises ValueError: If ``horizon`` exceeds the rollout capacity.
        """
        if horizon + 1 <= self.wm.max_frames:
            return
        if horizon % (self.clip_length - 1):
            raise ValueError(
                'Horizon {0} exceeds the world model capacity of {1} frames '
                'and is not a multiple of {2}'.format(
                    horizon, self.wm.max_frames, self.clip_length - 1))

    @torch.no_grad()
    def predict(self, state, frame, actions, seed=0):
        """Predicted frames for a real-action sequence."""
        vectors = torch.as_tensor(
            np.stack([a.to_vector() for a in actions])[None],
            dtype=torch.float32)
        latents = self.lam.quantizer.lookup(
            self.adapter.predict_indices(vectors))
        first = torch.as_tensor(np.asarray(frame)[None], dtype=torch.float32)
        horizon = len(actions)
        if horizon + 1 <= self.wm.max_frames:
            clip = self.wm.sample(first, latents, steps=self.steps,
                                  guidance_scale=self.guidance_scale,
                                  seed=seed)
        else:
            clip = self.wm.rollout(
                first, latents, horizon // (self.clip_length - 1),
                self.clip_length, steps=self.steps,
                guidance_scale=self.guidance_scale, seed=seed)
        return clip[0].numpy()


class SuccessClassifier(nn.Module):
    """Binary classifier over a frame stacked with its goal frame."""

    def __init__(self, channels=3, width=32):
        """Initialize the classifier."""
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(2 * channels, width // 2, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(width // 2, width, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
            nn.Linear(width, 1),
        )

    def forward(self, frames, goals):
        """Success logits of ``(B, H, W, C)`` frames and goals."""
        x = rearrange(torch.cat([frames, goals], dim=-1), 'b h w c -> b c h w')
        return self.net(x).squeeze(-1)

    @torch.no_grad()
    def logit(self, frame, goal):
        """Logit of a single frame."""
        return float(self(
            torch.as_tensor(np.asarray(frame)[None], dtype=torch.float32),
            torch.as_tensor(np.asarray(goal)[None], dtype=torch.float32))[0])


def train_success_classifier(env, tasks, steps=200, batch=32, lr=1e-3,
                             seed=0, rollouts=4):
    """Train a :class:`SuccessClassifier` on environment-labelled frames.

    Frames come from goal states, initial states and random-policy rollouts
    of every task pair; labels come from the task predicates.
    """
    frames, goals, labels = [], [], []
    for task in tasks:
        for index, pair in enumerate(task.pairs):
            goal_frame = env.render(pair.goal)
            pair_seed = derive_seed(seed, 'classifier', task.task_id, index)
            states = [pair.goal, pair.initial]
            for k in range(rollouts):
                actions = [env.policy_action(pair_seed + k, step)
                           for step in range(task.horizon)]
                states.append(env.rollout(pair.initial, actions)[-1])
            for state in states:
                frames.append(env.render(state))
                goals.append(goal_frame)
                labels.append(float(task.success(state, pair)))
    frames = torch.as_tensor(np.stack(frames), dtype=torch.float32)
    goals = torch.as_tensor(np.stack(goals), dtype=torch.float32)
    labels = torch.as_tensor(labels, dtype=torch.float32)
    with seeded_init(seed, 'classifier', 'init'):
        classifier = SuccessClassifier(frames.shape[-1])
    optimizer = torch.optim.Adam(classifier.parameters(), lr=lr)
    generator = torch_generator(seed, 'classifier', 'batches')
    for _ in range(steps):
        index = torch.randint(len(labels), (batch,), generator=generator)
        loss = F.binary_cross_entropy_with_logits(
            classifier(frames[index], goals[index]), labels[index])
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    classifier.eval()
    return classifier


def planning_bounds(embodiment, env_config):
    """Bounds of the ``(dx, dy, grip)`` space candidates are sampled in.

    ``POLAR`` candidates live in the largest square inside the reachable
    disc, so every sample maps to a valid polar action.
    """
    if Embodiment(embodiment) == Embodiment.CARTESIAN:
        return action_bounds(embodiment, env_config)
    half = env_config.max_magnitude / math.sqrt(2.0)
    return (np.array([-half, -half, 0.0], dtype=np.float32),
            np.array([half, half, 1.0], dtype=np.float32))


def candidate_action(vector, embodiment, env_config):
    """Real action of a displacement-space candidate vector."""
    low, high = planning_bounds(embodiment, env_config)
    clipped = np.clip(np.asarray(vector, dtype=np.float64), low, high)
    if Embodiment(embodiment) == Embodiment.CARTESIAN:
        return action_from_vector(clipped, embodiment, env_config)
    polar = remap_to_polar(RealAction(
        Embodiment.CARTESIAN, (float(clipped[0]), float(clipped[1])),
        int(clipped[2] >= 0.5)))
    return action_from_vector(polar.to_vector(), embodiment, env_config)


def _to_actions(samples, embodiment, env_config):
    return [[candidate_action(v, embodiment, env_config) for v in seq]
            for seq in samples]


def plan(dynamics, initial_state, goal_frame, horizon, n_samples=64,
         n_iters=3, elite_fraction=0.1, init_std=0.1, seed=0,
         classifier=None, reward_weight=1.0, candidates=None):
    """Search real-action sequences with the cross-entropy method.

    Candidates are ``(dx, dy, grip)`` vectors for every embodiment and are
    turned into real actions by :func:`candidate_action`. The search starts
    at zero displacement with the grip channel on its threshold. From the
    second iteration on, the previous elite mean is candidate 0.
    The returned sequence is the best candidate of the last iteration, the
    first one on ties.

    :param dynamics: :class:`EnvironmentOracle` or
        :class:`WorldModelDynamics`.
    :param candidates: Optional ``(N, horizon, 3)`` displacement-space array
        scored instead of sampling in the first iteration.
    :raises ValueError: If ``n_samples < 2`` or the horizon exceeds the
        rollout capacity.
    """
    if n_samples < 2:
        raise ValueError('n_samples must be at least 2')
    dynamics.check_horizon(horizon)
    env = dynamics.env
    embodiment = env.embodiment
    low, high = planning_bounds(embodiment, env.config)
    mean = np.tile((low + high) / 2.0, (horizon, 1)).astype(np.float64)
    std = np.tile(init_std * (high - low), (horizon, 1)).astype(np.float64)
    n_elite = max(1, int(round(elite_fraction * n_samples)))
    frame = env.render(initial_state)
    for iteration in range(n_iters):
        if iteration == 0 and candidates is not None:
            samples = np.asarray(candidates, dtype=np.float64)
        else:
            rng = counter_rng(derive_seed(seed, 'cem'), iteration)
            samples = mean + std * rng.standard_normal(
                (n_samples, horizon, ACTION_DIM))
            if iteration > 0:
                samples[0] = mean
        samples = np.clip(samples, low, high)
        sequences = _to_actions(samples, embodiment, env.config)
        rewards = []
        for index, actions in enumerate(sequences):
            clip = dynamics.predict(initial_state, frame, actions,
                                    seed=derive_seed(seed, 'candidate',
                                                     index))
            logit = classifier.logit(clip[-1], goal_frame) \
                if classifier is not None else None
            rewards.append(reward(clip, goal_frame, logit, reward_weight))
        order = np.argsort(-np.asarray(rewards), kind='stable')
        elites = samples[order[:n_elite]]
        mean = elites.mean(axis=0)
        std = elites.std(axis=0) + 1e-6
    best = int(np.argmax(rewards))
    return PlanResult(sequences[best], samples[best], rewards, best, mean)


@dataclasses.dataclass
class TaskResult:
    """Success rate of a task with per-pair traces."""

    task_id: str
    success_rate: float
    traces: list

    def to_dict(self):
        """Plain dictionary form."""
        return dataclasses.asdict(self)


def evaluate_task(task, dynamics, env, planner_config, seed=0,
                  classifier=None):
    """Plan every pair, execute in the real environment, count successes."""
    successes, traces = 0, []
    for index, pair in enumerate(task.pairs):
        goal_frame = env.render(pair.goal)
        result = plan(
            dynamics, pair.initial, goal_frame, task.horizon,
            n_samples=planner_config.n_samples,
            n_iters=planner_config.n_iters,
            elite_fraction=planner_config.elite_fraction,
            init_std=planner_config.init_std,
            seed=derive_seed(seed, task.task_id, index),
            classifier=classifier if planner_config.use_classifier else None,
            reward_weight=planner_config.reward_weight)
        final = env.rollout(pair.initial, result.actions)[-1]
        result.success = task.success(final, pair)
        successes += int(result.success)
        traces.append({'pair': index, 'success': result.success,
                       'reward': result.best_reward,
                       'actions': [a.to_dict() for a in result.actions]})
    rate = successes / len(task.pairs) if task.pairs else 0.0
    logger.info('Task %s: %d/%d successes', task.task_id, successes,
                len(task.pairs))
    return TaskResult(task.task_id, rate, traces)


def _in_embodiment(action, embodiment):
    if Embodiment(embodiment) == Embodiment.POLAR:
        return remap_to_polar(action)
    return action


def make_task(env, task_id, n_pairs, horizon, goal_step=0.04,
              success_radius=0.05, seed=0):
    """Generate the pairs of a desk-scale task.

    ``reach`` moves the agent a few small steps, ``push`` starts the agent on
    object 0 and drags it, ``hold`` asks the agent to grip an adjacent
    object.
    """
    if task_id not in TASKS:
        raise ConfigError('Unknown task {0!r}'.format(task_id),
                          fields=['planner.tasks'])
    pairs = []
    for index in range(n_pairs):
        pair_seed = derive_seed(seed, 'task', task_id, index)
        rng = counter_rng(pair_seed, 1)
        state = env.initial_state(pair_seed)
        if task_id != 'reach' and not state.objects:
            raise ConfigError('Task {0} needs at least one object'.format(
                task_id), fields=['env.n_objects'])
        if task_id == 'push':
            state = dataclasses.replace(state,
                                        agent_pos=state.objects[0].pos)
        if task_id == 'hold':
            ox, oy = state.objects[0].pos
            angle = rng.uniform(-math.pi, math.pi)
            offset = 0.5 * env.config.agent_radius
            state = dataclasses.replace(state, agent_pos=(
                float(np.clip(ox + offset * math.cos(angle), 0, 1)),
                float(np.clip(oy + offset * math.sin(angle), 0, 1))))
            actions = [RealAction(Embodiment.CARTESIAN, (0.0, 0.0), 1)] * \
                horizon
        else:
            grip = 1 if task_id == 'push' else 0
            actions = []
            for _ in range(horizon):
                angle = rng.uniform(-math.pi, math.pi)
                actions.append(RealAction(
                    Embodiment.CARTESIAN,
                    (goal_step * math.cos(angle), goal_step * math.sin(angle)),
                    grip))
        actions = [_in_embodiment(a, env.embodiment) for a in actions]
        goal = env.rollout(state, actions)[-1]
        pairs.append(TaskPair(state, goal))
    return TaskSpec(task_id, pairs, horizon, success_radius)


def make_tasks(env, planner_config, seed=0):
    """All configured tasks."""
    return [make_task(env, task_id, planner_config.n_pairs,
                      planner_config.horizon, planner_config.goal_step,
                      planner_config.success_radius, seed)
            for task_id in planner_config.tasks]
