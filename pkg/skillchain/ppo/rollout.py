# Copyright 2025 The Skillchain Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Rollout collection with frozen policy copies.

A `RolloutWorker` owns a group of environments and its own random stream.
Several workers can run in a thread pool; they share nothing but the
read-only policy copy and the initializer.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Protocol

import numpy as np

from skillchain.config import NoiseConfig
from skillchain.envs.state import EnvState
from skillchain.envs.suites import TaskSuite
from skillchain.envs.trajectory import Trajectory
from skillchain.ppo.agent import ActorCritic
from skillchain.ppo.storage import TrajectoryBatch, concat_batches

logger = logging.getLogger(__name__)

Initializer = Callable[[np.random.Generator], Optional[EnvState]]


class Policy(Protocol):
    def act(self, obs: np.ndarray) -> np.ndarray: ...


class RewardShaper(Protocol):
    """Maps the task reward of the step just appended to `trajectory`."""

    def __call__(
        self, reward: float, trajectory: Trajectory, done: bool
    ) -> float: ...


def native_initializer(rng: np.random.Generator) -> Optional[EnvState]:
    return None


class _Slot:
    __slots__ = ("state", "obs", "trajectory")

    def __init__(self, state, obs, trajectory):
        self.state = state
        self.obs = obs
        self.trajectory = trajectory


class RolloutWorker:
    """Steps `num_envs` environments of one stage in lockstep."""

    def __init__(
        self,
        suite: TaskSuite,
        stage: int,
        num_envs: int,
        initializer: Initializer,
        rng: np.random.Generator,
        noise: NoiseConfig = NoiseConfig(),
        shaper: Optional[RewardShaper] = None,
    ):
        self.suite = suite
        self.stage = stage
        self.initializer = initializer
        self.rng = rng
        self.noise = noise
        self.shaper = shaper
        self._episodes = 0
        self._slots = [self._start() for _ in range(num_envs)]

    def _start(self) -> _Slot:
        init = self.initializer(self.rng)
        state, obs = self.suite.reset(self.stage, init, self.rng, self.noise)
        traj = Trajectory(
            stage=self.stage,
            observations=[obs],
            episode=self._episodes,
            initial_state=state,
        )
        self._episodes += 1
        return _Slot(state, obs, traj)

    def collect(self, agent: ActorCritic, steps: int) -> TrajectoryBatch:
        n = len(self._slots)
        obs_dim = self.suite.obs_dim
        act_dim = self.suite.action_dim
        obs_buf = np.zeros((steps, n, obs_dim))
        act_buf = np.zeros((steps, n, act_dim))
        mean_buf = np.zeros((steps, n, act_dim))
        logp_buf = np.zeros((steps, n))
        rew_buf = np.zeros((steps, n))
        val_buf = np.zeros((steps + 1, n))
        done_buf = np.zeros((steps, n))
        finished: List[Trajectory] = []
        for t in range(steps):
            obs = np.stack([s.obs for s in self._slots])
            actions, log_probs, means = agent.sample(obs, self.rng)
            obs_buf[t] = obs
            act_buf[t] = actions
            mean_buf[t] = means
            logp_buf[t] = log_probs
            val_buf[t] = agent.value_of(obs)
            for i, slot in enumerate(self._slots):
                result = self.suite.step(
                    slot.state, actions[i], self.noise, self.rng
                )
                traj = slot.trajectory
                traj.observations.append(result.observation)
                traj.actions.append(actions[i])
                traj.rewards.append(result.reward)
                reward = result.reward
                if self.shaper is not None:
                    reward = self.shaper(reward, traj, result.done)
                traj.shaped_rewards.append(reward)
                rew_buf[t, i] = reward
                done_buf[t, i] = float(result.done)
                if result.done:
                    traj.success = result.success
                    traj.final_state = result.state
                    finished.append(traj)
                    self._slots[i] = self._start()
                else:
                    slot.state = result.state
                    slot.obs = result.observation
        val_buf[steps] = agent.value_of(np.stack([s.obs for s in self._slots]))
        return TrajectoryBatch(
            obs=obs_buf,
            actions=act_buf,
            log_probs=logp_buf,
            rewards=rew_buf,
            values=val_buf,
            dones=done_buf,
            means=mean_buf,
            log_std=agent.head.log_std.copy(),
            episodes=finished,
        )


def make_workers(
    suite: TaskSuite,
    stage: int,
    num_envs: int,
    initializer: Initializer,
    seed: np.random.SeedSequence,
    workers: int = 1,
    noise: NoiseConfig = NoiseConfig(),
    shaper: Optional[RewardShaper] = None,
) -> List[RolloutWorker]:
    """Splits `num_envs` environments over `workers` independent streams."""
    workers = max(1, min(workers, num_envs))
    sizes = [num_envs // workers] * workers
    for i in range(num_envs % workers):
        sizes[i] += 1
    return [
        RolloutWorker(
            suite,
            stage,
            size,
            initializer,
            np.random.default_rng(child),
            noise,
            shaper,
        )
        for size, child in zip(sizes, seed.spawn(workers))
    ]


def collect_rollout(
    workers: List[RolloutWorker],
    agent: ActorCritic,
    steps: int,
    pool: Optional[ThreadPoolExecutor] = None,
) -> TrajectoryBatch:
    """Collects one segment from every worker with a frozen policy copy."""
    frozen = agent.copy()
    if pool is None or len(workers) == 1:
        parts = [w.collect(frozen, steps) for w in workers]
    else:
        parts = list(pool.map(lambda w: w.collect(frozen, steps), workers))
    return concat_batches(parts).validate()


def run_episodes(
    policy: Policy,
    suite: TaskSuite,
    stage: int,
    initializer: Initializer,
    episodes: int,
    rng: np.random.Generator,
    noise: NoiseConfig = NoiseConfig(),
    shaper: Optional[RewardShaper] = None,
) -> List[Trajectory]:
    """Runs whole single-stage episodes one after another."""
    out = []
    for episode in range(episodes):
        state, obs = suite.reset(stage, initializer(rng), rng, noise)
        traj = Trajectory(
            stage=stage,
            observations=[obs],
            episode=episode,
            initial_state=state,
        )
        while True:
            action = np.asarray(policy.act(obs), dtype=np.float64)
            result = suite.step(state, action, noise, rng)
            traj.observations.append(result.observation)
            traj.actions.append(action)
            traj.rewards.append(result.reward)
            reward = result.reward
            if shaper is not None:
                reward = shaper(reward, traj, result.done)
            traj.shaped_rewards.append(reward)
            state, obs = result.state, result.observation
            if result.done:
                traj.success = result.success
                traj.final_state = state
                break
        out.append(traj)
    logger.debug(
        "Stage %d: %d episodes, success %.3f",
        stage,
        episodes,
        np.mean([t.success for t in out]) if out else float("nan"),
    )
    return out
