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

"""Chain execution with feasibility-based switching.

An episode starts in stage 0. After a stage has run for the minimum dwell
the executor scores the trailing observation window. Moving on to the next
stage is free; any other transition, including a restart, spends one unit
of the switch budget. When a stage finishes (success or horizon) the next
stage starts, and the episode succeeds when the last stage succeeds.
"""

import collections
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Deque, List, Optional, Sequence

import numpy as np

from skillchain import csvio
from skillchain.chaining.baselines import SequentialTask
from skillchain.chaining.state import ChainState
from skillchain.config import ExecConfig, NoiseConfig, PerturbationConfig
from skillchain.envs.state import EnvState
from skillchain.envs.suites import TaskSuite, make_suite
from skillchain.envs.trajectory import DEFAULT_WINDOW, terminal_window
from skillchain.executor.control import (
    Perturber,
    auto_approach,
    smooth_action,
)
from skillchain.executor.switching import select_policy, should_switch
from skillchain.feasibility.model import TransitionModel
from skillchain.ppo.agent import ActorCritic

logger = logging.getLogger(__name__)

EPISODE_COLUMNS = (
    "episode",
    "seed",
    "success",
    "switches",
    "restarts",
    "stages_visited",
    "steps",
    "stage_steps",
    "stages_succeeded",
    "perturbed",
)


@dataclass
class EpisodeReport:
    episode: int
    seed: int
    success: bool = False
    switches: int = 0
    restarts: int = 0
    stages_visited: List[int] = field(default_factory=list)
    steps: int = 0
    stage_steps: List[int] = field(default_factory=list)
    stage_success: List[bool] = field(default_factory=list)
    perturbed: bool = False
    final_state: Optional[EnvState] = None

    def row(self) -> dict:
        return {
            "episode": self.episode,
            "seed": self.seed,
            "success": self.success,
            "switches": self.switches,
            "restarts": self.restarts,
            "stages_visited": "-".join(map(str, self.stages_visited)),
            "steps": self.steps,
            "stage_steps": "-".join(map(str, self.stage_steps)),
            "stages_succeeded": "-".join(
                "1" if s else "0" for s in self.stage_success
            ),
            "perturbed": self.perturbed,
        }


def _approach(state: EnvState, config: ExecConfig) -> EnvState:
    if not config.auto_approach or state.held:
        return state
    return auto_approach(
        state, (state.obj_x, state.obj_y), config.approach_radius
    )


class _Actor:
    def __init__(self, config: ExecConfig, action_dim: int, rng):
        self.config = config
        self.rng = rng
        self.prev = np.zeros(action_dim)

    def __call__(self, agent: ActorCritic, obs: np.ndarray) -> np.ndarray:
        if self.config.deterministic_actions:
            raw = agent.act(obs)
        else:
            raw = agent.sample(obs, self.rng)[0]
        self.prev = smooth_action(self.prev, raw, self.config.ema)
        return self.prev


def run_chain(
    policies: Sequence[ActorCritic],
    models: Sequence[Optional[TransitionModel]],
    suite: TaskSuite,
    config: ExecConfig,
    rng: np.random.Generator,
    noise: NoiseConfig = NoiseConfig(),
    perturbation: PerturbationConfig = PerturbationConfig(),
    init: Optional[EnvState] = None,
    episode: int = 0,
    seed: int = 0,
) -> EpisodeReport:
    """Executes one episode of the whole chain.

    Args:
        policies: One sub-policy per stage.
        models: Feasibility models indexed by stage; entry 0 is unused and
          uncalibrated entries are ignored.
        suite: Environment suite.
        config: Switch budget, dwell, smoothing and approach settings.
        rng: Randomness for the environment, noise and perturbation.
        noise: Observation and action noise.
        perturbation: Drop perturbation settings.
        init: Optional stage-0 start state (e.g. an already grasped block).
        episode: Episode id for the report.
        seed: Seed recorded in the report.
    """
    k = len(policies)
    usable = [
        m if m is not None and m.threshold is not None else None
        for m in models
    ]
    window_len = max(
        [m.window_length for m in usable if m is not None] or [DEFAULT_WINDOW]
    )
    dwell = config.min_dwell or window_len
    max_steps = config.max_episode_steps or 2 * sum(
        s.horizon for s in suite.stages
    )
    report = EpisodeReport(
        episode=episode,
        seed=seed,
        stage_steps=[0] * k,
        stage_success=[False] * k,
    )
    perturb = Perturber(perturbation, [s.name for s in suite.stages], rng)
    report.perturbed = perturb.armed
    act = _Actor(config, suite.action_dim, rng)

    state, obs = suite.reset(0, init, rng, noise)
    goal = (state.goal_x, state.goal_y, state.goal_angle)
    if config.switch_budget > 0:
        start = select_policy(usable, terminal_window([obs], window_len))
        if not start.restart:
            state = suite.enter_stage(state, start.stage)
            report.switches += 1
    state = _approach(state, config)
    obs = suite.observe(state, noise, rng)
    window: Deque[np.ndarray] = collections.deque([obs], maxlen=window_len)
    report.stages_visited.append(state.stage)

    def enter(target: int, restart: bool = False):
        nonlocal state, obs, window
        if restart:
            fresh, _ = suite.reset(0, None, rng, noise)
            state = fresh.replace(
                goal_x=goal[0], goal_y=goal[1], goal_angle=goal[2]
            )
            report.restarts += 1
        else:
            state = suite.enter_stage(state, target)
        state = _approach(state, config)
        obs = suite.observe(state, noise, rng)
        window = collections.deque([obs], maxlen=window_len)
        report.stages_visited.append(target)

    while report.steps < max_steps:
        stage = state.stage
        action = act(policies[stage], obs)
        result = suite.step(state, action, noise, rng)
        state = perturb(result.state)
        obs = (
            result.observation
            if state is result.state
            else suite.observe(state, noise, rng)
        )
        window.append(obs)
        report.steps += 1
        report.stage_steps[stage] += 1
        if result.success and state is result.state:
            report.stage_success[stage] = True
            if stage == k - 1:
                report.success = True
                break
        nxt = stage + 1
        advance = result.done
        if not advance and nxt < k and usable[nxt] is not None:
            advance = (
                state.step >= dwell
                and should_switch(usable[nxt], list(window))
            )
        if advance:
            if nxt >= k:
                break
            enter(nxt)
            continue
        if report.switches < config.switch_budget and state.step >= dwell:
            decision = select_policy(usable, list(window))
            if decision.restart and stage == 0:
                continue
            if decision.stage != stage or decision.restart:
                report.switches += 1
                logger.debug(
                    "Switch %d -> %d (%s) at step %d, scores %s",
                    stage,
                    decision.stage,
                    decision.reason,
                    report.steps,
                    decision.scores,
                )
                enter(decision.stage, restart=decision.restart)
    report.final_state = state
    return report


def run_monolithic(
    agent: ActorCritic,
    suite: TaskSuite,
    config: ExecConfig,
    rng: np.random.Generator,
    noise: NoiseConfig = NoiseConfig(),
    perturbation: PerturbationConfig = PerturbationConfig(),
    episode: int = 0,
    seed: int = 0,
) -> EpisodeReport:
    """Executes a single whole-task policy; switching does not apply."""
    task = SequentialTask(suite)
    k = suite.num_stages
    report = EpisodeReport(
        episode=episode,
        seed=seed,
        stage_steps=[0] * k,
        stage_success=[False] * k,
    )
    perturb = Perturber(perturbation, [s.name for s in suite.stages], rng)
    report.perturbed = perturb.armed
    act = _Actor(config, suite.action_dim, rng)
    state, obs = task.reset(0, None, rng, noise)
    report.stages_visited.append(0)
    limit = config.max_episode_steps or task.max_steps
    while report.steps < limit:
        stage = state.stage
        result = task.step(state, act(agent, obs), noise, rng)
        state = perturb(result.state)
        obs = (
            result.observation
            if state is result.state
            else suite.observe(state, noise, rng)
        )
        report.steps += 1
        report.stage_steps[stage] += 1
        if state.stage != stage:
            report.stage_success[stage] = True
            report.stages_visited.append(state.stage)
        if result.success:
            report.stage_success[k - 1] = True
            report.success = True
        if result.done:
            break
    report.final_state = state
    return report


def evaluate_chain(
    chain: ChainState,
    config: ExecConfig,
    episodes: int,
    seed: int = 0,
    noise: NoiseConfig = NoiseConfig(),
    perturbation: PerturbationConfig = PerturbationConfig(),
    workers: int = 1,
) -> List[EpisodeReport]:
    """Runs `episodes` independent episodes of a trained chain.

    Every episode draws from its own child of the seed, so reports do not
    depend on the worker count.
    """
    suite = make_suite(chain.spec.suite, chain.spec.stages)
    children = np.random.SeedSequence(seed).spawn(episodes)

    def one(i: int) -> EpisodeReport:
        rng = np.random.default_rng(children[i])
        if chain.monolithic:
            return run_monolithic(
                chain.policies[0],
                suite,
                config,
                rng,
                noise,
                perturbation,
                episode=i,
                seed=seed,
            )
        return run_chain(
            chain.policies,
            chain.models,
            suite,
            config,
            rng,
            noise,
            perturbation,
            episode=i,
            seed=seed,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(one, range(episodes)))
    else:
        reports = [one(i) for i in range(episodes)]
    rate = float(np.mean([r.success for r in reports])) if reports else 0.0
    logger.info(
        "Evaluated %d episodes (budget %d): success %.3f",
        episodes,
        config.switch_budget,
        rate,
    )
    return reports


def write_episode_reports(
    path: os.PathLike, reports: Sequence[EpisodeReport]
) -> int:
    return csvio.write_csv(path, EPISODE_COLUMNS, (r.row() for r in reports))


def stage_success_rates(reports: Sequence[EpisodeReport]) -> List[float]:
    if not reports:
        return []
    table = np.array([r.stage_success for r in reports], dtype=float)
    return [float(v) for v in table.mean(axis=0)]
