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

"""Forward initialization of a skill chain.

Stages are trained in order. Once a sub-policy converges, its successful
terminal environment states become the start-state distribution of the
next stage.
"""

import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from skillchain.chaining.state import (
    PHASE_FORWARD,
    ChainState,
    InitialStateBuffer,
)
from skillchain.config import ChainSpec, NoiseConfig
from skillchain.envs.suites import TaskSuite, make_suite
from skillchain.envs.trajectory import Trajectory
from skillchain.errors import StageFailedError
from skillchain.ppo.agent import ActorCritic, StochasticPolicy
from skillchain.ppo.rollout import (
    Initializer,
    RewardShaper,
    native_initializer,
    run_episodes,
)
from skillchain.ppo.trainer import StageTrainer, TrainResult

logger = logging.getLogger(__name__)

Checkpointer = Callable[[ChainState], None]

_PHASE_KEYS = {
    "forward": 0,
    "finetune": 1,
    "transitions": 2,
    "eval": 3,
    "refresh": 4,
    "monolithic": 5,
}


def seed_for(seed: int, phase: str, *key: int) -> np.random.SeedSequence:
    """Independent, reproducible stream for one (phase, iteration, stage)."""
    return np.random.SeedSequence(seed, spawn_key=(_PHASE_KEYS[phase],) + key)


def suite_for(spec: ChainSpec) -> TaskSuite:
    return make_suite(spec.suite, spec.stages)


def stage_initializer(
    suite: TaskSuite,
    stage: int,
    buffer: Optional[InitialStateBuffer] = None,
    naive: bool = False,
) -> Initializer:
    """Start states for `stage`.

    Stage 0 uses the native reset. Later stages draw uniformly from the
    predecessor's terminal buffer; with `naive`, or while that buffer is
    empty, they use the suite's uninformed sampler.
    """
    if stage == 0:
        return native_initializer

    def initializer(rng: np.random.Generator):
        if not naive and buffer is not None:
            init = buffer.sample(rng)
            if init is not None:
                return init
        return suite.naive_sampler(stage, rng)

    return initializer


def train_stage(
    suite: TaskSuite,
    spec: ChainSpec,
    stage: int,
    initializer: Initializer,
    seed: np.random.SeedSequence,
    max_updates: int,
    agent: Optional[ActorCritic] = None,
    shaper: Optional[RewardShaper] = None,
    noise: NoiseConfig = NoiseConfig(),
    workers: int = 1,
) -> TrainResult:
    trainer = StageTrainer(
        suite,
        stage,
        spec.stages[stage].ppo,
        initializer,
        seed,
        agent=agent,
        noise=noise,
        shaper=shaper,
        workers=workers,
    )
    return trainer.train(
        max_updates, spec.convergence_window, spec.convergence_tol
    )


def evaluate_stage(
    agent: ActorCritic,
    suite: TaskSuite,
    stage: int,
    initializer: Initializer,
    episodes: int,
    rng: np.random.Generator,
    noise: NoiseConfig = NoiseConfig(),
) -> Tuple[float, List[Trajectory]]:
    """Stochastic rollouts of one sub-policy.

    Returns the success rate and the episodes.
    """
    trajectories = run_episodes(
        StochasticPolicy(agent, rng),
        suite,
        stage,
        initializer,
        episodes,
        rng,
        noise,
    )
    rate = float(np.mean([t.success for t in trajectories]))
    return rate, trajectories


def admit_terminal_states(
    buffer: InitialStateBuffer, trajectories: Sequence[Trajectory]
) -> int:
    """Refills `buffer` with the final states of successful episodes.

    The previous contents are kept when no episode succeeded.
    """
    admitted = [t.final_state for t in trajectories if t.success]
    if not admitted:
        logger.warning(
            "No successful episodes; keeping %d buffered start states.",
            len(buffer),
        )
        return 0
    buffer.clear()
    for state in admitted:
        buffer.add(state)
    return len(admitted)


def forward_initialize(
    spec: ChainSpec,
    seed: int = 0,
    noise: NoiseConfig = NoiseConfig(),
    workers: int = 1,
    naive_init: bool = False,
    iteration: int = 0,
    method: str = "ours",
    checkpoint: Optional[Checkpointer] = None,
) -> ChainState:
    """Trains every sub-policy in chronological order.

    Args:
        spec: Chain specification.
        seed: Run seed; each stage derives its own stream from it.
        noise: Observation and action noise during training.
        workers: Rollout worker threads per stage.
        naive_init: Train later stages from the suite's uninformed sampler
          instead of predecessor terminal states.
        iteration: Outer iteration index, for seeding cold restarts.
        method: Method name recorded on the returned state.
        checkpoint: Called with the state after every trained stage.

    Raises:
        StageFailedError: if a stage's success rate after training stays
          below `spec.min_success_rate`.
    """
    suite = suite_for(spec)
    state = ChainState.empty(spec, method)
    state.phase = PHASE_FORWARD
    for stage in range(len(spec.stages)):
        buffer = state.init_buffers[stage]
        initializer = stage_initializer(suite, stage, buffer, naive_init)
        logger.info(
            "Forward training stage %d (%s), %d start states buffered.",
            stage,
            spec.stages[stage].name,
            len(buffer) if buffer is not None else 0,
        )
        result = train_stage(
            suite,
            spec,
            stage,
            initializer,
            seed_for(seed, "forward", iteration, stage),
            spec.max_updates,
            noise=noise,
            workers=workers,
        )
        state.policies.append(result.agent)
        state.history[f"forward/{iteration}/{stage}"] = [
            h.row() for h in result.history
        ]
        rng = np.random.default_rng(seed_for(seed, "eval", iteration, stage))
        rate, trajectories = evaluate_stage(
            result.agent,
            suite,
            stage,
            initializer,
            spec.init_buffer_episodes,
            rng,
            noise,
        )
        logger.info("Stage %d success rate %.3f", stage, rate)
        if rate < spec.min_success_rate:
            raise StageFailedError(stage, rate, spec.min_success_rate)
        if stage + 1 < len(spec.stages):
            admit_terminal_states(state.init_buffers[stage + 1], trajectories)
        if checkpoint is not None:
            checkpoint(state)
    return state
