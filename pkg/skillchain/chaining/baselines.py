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

"""Comparison methods and the method dispatcher."""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from skillchain.chaining.backward import backward_finetune
from skillchain.chaining.forward import (
    Checkpointer,
    forward_initialize,
    seed_for,
    suite_for,
)
from skillchain.chaining.state import PHASE_MONOLITHIC, ChainState
from skillchain.config import ChainSpec, NoiseConfig
from skillchain.envs.state import EnvState, StepResult
from skillchain.envs.suites import TaskSuite
from skillchain.errors import ConfigError
from skillchain.ppo.agent import ActorCritic
from skillchain.ppo.rollout import native_initializer
from skillchain.ppo.trainer import StageTrainer

logger = logging.getLogger(__name__)

BASELINES = ("rl_scratch", "curriculum", "policy_seq", "v_chain")


class SequentialTask:
    """The first `upto` stages of a suite played as one episode.

    Reaching a stage's success condition moves straight into the next
    stage; running out of a stage's horizon ends the episode. With `sparse`
    the only reward is 1 on completing the last stage.
    """

    def __init__(
        self, suite: TaskSuite, upto: Optional[int] = None, sparse=False
    ):
        self.suite = suite
        self.upto = suite.num_stages if upto is None else upto
        self.sparse = sparse
        self.name = suite.name
        self.stages = suite.stages[: self.upto]

    @property
    def obs_dim(self) -> int:
        return self.suite.obs_dim

    @property
    def action_dim(self) -> int:
        return self.suite.action_dim

    @property
    def num_stages(self) -> int:
        return 1

    @property
    def max_steps(self) -> int:
        return sum(s.horizon for s in self.stages)

    def reset(
        self,
        stage: int = 0,
        init: Optional[EnvState] = None,
        rng: Optional[np.random.Generator] = None,
        noise: NoiseConfig = NoiseConfig(),
    ) -> Tuple[EnvState, np.ndarray]:
        return self.suite.reset(0, init, rng, noise)

    def step(
        self,
        state: EnvState,
        action,
        noise: NoiseConfig,
        rng: np.random.Generator,
    ) -> StepResult:
        result = self.suite.step(state, action, noise, rng)
        last = self.upto - 1
        if result.success and state.stage < last:
            nxt = self.suite.enter_stage(result.state, state.stage + 1)
            reward = 0.0 if self.sparse else result.reward
            return StepResult(nxt, result.observation, reward, False, False)
        finished = result.success and state.stage == last
        reward = result.reward
        if self.sparse:
            reward = 1.0 if finished else 0.0
        return StepResult(
            result.state, result.observation, reward, finished, result.done
        )


def _train_monolithic(
    task: SequentialTask,
    spec: ChainSpec,
    seed: np.random.SeedSequence,
    max_updates: int,
    agent: Optional[ActorCritic],
    noise: NoiseConfig,
    workers: int,
):
    trainer = StageTrainer(
        task,
        0,
        spec.stages[0].ppo,
        native_initializer,
        seed,
        agent=agent,
        noise=noise,
        workers=workers,
    )
    return trainer.train(
        max_updates, spec.convergence_window, spec.convergence_tol
    )


def train_rl_scratch(
    spec: ChainSpec,
    seed: int = 0,
    noise: NoiseConfig = NoiseConfig(),
    workers: int = 1,
) -> ChainState:
    """One policy on the whole task with a sparse completion reward.

    It gets the update budget of all stages combined.
    """
    task = SequentialTask(suite_for(spec), sparse=True)
    result = _train_monolithic(
        task,
        spec,
        seed_for(seed, "monolithic", 0),
        spec.max_updates * len(spec.stages),
        None,
        noise,
        workers,
    )
    state = ChainState.empty(spec, "rl_scratch")
    state.policies = [result.agent]
    state.history["monolithic/0"] = [h.row() for h in result.history]
    state.phase = PHASE_MONOLITHIC
    return state


def train_curriculum(
    spec: ChainSpec,
    seed: int = 0,
    noise: NoiseConfig = NoiseConfig(),
    workers: int = 1,
) -> ChainState:
    """One policy trained on ever longer prefixes of the chain."""
    suite = suite_for(spec)
    agent = None
    state = ChainState.empty(spec, "curriculum")
    for k in range(1, len(spec.stages) + 1):
        logger.info("Curriculum: training on the first %d stages.", k)
        result = _train_monolithic(
            SequentialTask(suite, upto=k),
            spec,
            seed_for(seed, "monolithic", k),
            spec.max_updates,
            agent,
            noise,
            workers,
        )
        agent = result.agent
        state.history[f"monolithic/{k}"] = [h.row() for h in result.history]
    state.policies = [agent]
    state.phase = PHASE_MONOLITHIC
    return state


def run_baseline(
    kind: str,
    spec: ChainSpec,
    seed: int = 0,
    noise: NoiseConfig = NoiseConfig(),
    workers: int = 1,
    checkpoint: Optional[Checkpointer] = None,
) -> ChainState:
    """Trains one of the comparison methods.

    policy_seq is the full pipeline with lam2 = 0; v_chain swaps the learned
    feasibility model for the successor's value function.

    Raises:
        ConfigError: for an unknown method.
    """
    if kind == "rl_scratch":
        return train_rl_scratch(spec, seed, noise, workers)
    if kind == "curriculum":
        return train_curriculum(spec, seed, noise, workers)
    if kind == "policy_seq":
        spec = spec.with_changes(lam2=0.0)
    elif kind == "v_chain":
        spec = spec.with_feasibility(oracle="value")
    else:
        raise ConfigError(
            f"Unknown baseline '{kind}'; expected one of {BASELINES}."
        )
    return run_chain_method(spec, kind, seed, noise, workers, checkpoint)


def run_chain_method(
    spec: ChainSpec,
    method: str = "ours",
    seed: int = 0,
    noise: NoiseConfig = NoiseConfig(),
    workers: int = 1,
    checkpoint: Optional[Checkpointer] = None,
) -> ChainState:
    """Forward initialization followed by backward fine-tuning."""
    state = forward_initialize(
        spec, seed, noise, workers, method=method, checkpoint=checkpoint
    )
    return backward_finetune(
        state, spec, seed, noise, workers, checkpoint=checkpoint
    )


def run_method(
    method: str,
    spec: ChainSpec,
    seed: int = 0,
    noise: NoiseConfig = NoiseConfig(),
    workers: int = 1,
    checkpoint: Optional[Checkpointer] = None,
) -> ChainState:
    if method == "ours":
        return run_chain_method(spec, "ours", seed, noise, workers, checkpoint)
    return run_baseline(method, spec, seed, noise, workers, checkpoint)


def methods_available() -> Sequence[str]:
    return ("ours",) + BASELINES
