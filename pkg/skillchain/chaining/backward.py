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

"""Backward fine-tuning with successor feasibility as a terminal reward.

For stage i from the last down to the second: roll out pi^{i-1} and then
pi^i from each boundary it reaches, fit and calibrate F^i on the recorded
(window, return) pairs, fine-tune pi^{i-1} with the combined reward, and
refresh the start states of stage i.
"""

import logging
from typing import Optional

import numpy as np

from skillchain.chaining.forward import (
    Checkpointer,
    admit_terminal_states,
    evaluate_stage,
    forward_initialize,
    seed_for,
    stage_initializer,
    suite_for,
    train_stage,
)
from skillchain.chaining.rewards import FeasibilityShaper
from skillchain.chaining.state import PHASE_BACKWARD, ChainState
from skillchain.config import ChainSpec, NoiseConfig
from skillchain.envs.suites import TaskSuite
from skillchain.envs.trajectory import Trajectory
from skillchain.errors import CalibrationError, NotEnoughSamplesError
from skillchain.feasibility.buffers import (
    FeasibilityBuffers,
    record_transition,
)
from skillchain.feasibility.model import (
    FeasibilityModel,
    TransitionModel,
    calibrate,
    fit_value_feasibility,
    train_feasibility,
)
from skillchain.ppo.agent import StochasticPolicy
from skillchain.ppo.rollout import run_episodes

logger = logging.getLogger(__name__)


def episode_return(
    trajectory: Trajectory, discounted: bool = False, gamma: float = 1.0
) -> float:
    """Return of the rewards the episode was trained on."""
    rewards = trajectory.shaped_rewards or trajectory.rewards
    if not discounted:
        return trajectory.shaped_return
    ret = 0.0
    for r in reversed(rewards):
        ret = r + gamma * ret
    return ret


def successor_shaper(
    state: ChainState, stage: int, spec: ChainSpec
) -> Optional[FeasibilityShaper]:
    """Combined reward of `stage` when F targets propagate backward."""
    if spec.feasibility.target != "combined":
        return None
    if stage + 1 >= state.num_stages or state.models[stage + 1] is None:
        return None
    return FeasibilityShaper(state.models[stage + 1], spec.lam1, spec.lam2)


def collect_transitions(
    state: ChainState,
    suite: TaskSuite,
    stage: int,
    spec: ChainSpec,
    rng: np.random.Generator,
    noise: NoiseConfig = NoiseConfig(),
) -> FeasibilityBuffers:
    """Records (predecessor terminal window, successor return) pairs."""
    config = spec.feasibility
    buffers = FeasibilityBuffers(stage, config.capacity, config.window_length)
    pred_init = stage_initializer(
        suite, stage - 1, state.init_buffers[stage - 1]
    )
    pred_policy = StochasticPolicy(state.policies[stage - 1], rng)
    succ_policy = StochasticPolicy(state.policies[stage], rng)
    shaper = successor_shaper(state, stage, spec)
    gamma = spec.stages[stage].ppo.gamma
    for episode in range(config.rollout_episodes):
        (pred,) = run_episodes(
            pred_policy, suite, stage - 1, pred_init, 1, rng, noise
        )
        pred.episode = episode
        boundary = pred.final_state
        (succ,) = run_episodes(
            succ_policy,
            suite,
            stage,
            lambda _: boundary,
            1,
            rng,
            noise,
            shaper,
        )
        ret = episode_return(succ, config.discounted, gamma)
        record_transition(buffers, pred, ret, succ.success)
    logger.info(
        "Stage %d: recorded %d transitions, %d successor successes.",
        stage,
        len(buffers),
        buffers.num_successes,
    )
    return buffers


def fit_transition_model(
    state: ChainState,
    stage: int,
    buffers: FeasibilityBuffers,
    spec: ChainSpec,
    rng: np.random.Generator,
) -> TransitionModel:
    """Trains and calibrates F for `stage`.

    Raises:
        NotEnoughSamplesError: if the buffer is too small to train on.
        CalibrationError: if calibration fails and uncalibrated models are
          not allowed.
    """
    config = spec.feasibility
    if config.oracle == "value":
        model = fit_value_feasibility(state.policies[stage], buffers, stage)
    else:
        model = FeasibilityModel.init(
            state.policies[stage].obs_dim, config, rng, stage=stage
        )
        try:
            model = train_feasibility(
                model,
                buffers,
                config.epochs,
                config.lr,
                config.minibatch_size,
                rng,
            )
        except NotEnoughSamplesError as e:
            e.message = f"Training F for stage {stage}: {e.message}"
            raise
    try:
        return calibrate(
            model, buffers, config.percentile, config.min_successes
        )
    except CalibrationError as e:
        if not config.allow_uncalibrated:
            raise
        logger.warning(
            "Stage %d feasibility model left uncalibrated: %s",
            stage,
            e.message,
        )
        return model


def backward_finetune(
    state: ChainState,
    spec: Optional[ChainSpec] = None,
    seed: int = 0,
    noise: NoiseConfig = NoiseConfig(),
    workers: int = 1,
    checkpoint: Optional[Checkpointer] = None,
) -> ChainState:
    """Runs `outer_iterations` backward passes over the chain.

    The state is updated in place and returned. The last sub-policy is never
    fine-tuned. A one-stage chain is returned unchanged.

    Args:
        state: A forward-initialized chain.
        spec: Overrides `state.spec` (e.g. a different lam2).
        seed: Run seed.
        noise: Observation and action noise during rollouts.
        workers: Rollout worker threads.
        checkpoint: Called with the state after every fine-tuned stage.
    """
    spec = spec or state.spec
    state.spec = spec
    if state.num_stages < 2:
        return state
    suite = suite_for(spec)
    for m in range(spec.outer_iterations):
        if m > 0 and not spec.warm_start:
            fresh = forward_initialize(
                spec, seed, noise, workers, iteration=m, method=state.method
            )
            fresh.history = {**state.history, **fresh.history}
            state = fresh
        for stage in range(state.num_stages - 1, 0, -1):
            rng = np.random.default_rng(
                seed_for(seed, "transitions", m, stage)
            )
            buffers = collect_transitions(state, suite, stage, spec, rng, noise)
            state.feasibility_buffers[stage] = buffers
            state.models[stage] = fit_transition_model(
                state, stage, buffers, spec, rng
            )
            pred = stage - 1
            initializer = stage_initializer(
                suite, pred, state.init_buffers[pred]
            )
            logger.info(
                "Fine-tuning stage %d with stage %d feasibility (m=%d).",
                pred,
                stage,
                m,
            )
            result = train_stage(
                suite,
                spec,
                pred,
                initializer,
                seed_for(seed, "finetune", m, pred),
                spec.finetune_updates,
                agent=state.policies[pred],
                shaper=FeasibilityShaper(
                    state.models[stage], spec.lam1, spec.lam2
                ),
                noise=noise,
                workers=workers,
            )
            state.policies[pred] = result.agent
            state.history[f"finetune/{m}/{pred}"] = [
                h.row() for h in result.history
            ]
            eval_rng = np.random.default_rng(seed_for(seed, "refresh", m, pred))
            _, trajectories = evaluate_stage(
                result.agent,
                suite,
                pred,
                initializer,
                spec.init_buffer_episodes,
                eval_rng,
                noise,
            )
            admit_terminal_states(state.init_buffers[stage], trajectories)
            state.phase = PHASE_BACKWARD
            if checkpoint is not None:
                checkpoint(state)
        state.iteration = m + 1
    return state
