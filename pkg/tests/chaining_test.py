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


"""Test cases for the chaining package."""

import json
import os
import unittest

import numpy as np

from skillchain.chaining.backward import (
    episode_return,
    fit_transition_model,
    successor_shaper,
)
from skillchain.chaining.baselines import (
    SequentialTask,
    methods_available,
    run_baseline,
    run_method,
)
from skillchain.chaining.forward import (
    admit_terminal_states,
    seed_for,
    stage_initializer,
    suite_for,
)
from skillchain.chaining.rewards import FeasibilityShaper, combined_reward
from skillchain.chaining.state import (
    PHASE_BACKWARD,
    PHASE_MONOLITHIC,
    ChainState,
    InitialStateBuffer,
    state_from_dict,
    state_to_dict,
)
from skillchain.config import NoiseConfig, default_chain_spec, smoke_config
from skillchain.envs.state import EnvState
from skillchain.envs.trajectory import Trajectory
from skillchain.errors import CalibrationError, ConfigError
from skillchain.feasibility.buffers import FeasibilityBuffers
from skillchain.ppo.agent import ActorCritic
from skillchain.ppo.rollout import native_initializer

SLOW = os.getenv("SKILLCHAIN_SLOW_TESTS") == "1"


class ConstantModel:
    """Feasibility double that predicts the last observation's first entry."""

    stage = 1
    window_length = 2
    target_mean = 0.0
    target_std = 1.0
    threshold = 1.0

    def predict(self, window):
        return float(np.asarray(window)[-1, 0])


def blockchain_state(**changes) -> EnvState:
    return EnvState(
        suite="blockchain",
        hand_x=0.0,
        hand_y=0.0,
        hand_angle=0.0,
        grip=0.0,
        obj_x=0.25,
        obj_y=0.0,
        obj_angle=0.0,
        goal_x=0.0,
        goal_y=0.0,
        goal_angle=0.0,
    ).replace(**changes)


def finished(success: bool, final_x: float) -> Trajectory:
    return Trajectory(
        stage=0,
        observations=[np.zeros(2)],
        success=success,
        final_state=blockchain_state(hand_x=final_x),
    )


class TestCombinedReward(unittest.TestCase):
    """Test cases for the fine-tuning reward."""

    def test_task_only(self):
        """Tests that lam2 = 0 leaves the scaled task reward."""
        self.assertEqual(combined_reward(2.0, 9.0, 0.5, 0.0, True), 1.0)

    def test_terminal_bonus(self):
        """Tests that the bonus lands on the terminal step only."""
        self.assertAlmostEqual(combined_reward(2.0, 3.2, 0.0, 0.5, True), 1.6)
        self.assertEqual(combined_reward(2.0, 3.2, 0.0, 0.5, False), 0.0)

    def test_shaper_scores_window(self):
        """Tests the shaper's bonus from the trajectory's last observation."""
        traj = Trajectory(
            stage=0, observations=[np.array([0.0]), np.array([3.2])]
        )
        shaper = FeasibilityShaper(ConstantModel(), lam1=1.0, lam2=0.5)
        self.assertAlmostEqual(shaper(1.0, traj, True), 1.0 + 0.5 * 2.2)
        self.assertEqual(shaper(1.0, traj, False), 1.0)
        self.assertEqual(FeasibilityShaper(None, 2.0)(1.0, traj, True), 2.0)


class TestChainState(unittest.TestCase):
    """Test cases for start-state buffers and state records."""

    def test_buffer_ring(self):
        """Tests capacity, emptiness and uniform draws."""
        buffer = InitialStateBuffer(capacity=2)
        self.assertIsNone(buffer.sample(np.random.default_rng(0)))
        for x in (0.1, 0.2, 0.3):
            buffer.add(blockchain_state(hand_x=x))
        self.assertEqual([s.hand_x for s in buffer.states()], [0.2, 0.3])
        drawn = buffer.sample(np.random.default_rng(0))
        self.assertIn(drawn, buffer.states())

    def test_state_dict_round_trip(self):
        """Tests that states survive JSON with numpy scalars inside."""
        state = blockchain_state(
            hand_x=np.float64(0.125),
            held=np.bool_(False),
            step=np.int64(3),
            prev_action=(0.5, 0.0, 0.0, -1.0),
        )
        data = json.loads(json.dumps(state_to_dict(state)))
        self.assertEqual(state_from_dict(data), state)

    def test_empty_chain(self):
        """Tests the per-stage list layout of a fresh chain."""
        state = ChainState.empty(default_chain_spec("blockchain"))
        self.assertEqual(state.num_stages, 4)
        self.assertIsNone(state.init_buffers[0])
        self.assertEqual(len(state.init_buffers), 4)
        self.assertEqual(state.calibrated_models(), [None] * 4)

    def test_admit_terminal_states(self):
        """Tests refills from successes and keeping old states otherwise."""
        buffer = InitialStateBuffer()
        buffer.add(blockchain_state(hand_x=-0.4))
        self.assertEqual(admit_terminal_states(buffer, [finished(False, 0)]), 0)
        self.assertEqual(len(buffer), 1)
        admitted = admit_terminal_states(
            buffer, [finished(True, 0.1), finished(False, 0.2)]
        )
        self.assertEqual(admitted, 1)
        self.assertEqual([s.hand_x for s in buffer.states()], [0.1])


class TestInitializers(unittest.TestCase):
    """Test cases for stage start-state sources."""

    def setUp(self):
        self.suite = suite_for(default_chain_spec("blockchain"))
        self.rng = np.random.default_rng(0)

    def test_first_stage_is_native(self):
        """Tests that stage 0 always resets natively."""
        self.assertIs(stage_initializer(self.suite, 0), native_initializer)

    def test_buffer_then_fallback(self):
        """Tests buffered draws and the naive fallback."""
        buffer = InitialStateBuffer()
        empty = stage_initializer(self.suite, 2, buffer)(self.rng)
        self.assertEqual(empty.stage, 2)
        stored = blockchain_state(depth=0.0)
        buffer.add(stored)
        buffered = stage_initializer(self.suite, 2, buffer)(self.rng)
        self.assertEqual(buffered, stored)
        naive = stage_initializer(self.suite, 2, buffer, naive=True)(self.rng)
        self.assertNotEqual(naive, stored)

    def test_seed_streams(self):
        """Tests that phases and stages draw independent streams."""
        a = seed_for(0, "forward", 0, 1).generate_state(2)
        b = seed_for(0, "forward", 0, 1).generate_state(2)
        c = seed_for(0, "finetune", 0, 1).generate_state(2)
        d = seed_for(0, "forward", 0, 2).generate_state(2)
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))
        self.assertFalse(np.array_equal(a, d))


class TestSequentialTask(unittest.TestCase):
    """Test cases for the monolithic baselines' task."""

    def setUp(self):
        self.suite = suite_for(default_chain_spec("blockchain"))
        self.rng = np.random.default_rng(0)

    def test_sparse_chaining(self):
        """Tests stage hand-over and the sparse completion reward."""
        task = SequentialTask(self.suite, upto=2, sparse=True)
        self.assertEqual(task.max_steps, 120)
        state, _ = task.reset(0, blockchain_state(depth=0.0), self.rng)
        first = task.step(state, np.zeros(4), NoiseConfig(), self.rng)
        self.assertEqual(first.state.stage, 1)
        self.assertEqual((first.reward, first.success, first.done), (0, 0, 0))
        second = task.step(first.state, np.zeros(4), NoiseConfig(), self.rng)
        self.assertTrue(second.success)
        self.assertTrue(second.done)
        self.assertEqual(second.reward, 1.0)

    def test_dense_rewards(self):
        """Tests that dense mode passes stage rewards through."""
        task = SequentialTask(self.suite, upto=1)
        state, _ = task.reset(0, blockchain_state(depth=0.0), self.rng)
        result = task.step(state, np.zeros(4), NoiseConfig(), self.rng)
        self.assertTrue(result.success)
        self.assertAlmostEqual(result.reward, 5.0 - 0.05)


class TestBackwardHelpers(unittest.TestCase):
    """Test cases for the backward-pass building blocks."""

    def setUp(self):
        self.spec = default_chain_spec("toolflip")

    def test_episode_return(self):
        """Tests shaped returns and discounting."""
        traj = Trajectory(
            stage=0, rewards=[1.0, 1.0], shaped_rewards=[1.0, 3.0]
        )
        self.assertEqual(episode_return(traj), 4.0)
        self.assertEqual(episode_return(traj, True, 0.5), 2.5)
        plain = Trajectory(stage=0, rewards=[2.0])
        self.assertEqual(episode_return(plain), 2.0)

    def test_successor_shaper(self):
        """Tests that task-only targets skip shaping."""
        state = ChainState.empty(default_chain_spec("blockchain"))
        state.models[2] = ConstantModel()
        spec = state.spec
        self.assertIsInstance(
            successor_shaper(state, 1, spec), FeasibilityShaper
        )
        self.assertIsNone(successor_shaper(state, 2, spec))
        task_only = spec.with_feasibility(target="task")
        self.assertIsNone(successor_shaper(state, 1, task_only))

    def test_uncalibrated_value_oracle(self):
        """Tests the calibration failure path of the value oracle."""
        spec = self.spec.with_feasibility(oracle="value", min_successes=5)
        state = ChainState.empty(spec)
        rng = np.random.default_rng(0)
        suite = suite_for(spec)
        state.policies = [
            ActorCritic.init(
                suite.obs_dim, suite.action_dim, stage.ppo, rng
            )
            for stage in spec.stages
        ]
        buffers = FeasibilityBuffers(1, window_length=10)
        for _ in range(8):
            buffers.add(rng.normal(size=(10, suite.obs_dim)), 1.0, False)
        with self.assertRaises(CalibrationError):
            fit_transition_model(state, 1, buffers, spec, rng)
        lenient = spec.with_feasibility(allow_uncalibrated=True)
        model = fit_transition_model(state, 1, buffers, lenient, rng)
        self.assertIsNone(model.threshold)

    def test_methods(self):
        """Tests method names and unknown baselines."""
        self.assertEqual(methods_available()[0], "ours")
        with self.assertRaises(ConfigError):
            run_baseline("random", self.spec)


@unittest.skipUnless(SLOW, "set SKILLCHAIN_SLOW_TESTS=1")
class TestPipeline(unittest.TestCase):
    """Test cases for whole training runs on a tiny chain."""

    def setUp(self):
        self.spec = smoke_config().chain

    def test_ours(self):
        """Tests that the full pipeline yields a fine-tuned chain."""
        snapshots = []
        state = run_method(
            "ours", self.spec, seed=0, checkpoint=snapshots.append
        )
        self.assertEqual(state.phase, PHASE_BACKWARD)
        self.assertEqual(len(state.policies), 2)
        self.assertIsNotNone(state.models[1])
        self.assertIsNotNone(state.feasibility_buffers[1])
        self.assertIn("finetune/0/0", state.history)
        self.assertEqual(len(snapshots), 3)

    def test_deterministic(self):
        """Tests that one seed reproduces the same policies."""
        a = run_method("policy_seq", self.spec, seed=1)
        b = run_method("policy_seq", self.spec, seed=1)
        for pa, pb in zip(a.policies, b.policies):
            for name, value in pa.params().items():
                np.testing.assert_array_equal(value, pb.params()[name])

    def test_monolithic_baselines(self):
        """Tests that monolithic methods store one policy."""
        for method in ("rl_scratch", "curriculum"):
            state = run_method(method, self.spec, seed=0)
            self.assertEqual(state.phase, PHASE_MONOLITHIC)
            self.assertEqual(len(state.policies), 1)


if __name__ == "__main__":
    unittest.main()
