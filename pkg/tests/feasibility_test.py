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


"""Test cases for the feasibility package."""

import dataclasses
import unittest
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pyfakefs import fake_filesystem_unittest

from skillchain.config import FeasibilityConfig, PpoHyper
from skillchain.envs.trajectory import Trajectory
from skillchain.errors import (
    CalibrationError,
    CheckpointError,
    InputError,
    NotEnoughSamplesError,
)
from skillchain.feasibility.buffers import (
    FeasibilityBuffers,
    load_buffers,
    record_transition,
    save_buffers,
)
from skillchain.feasibility.model import (
    FeasibilityModel,
    ValueFeasibility,
    calibrate,
    calibrate_threshold,
    feasibility_bonus,
    feasibility_score,
    fit_value_feasibility,
    model_from_arrays,
    model_to_arrays,
    train_feasibility,
)
from skillchain.ppo.agent import ActorCritic

SMALL = FeasibilityConfig(
    window_length=3, width=8, heads=2, hidden=(8,), minibatch_size=16
)


@dataclass
class LastObsModel:
    """Predicts the first feature of the last observation in the window."""

    stage: int = 1
    threshold: Optional[float] = None
    target_mean: float = 0.0
    target_std: float = 1.0
    window_length: int = 1

    def predict(self, window):
        window = np.asarray(window, dtype=np.float64)
        out = window[..., -1, 0]
        return float(out) if out.ndim == 0 else out


def scalar_buffers(values, successes=None) -> FeasibilityBuffers:
    buffers = FeasibilityBuffers(stage=1, capacity=1000, window_length=1)
    successes = [True] * len(values) if successes is None else successes
    for v, ok in zip(values, successes):
        buffers.add([[float(v)]], float(v), ok)
    return buffers


class TestBuffers(unittest.TestCase):
    """Test cases for FeasibilityBuffers."""

    def test_ring_drops_oldest(self):
        """Tests that a full buffer overwrites its oldest entries."""
        buffers = FeasibilityBuffers(stage=1, capacity=3, window_length=1)
        for i in range(5):
            buffers.add([[float(i)]], float(i), i % 2 == 0)
        _, returns, successes = buffers.arrays()
        self.assertEqual(len(buffers), 3)
        np.testing.assert_array_equal(returns, [2.0, 3.0, 4.0])
        np.testing.assert_array_equal(successes, [True, False, True])
        self.assertEqual(buffers.num_successes, 2)

    def test_short_window_is_padded(self):
        """Tests that windows are fitted to the buffer length."""
        buffers = FeasibilityBuffers(stage=1, window_length=4)
        entry = buffers.add([[1.0], [2.0]], 0.5, True)
        np.testing.assert_array_equal(entry.window[:, 0], [1, 1, 1, 2])

    def test_rejects_non_finite(self):
        """Tests that NaN returns are refused."""
        buffers = FeasibilityBuffers(stage=1, window_length=1)
        with self.assertRaises(InputError):
            buffers.add([[1.0]], float("nan"), True)
        with self.assertRaises(InputError):
            FeasibilityBuffers(stage=1, capacity=0)

    def test_record_transition(self):
        """Tests that the predecessor's last observations are stored."""
        traj = Trajectory(
            stage=0,
            observations=[np.array([float(i), 0.0]) for i in range(12)],
            episode=7,
        )
        buffers = FeasibilityBuffers(stage=1, window_length=10)
        record_transition(buffers, traj, 2.5, False)
        entry = buffers.snapshot()[0]
        np.testing.assert_array_equal(entry.window[:, 0], np.arange(2, 12))
        self.assertEqual(
            (entry.ret, entry.success, entry.episode), (2.5, False, 7)
        )


class TestBufferFiles(fake_filesystem_unittest.TestCase):
    """Test cases for buffer persistence."""

    def setUp(self):
        self.setUpPyfakefs()

    def test_save_and_load(self):
        """Tests that a saved buffer loads back with equal contents."""
        buffers = scalar_buffers([1.0, 2.0, 3.0], [True, False, True])
        save_buffers("/ckpt/buffers.bin", buffers)
        loaded = load_buffers("/ckpt/buffers.bin")
        for a, b in zip(buffers.arrays(), loaded.arrays()):
            np.testing.assert_array_equal(a, b)
        self.assertEqual(loaded.metadata(), buffers.metadata())

    def test_missing_file(self):
        """Tests that a missing file is a CheckpointError."""
        with self.assertRaises(CheckpointError):
            load_buffers("/ckpt/none.bin")


class TestCalibration(unittest.TestCase):
    """Test cases for threshold calibration and scores."""

    def test_percentile_threshold(self):
        """Tests interpolated percentiles over successful windows."""
        buffers = scalar_buffers(range(1, 101))
        model = LastObsModel()
        self.assertAlmostEqual(
            calibrate_threshold(model, buffers, 25.0, 20), 25.75
        )
        self.assertEqual(calibrate_threshold(model, buffers, 0.0, 20), 1.0)

    def test_constant_predictions(self):
        """Tests that identical predictions calibrate to that value."""
        h = calibrate_threshold(LastObsModel(), scalar_buffers([10] * 30))
        self.assertEqual(h, 10.0)

    def test_failures_are_ignored(self):
        """Tests that only successful successor episodes set h."""
        values = list(range(1, 41))
        successes = [v > 20 for v in values]
        buffers = scalar_buffers(values, successes)
        h = calibrate_threshold(LastObsModel(), buffers, 0.0, 20)
        self.assertEqual(h, 21.0)

    def test_too_few_successes(self):
        """Tests that calibration needs enough successes."""
        with self.assertRaises(CalibrationError) as ctx:
            calibrate_threshold(LastObsModel(), scalar_buffers([5] * 19))
        self.assertEqual(ctx.exception.details["successes"], 19)

    def test_non_positive_threshold(self):
        """Tests that h <= 0 is refused."""
        with self.assertRaises(CalibrationError):
            calibrate_threshold(LastObsModel(), scalar_buffers([-1.0] * 25))

    def test_scores(self):
        """Tests c = F / h and the bonus in target std units."""
        model = calibrate(
            LastObsModel(target_std=2.0), scalar_buffers([4] * 20)
        )
        self.assertEqual(model.threshold, 4.0)
        self.assertEqual(feasibility_score(model, [[4.0]]), 1.0)
        self.assertEqual(feasibility_score(model, [[8.0]]), 2.0)
        self.assertEqual(feasibility_bonus(model, [[4.0]]), 0.0)
        self.assertEqual(feasibility_bonus(model, [[8.0]]), 2.0)
        self.assertLess(feasibility_bonus(model, [[3.0]]), 0.0)

    def test_uncalibrated(self):
        """Tests that scores need a threshold and bonuses fall back."""
        model = LastObsModel(target_mean=1.0)
        with self.assertRaises(CalibrationError):
            feasibility_score(model, [[1.0]])
        self.assertEqual(feasibility_bonus(model, [[3.0]]), 2.0)


class TestFeasibilityModel(unittest.TestCase):
    """Test cases for the attention regressor."""

    def setUp(self):
        self.rng = np.random.default_rng(0)
        self.model = FeasibilityModel.init(2, SMALL, self.rng)

    def constant_buffers(self, value, count=32):
        buffers = FeasibilityBuffers(stage=1, window_length=3)
        for _ in range(count):
            buffers.add(self.rng.normal(size=(3, 2)), value, True)
        return buffers

    def test_learns_constant_target(self):
        """Tests regression onto a constant return."""
        trained = train_feasibility(
            self.model,
            self.constant_buffers(3.0),
            epochs=30,
            lr=1e-2,
            minibatch_size=16,
            rng=self.rng,
        )
        self.assertEqual(len(trained.losses), 30)
        self.assertLessEqual(trained.losses[-1], trained.losses[0])
        self.assertIsNone(trained.threshold)
        preds = trained.predict(self.rng.normal(size=(5, 3, 2)))
        np.testing.assert_allclose(preds, 3.0, atol=0.25)

    def test_not_enough_samples(self):
        """Tests that training needs one full minibatch."""
        with self.assertRaises(NotEnoughSamplesError):
            train_feasibility(
                self.model, self.constant_buffers(1.0, 8), minibatch_size=16
            )

    def test_batch_matches_single(self):
        """Tests that stacked windows predict like single windows."""
        windows = self.rng.normal(size=(4, 3, 2))
        batch = self.model.predict(windows)
        for i in range(4):
            self.assertAlmostEqual(
                batch[i], self.model.predict(windows[i]), places=10
            )

    def test_arrays_round_trip(self):
        """Tests that stored models predict identically."""
        model = dataclasses.replace(
            self.model, target_mean=2.0, target_std=0.5, threshold=1.5
        )
        arrays, meta = model_to_arrays(model, "m/")
        loaded = model_from_arrays(arrays, meta, "m/")
        window = self.rng.normal(size=(3, 2))
        self.assertEqual(loaded.predict(window), model.predict(window))
        self.assertEqual(loaded.threshold, 1.5)


class TestValueFeasibility(unittest.TestCase):
    """Test cases for the value-function oracle."""

    def setUp(self):
        hyper = PpoHyper(hidden=(4,))
        self.agent = ActorCritic.init(2, 4, hyper, np.random.default_rng(1))

    def test_reads_last_observation(self):
        """Tests that only the boundary observation matters."""
        model = ValueFeasibility(agent=self.agent, window_length=3)
        window = np.array([[9.0, 9.0], [5.0, 5.0], [0.1, 0.2]])
        expected = float(self.agent.value_of(np.array([0.1, 0.2])))
        self.assertEqual(model.predict(window), expected)

    def test_scaled_over_buffer(self):
        """Tests that the target scale comes from buffered windows."""
        buffers = FeasibilityBuffers(stage=1, window_length=2)
        rng = np.random.default_rng(2)
        for _ in range(10):
            buffers.add(rng.normal(size=(2, 2)), 0.0, True)
        model = fit_value_feasibility(self.agent, buffers, stage=1)
        values = model.predict(buffers.arrays()[0])
        self.assertAlmostEqual(model.target_mean, float(np.mean(values)))

    def test_checkpoint_needs_policy(self):
        """Tests that the value oracle is rebuilt around a policy."""
        model = ValueFeasibility(agent=self.agent, threshold=0.3)
        arrays, meta = model_to_arrays(model)
        self.assertEqual(arrays, {})
        with self.assertRaises(CheckpointError):
            model_from_arrays(arrays, meta)
        loaded = model_from_arrays(arrays, meta, agent=self.agent)
        self.assertEqual(loaded.threshold, 0.3)


if __name__ == "__main__":
    unittest.main()
