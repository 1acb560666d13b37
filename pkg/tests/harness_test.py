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


"""Test cases for the harness, config and CSV layers."""

import math
import os
import tempfile
import threading
import unittest
from pathlib import Path
from unittest import mock

import numpy as np
from pyfakefs import fake_filesystem_unittest

from skillchain import csvio
from skillchain.chaining.state import ChainState
from skillchain.config import (
    FeasibilityConfig,
    PpoHyper,
    RunConfig,
    config_hash,
    default_chain_spec,
    load_run_config,
    parse_run_config,
    smoke_config,
)
from skillchain.envs.suites import make_suite
from skillchain.errors import (
    CalibrationError,
    CheckpointError,
    CheckpointVersionError,
    ConfigError,
    InputError,
    UsageError,
)
from skillchain.feasibility.buffers import FeasibilityBuffers
from skillchain.feasibility.model import FeasibilityModel, ValueFeasibility
from skillchain.harness import checkpoint
from skillchain.harness.experiment import (
    RESUME_MARKER,
    experiment_dir,
    export_feasibility_landscape,
    landscape_rows,
    run_dir,
    run_experiment,
)
from skillchain.harness.results import ResultTable, compare
from skillchain.harness.stats import auroc, ks_test, mean_std, sign_test
from skillchain.ppo.agent import ActorCritic

SLOW = os.getenv("SKILLCHAIN_SLOW_TESTS") == "1"


class ThresholdModel:
    """Feasibility double whose F always equals its threshold."""

    def __init__(self, stage, threshold=2.0):
        self.stage = stage
        self.threshold = threshold
        self.window_length = 3
        self.target_mean = 0.0
        self.target_std = 1.0

    def predict(self, window):
        return self.threshold


def small_chain() -> ChainState:
    spec = default_chain_spec("toolflip")
    suite = make_suite("toolflip", spec.stages)
    rng = np.random.default_rng(0)
    hyper = PpoHyper(hidden=(4,))
    state = ChainState.empty(spec)
    state.policies = [
        ActorCritic.init(suite.obs_dim, suite.action_dim, hyper, rng)
        for _ in spec.stages
    ]
    config = FeasibilityConfig(window_length=3, width=4, heads=2, hidden=(4,))
    model = FeasibilityModel.init(suite.obs_dim, config, rng, stage=1)
    model.threshold = 0.75
    model.losses = [1.0, 0.5]
    state.models[1] = model
    buffers = FeasibilityBuffers(1, capacity=8, window_length=3)
    for i in range(3):
        buffers.add(rng.normal(size=(3, suite.obs_dim)), float(i), i > 0, i)
    state.feasibility_buffers[1] = buffers
    start, _ = suite.reset(0, None, rng)
    state.init_buffers[1].add(start)
    state.history["forward/0/0"] = [{"update": 0, "success_rate": 0.25}]
    state.phase = "backward"
    state.iteration = 1
    return state


class TestStats(unittest.TestCase):
    """Test cases for the seed statistics."""

    def test_mean_std(self):
        """Tests the sample std and the single-seed case."""
        mean, std = mean_std([1.0, 3.0])
        self.assertEqual(mean, 2.0)
        self.assertAlmostEqual(std, math.sqrt(2.0))
        self.assertEqual(mean_std([0.4]), (0.4, None))
        with self.assertRaises(InputError):
            mean_std([])

    def test_sign_test(self):
        """Tests wins, ties and the one-sided p-value."""
        result = sign_test([1, 1, 1, 1, 0.5], [0, 0, 0, 0, 0.5])
        self.assertEqual((result.wins, result.losses, result.ties), (4, 0, 1))
        self.assertAlmostEqual(result.p_value, 1 / 16)
        self.assertEqual(sign_test([1, 2], [1, 2]).p_value, 1.0)
        with self.assertRaises(InputError):
            sign_test([1], [1, 2])

    def test_auroc(self):
        """Tests perfect, inverted and tied separation."""
        labels = [True, True, False, False]
        self.assertEqual(auroc([3, 4, 1, 2], labels), 1.0)
        self.assertEqual(auroc([1, 2, 3, 4], labels), 0.0)
        self.assertEqual(auroc([1, 1, 1, 1], labels), 0.5)
        with self.assertRaises(InputError):
            auroc([1, 2], [True, True])

    def test_ks_test(self):
        """Tests that identical samples do not differ."""
        stat, p = ks_test([0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
        self.assertEqual(stat, 0.0)
        self.assertEqual(p, 1.0)


class TestConfig(fake_filesystem_unittest.TestCase):
    """Test cases for run configuration."""

    def setUp(self):
        self.setUpPyfakefs()

    def test_hash_tracks_every_field(self):
        """Tests that changing any field changes the hash."""
        base = RunConfig()
        self.assertEqual(config_hash(base), config_hash(RunConfig()))
        self.assertNotEqual(
            config_hash(base), config_hash(base.with_changes(eval_episodes=7))
        )
        deep = base.with_changes(chain=base.chain.with_changes(lam2=0.25))
        self.assertNotEqual(config_hash(base), config_hash(deep))

    def test_default_chain_follows_suite(self):
        """Tests the preset chain and the suite consistency check."""
        config = parse_run_config({"suite": "toolflip"})
        self.assertEqual(config.chain.stage_names(), ["grasp", "reorient"])
        with self.assertRaises(ConfigError):
            parse_run_config(
                {
                    "suite": "toolflip",
                    "chain": default_chain_spec("blockchain").model_dump(),
                }
            )

    def test_invalid_values(self):
        """Tests that validation errors carry details."""
        with self.assertRaises(ConfigError) as ctx:
            parse_run_config({"eval_episodes": 0})
        self.assertTrue(ctx.exception.details)
        with self.assertRaises(ConfigError):
            parse_run_config({"methods": ["nope"]})

    def test_randomized_noise_preset(self):
        """Tests the named noise preset and the quiet default."""
        self.assertFalse(RunConfig().noise.enabled)
        config = parse_run_config({"noise": "randomized"})
        self.assertTrue(config.noise.enabled)
        self.assertEqual(config.noise.action_uncorrelated, 0.05)
        self.assertEqual(config.noise.obs_correlated, 0.001)

    def test_window_zero_is_one_step(self):
        """Tests the run-level window override."""
        config = RunConfig(window_length=0)
        self.assertEqual(config.effective_chain().feasibility.window_length, 1)
        plain = RunConfig()
        self.assertIs(plain.effective_chain(), plain.chain)

    def test_load_file(self):
        """Tests reading configs from disk."""
        self.fs.create_file("/cfg/run.json", contents='{"seeds": [1, 2]}')
        self.assertEqual(load_run_config("/cfg/run.json").seeds, [1, 2])
        self.fs.create_file("/cfg/bad.json", contents="{")
        with self.assertRaises(ConfigError):
            load_run_config("/cfg/bad.json")
        with self.assertRaises(ConfigError):
            load_run_config("/cfg/missing.json")

    def test_smoke_config_is_valid(self):
        """Tests that the smoke preset passes validation."""
        config = smoke_config()
        self.assertEqual(config.suite, "toolflip")
        self.assertLessEqual(
            config.chain.feasibility.minibatch_size,
            config.chain.feasibility.rollout_episodes,
        )


class TestResults(fake_filesystem_unittest.TestCase):
    """Test cases for result tables."""

    def setUp(self):
        self.setUpPyfakefs()

    def table(self) -> ResultTable:
        table = ResultTable()
        for seed, (a, b) in enumerate([(0.9, 0.5), (0.8, 0.6), (0.7, 0.7)]):
            table.add("ours", "", seed, a, [1.0, a])
            table.add("policy_seq", "", seed, b, [1.0, b])
        table.add("solo", "", 0, 0.3)
        return table

    def test_summary(self):
        """Tests means, stds and per-stage means."""
        summary = {s.method: s for s in self.table().summary()}
        self.assertAlmostEqual(summary["ours"].mean, 0.8)
        self.assertAlmostEqual(summary["ours"].std, 0.1)
        self.assertAlmostEqual(summary["ours"].stage_mean[1], 0.8)
        self.assertIsNone(summary["solo"].std)

    def test_write_and_read(self):
        """Tests that raw rows survive a CSV round trip."""
        table = self.table()
        table.write("/out/results.csv")
        loaded = ResultTable.read("/out/results.csv")
        self.assertEqual(loaded.rows, table.rows)
        summary = csvio.read_csv("/out/results_summary.csv")
        solo = [r for r in summary if r["method"] == "solo"][0]
        self.assertEqual(solo["std"], "")

    def test_bad_row(self):
        """Tests that malformed rows are reported."""
        self.fs.create_file(
            "/out/bad.csv",
            contents="method,condition,seed,success,stage_success\n"
            "ours,,x,0.5,\n",
        )
        with self.assertRaises(InputError):
            ResultTable.read("/out/bad.csv")

    def test_compare(self):
        """Tests the paired gap and sign test over shared seeds."""
        table = self.table()
        result = compare(table, "ours", table, "policy_seq")
        self.assertEqual(result["seeds"], [0, 1, 2])
        self.assertAlmostEqual(result["gap"], 0.2)
        self.assertEqual((result["wins"], result["ties"]), (2, 1))
        self.assertAlmostEqual(result["p_value"], 0.25)
        with self.assertRaises(InputError):
            compare(table, "ours", ResultTable(), "ours")

    def test_csv_cells(self):
        """Tests exact floats, booleans and empty cells."""
        csvio.write_csv(
            "/out/cells.csv",
            ["a", "b", "c"],
            [{"a": 0.1 + 0.2, "b": True, "c": None}],
        )
        (row,) = csvio.read_csv("/out/cells.csv")
        self.assertEqual(float(row["a"]), 0.1 + 0.2)
        self.assertEqual((row["b"], row["c"]), ("1", ""))


class TestCheckpoint(fake_filesystem_unittest.TestCase):
    """Test cases for chain checkpoints."""

    def setUp(self):
        self.setUpPyfakefs()

    def test_byte_identical_round_trip(self):
        """Tests that re-saving a loaded chain gives the same bytes."""
        blob = checkpoint.dumps_chain(small_chain())
        loaded = checkpoint.loads_chain(blob)
        self.assertEqual(checkpoint.dumps_chain(loaded), blob)
        self.assertEqual(loaded.models[1].threshold, 0.75)
        self.assertEqual(loaded.models[1].losses, [1.0, 0.5])
        self.assertEqual(len(loaded.init_buffers[1]), 1)
        self.assertEqual(loaded.iteration, 1)

    def test_predictions_survive(self):
        """Tests that loaded policies and models act identically."""
        chain = small_chain()
        checkpoint.save_chain(chain, "/ckpt/chain.ckpt")
        loaded = checkpoint.load_chain("/ckpt/chain.ckpt")
        rng = np.random.default_rng(1)
        obs = rng.normal(size=(3, chain.policies[0].obs_dim))
        np.testing.assert_array_equal(
            loaded.policies[0].act(obs), chain.policies[0].act(obs)
        )
        self.assertEqual(
            loaded.models[1].predict(obs), chain.models[1].predict(obs)
        )
        self.assertFalse(os.path.exists("/ckpt/chain.ckpt.tmp"))

    def test_value_oracle(self):
        """Tests that the value oracle is rebuilt on its policy."""
        chain = small_chain()
        chain.models[1] = ValueFeasibility(
            agent=chain.policies[1], threshold=0.5
        )
        loaded = checkpoint.loads_chain(checkpoint.dumps_chain(chain))
        self.assertIsInstance(loaded.models[1], ValueFeasibility)
        self.assertIs(loaded.models[1].agent, loaded.policies[1])

    def test_truncated(self):
        """Tests that a cut-off checkpoint is rejected."""
        blob = checkpoint.dumps_chain(small_chain())
        with self.assertRaises(CheckpointError):
            checkpoint.loads_chain(blob[: len(blob) // 2])
        with self.assertRaises(CheckpointError):
            checkpoint.load_chain("/ckpt/none.ckpt")

    def test_layout_mismatch(self):
        """Tests that other layouts ask for migration."""
        arrays, metadata = checkpoint.chain_to_arrays(small_chain())
        metadata["layout"] = checkpoint.CHAIN_LAYOUT + 1
        with self.assertRaises(CheckpointVersionError):
            checkpoint.chain_from_arrays(arrays, metadata)
        metadata["kind"] = "something_else"
        with self.assertRaises(CheckpointError):
            checkpoint.chain_from_arrays(arrays, metadata)


class TestLandscape(fake_filesystem_unittest.TestCase):
    """Test cases for the feasibility landscape export."""

    def setUp(self):
        self.setUpPyfakefs()
        self.spec = default_chain_spec("blockchain")

    def test_threshold_model(self):
        """Tests a model whose F equals h everywhere."""
        rows = landscape_rows(
            ThresholdModel(3), "blockchain", self.spec, 5, 4, 0.1
        )
        self.assertEqual(len(rows), 4 * 5 * 5)
        self.assertTrue(all(r["c"] == 1.0 for r in rows))
        self.assertFalse(any(r["feasible"] for r in rows))
        self.assertEqual(sorted({r["x"] for r in rows})[0], -0.1)
        self.assertEqual(len({r["theta"] for r in rows}), 4)

    def test_needs_calibration(self):
        """Tests the guards on the model and the grid."""
        with self.assertRaises(CalibrationError):
            landscape_rows(ThresholdModel(1, None), "blockchain", self.spec)
        with self.assertRaises(UsageError):
            landscape_rows(ThresholdModel(1), "blockchain", self.spec, 0)

    def test_export(self):
        """Tests the CSV export for the last stage's model."""
        chain = ChainState.empty(self.spec)
        with self.assertRaises(UsageError):
            export_feasibility_landscape(chain, Path("/out/land.csv"))
        chain.models[3] = ThresholdModel(3)
        count = export_feasibility_landscape(
            chain, Path("/out/land.csv"), resolution=3, angles=2
        )
        self.assertEqual(count, 18)
        rows = csvio.read_csv("/out/land.csv")
        self.assertEqual(
            list(rows[0]), ["theta", "x", "y", "F", "c", "feasible"]
        )


class TestExperimentRecovery(unittest.TestCase):
    """Test cases for experiment bookkeeping with stubbed runs."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.calls = []
        self.calls_lock = threading.Lock()

    def tearDown(self):
        self.tmp.cleanup()

    def fake_run(self, fail_seed=None):
        def run(config, directory, method, seed, workers):
            with self.calls_lock:
                self.calls.append((method, seed))
            if seed == fail_seed:
                raise RuntimeError(f"seed {seed} crashed")
            result = {
                "method": method,
                "seed": seed,
                "success": seed / 10.0,
                "stage_success": [1.0, seed / 10.0],
                "episodes": 4,
                "train_seconds": 0.0,
                "eval_seconds": 0.0,
            }
            out = run_dir(directory, method, seed)
            csvio.write_json(out / "result.json", result)
            return result

        return mock.patch(
            "skillchain.harness.experiment._train_and_evaluate",
            side_effect=run,
        )

    def test_concurrent_json_writes(self):
        """Tests many threads rewriting one JSON file."""
        path = self.root / "marker.json"
        errors = []

        def write(worker):
            for i in range(50):
                try:
                    csvio.write_json(path, {"worker": worker, "i": i})
                except OSError as e:
                    errors.append(e)

        threads = [
            threading.Thread(target=write, args=(w,)) for w in range(4)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        self.assertEqual(errors, [])
        self.assertEqual(csvio.read_json(path)["i"], 49)
        self.assertEqual(list(self.root.glob("*.tmp")), [])

    def test_parallel_runs(self):
        """Tests concurrent runs updating one RESUME marker."""
        config = smoke_config().with_changes(
            methods=["ours", "policy_seq"],
            seeds=list(range(8)),
            deterministic=False,
            workers=4,
        )
        with self.fake_run():
            result = run_experiment(config, self.root)
        directory = result.directory
        self.assertEqual(len(self.calls), 16)
        self.assertEqual(len(result.table.rows), 16)
        self.assertFalse((directory / RESUME_MARKER).exists())
        self.assertEqual(list(directory.glob("*.tmp")), [])
        manifest = csvio.read_json(directory / "manifest.json")
        self.assertTrue(manifest["complete"])
        self.assertEqual(len(manifest["runs"]), 16)
        table = ResultTable.read(directory / "results.csv")
        self.assertEqual(len(table.rows), 16)

    def test_crash_keeps_outputs_and_resumes(self):
        """Tests that an unexpected error still writes the manifest."""
        config = smoke_config().with_changes(seeds=[0, 1, 2, 3])
        with self.fake_run(fail_seed=2):
            with self.assertRaises(RuntimeError):
                run_experiment(config, self.root)
        directory = experiment_dir(config, self.root)
        manifest = csvio.read_json(directory / "manifest.json")
        self.assertFalse(manifest["complete"])
        self.assertEqual(manifest["error"]["error"], "RuntimeError")
        table = ResultTable.read(directory / "results.csv")
        self.assertEqual([r.seed for r in table.rows], [0, 1])
        marker = csvio.read_json(directory / RESUME_MARKER)
        self.assertEqual(marker["remaining"], [["ours", 2], ["ours", 3]])

        self.calls.clear()
        with self.fake_run():
            result = run_experiment(config, self.root)
        self.assertEqual(self.calls, [("ours", 2), ("ours", 3)])
        self.assertEqual([r.seed for r in result.table.rows], [0, 1, 2, 3])
        self.assertTrue(result.manifest["complete"])
        self.assertFalse((directory / RESUME_MARKER).exists())


@unittest.skipUnless(SLOW, "set SKILLCHAIN_SLOW_TESTS=1")
class TestExperiment(unittest.TestCase):
    """Test cases for a whole smoke experiment."""

    def test_run_and_resume(self):
        """Tests outputs, the RESUME marker and skipping finished runs."""
        with tempfile.TemporaryDirectory() as root:
            config = smoke_config().with_changes(eval_episodes=4)
            result = run_experiment(config, Path(root))
            directory = result.directory
            self.assertTrue((directory / "results.csv").exists())
            self.assertTrue((directory / "manifest.json").exists())
            self.assertFalse((directory / RESUME_MARKER).exists())
            run = directory / "ours" / "seed_0"
            self.assertTrue((run / "chain.ckpt").exists())
            self.assertTrue((run / "episodes.csv").exists())
            manifest = csvio.read_json(directory / "manifest.json")
            self.assertTrue(manifest["complete"])
            again = run_experiment(config, Path(root))
            self.assertEqual(again.table.rows, result.table.rows)


if __name__ == "__main__":
    unittest.main()
