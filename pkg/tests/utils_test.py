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


"""Test cases for the tools utilities and tool functions."""

import json
import unittest

import anyio
from mcp.server.fastmcp.exceptions import ToolError

from skillchain.errors import CheckpointError, ConfigError
from skillchain.executor.runner import EpisodeReport
from skillchain.tools import chains, experiments, utils


def _fail():
    raise ConfigError("bad value", details={"field": "seeds"})


class TestUtils(unittest.TestCase):
    """Test cases for the utils module."""

    def test_as_tool_error(self):
        """Tests that tool errors carry the JSON error payload."""
        error = utils.as_tool_error(CheckpointError("gone"))
        payload = json.loads(str(error))
        self.assertEqual(
            payload,
            {"details": None, "error": "CheckpointError", "message": "gone"},
            "Tool error should hold the serialized framework error",
        )

    def test_run_blocking(self):
        """Tests results and error translation off the event loop."""
        self.assertEqual(anyio.run(utils.run_blocking, sum, [1, 2, 3]), 6)
        with self.assertRaises(ToolError, msg="Errors become tool errors"):
            anyio.run(utils.run_blocking, _fail)

    def test_summarize_reports(self):
        """Tests the evaluation summary fields."""
        reports = [
            EpisodeReport(0, 0, success=True, switches=2, restarts=1),
            EpisodeReport(1, 0, success=False, switches=0, perturbed=True),
        ]
        for r in reports:
            r.stage_success = [True, r.success]
        summary = utils.summarize_reports(reports)
        self.assertEqual(summary["episodes"], 2)
        self.assertEqual(summary["success_rate"], 0.5)
        self.assertEqual(summary["stage_success_rates"], [1.0, 0.5])
        self.assertEqual(summary["mean_switches"], 1.0)
        self.assertEqual(summary["max_switches"], 2)
        self.assertEqual((summary["restarts"], summary["perturbed"]), (1, 1))
        self.assertEqual(utils.summarize_reports([])["success_rate"], 0.0)

    def test_package_version(self):
        """Tests that a version string is always returned."""
        self.assertIsInstance(utils.package_version(), str)


class TestTools(unittest.TestCase):
    """Test cases for the tool functions."""

    def test_config_schema(self):
        """Tests the schema tool."""
        result = anyio.run(experiments.get_config_schema)
        self.assertIn("seeds", result["schema"]["properties"])

    def test_invalid_config(self):
        """Tests that an invalid run config is reported as a tool error."""
        with self.assertRaises(ToolError) as ctx:
            anyio.run(experiments.run_experiment, {"eval_episodes": 0})
        self.assertEqual(json.loads(str(ctx.exception))["error"], "ConfigError")

    def test_missing_checkpoint(self):
        """Tests that tools report missing checkpoints."""
        with self.assertRaises(ToolError):
            anyio.run(chains.evaluate_chain, "/nonexistent/chain.ckpt", 1)
        with self.assertRaises(ToolError):
            anyio.run(
                chains.export_feasibility_landscape,
                "/nonexistent/chain.ckpt",
                "/nonexistent/out.csv",
            )


if __name__ == "__main__":
    unittest.main()
