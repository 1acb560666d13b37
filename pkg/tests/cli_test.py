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


"""Test cases for the command-line interface."""

import json
import unittest

from pyfakefs import fake_filesystem_unittest
from typer.testing import CliRunner

from skillchain.cli import app
from skillchain.harness.results import ResultTable


class TestCli(fake_filesystem_unittest.TestCase):
    """Test cases for the skillchain command."""

    def setUp(self):
        self.setUpPyfakefs()
        self.runner = CliRunner()

    def test_schema(self):
        """Tests that the schema verb prints the config schema."""
        result = self.runner.invoke(app, ["schema"])
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("properties", json.loads(result.stdout))

    def test_schema_to_file(self):
        """Tests writing the schema to a file."""
        result = self.runner.invoke(app, ["schema", "--out", "/out/s.json"])
        self.assertEqual(result.exit_code, 0, result.output)
        with open("/out/s.json") as f:
            self.assertIn("properties", json.load(f))

    def test_bad_config_exits_with_two(self):
        """Tests the exit code of configuration errors."""
        self.fs.create_file("/cfg/run.json", contents='{"seeds": []}')
        result = self.runner.invoke(app, ["train", "--config", "/cfg/run.json"])
        self.assertEqual(result.exit_code, 2)

    def test_missing_checkpoint_exits_with_one(self):
        """Tests the exit code of runtime errors."""
        result = self.runner.invoke(
            app, ["eval", "--checkpoint", "/none/chain.ckpt", "--episodes", "1"]
        )
        self.assertEqual(result.exit_code, 1)

    def test_bad_integer_list(self):
        """Tests that malformed budget lists are configuration errors."""
        result = self.runner.invoke(app, ["sweep-budget", "--budgets", "1,x"])
        self.assertEqual(result.exit_code, 2)

    def test_compare(self):
        """Tests the paired comparison verb."""
        table = ResultTable()
        for seed, (a, b) in enumerate([(0.9, 0.5), (0.8, 0.6)]):
            table.add("ours", "", seed, a)
            table.add("v_chain", "", seed, b)
        table.write("/out/results.csv")
        result = self.runner.invoke(
            app,
            [
                "compare",
                "--a",
                "/out/results.csv",
                "--b",
                "/out/results.csv",
                "--method-b",
                "v_chain",
            ],
        )
        self.assertEqual(result.exit_code, 0, result.output)
        payload = json.loads(result.stdout)
        self.assertEqual(payload["wins"], 2)
        self.assertAlmostEqual(payload["gap"], 0.3)


if __name__ == "__main__":
    unittest.main()
