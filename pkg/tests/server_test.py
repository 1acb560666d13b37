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


"""Test cases for the server module."""

import unittest

import anyio

EXPECTED_TOOLS = {
    "run_experiment",
    "get_config_schema",
    "evaluate_chain",
    "export_feasibility_landscape",
}


class TestServer(unittest.TestCase):
    """Test cases for the server module."""

    def test_server_initialization(self):
        """Tests that the MCP server instance is initialized.

        Importing the server also registers every tool module, so this
        catches missing imports.
        """
        from skillchain import server

        self.assertIsNotNone(server.mcp, "MCP server instance not initialized")

    def test_tools_registered(self):
        """Tests that every tool is exposed by the server."""
        from skillchain import server

        tools = anyio.run(server.mcp.list_tools)
        self.assertEqual(
            {t.name for t in tools},
            EXPECTED_TOOLS,
            "Server should expose exactly the skill chain tools",
        )


if __name__ == "__main__":
    unittest.main()
