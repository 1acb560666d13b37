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

"""Entry point for the skill chaining MCP server (stdio transport)."""

import os

from mcp.server.fastmcp.utilities.logging import configure_logging

from skillchain.config import LOG_LEVEL_ENV
from skillchain.coordinator import mcp

# Imported for their side effect of registering tools on `mcp`.
from skillchain.tools import chains  # noqa: F401
from skillchain.tools import experiments  # noqa: F401


def run_server() -> None:
    """Runs the server.

    Serves as the entrypoint for the 'skillchain-mcp' command.
    """
    configure_logging(os.getenv(LOG_LEVEL_ENV, "INFO").upper())
    mcp.run()


if __name__ == "__main__":
    run_server()
