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


"""Tools for running experiments and reading the config schema."""

from typing import Any, Dict, Optional

from skillchain.config import config_schema, parse_run_config
from skillchain.coordinator import mcp
from skillchain.errors import SkillchainError
from skillchain.harness.experiment import run_experiment as _run_experiment
from skillchain.tools.utils import as_tool_error, package_version, run_blocking


@mcp.tool()
async def run_experiment(
    config: Dict[str, Any], output_root: Optional[str] = None
) -> Dict[str, Any]:
    """Trains and evaluates every method and seed of a run config.

    Completed (method, seed) runs in the same experiment directory are
    reused, so a failed experiment can be resumed by calling again.

    Args:
        config: A run config as JSON; see `get_config_schema`.
        output_root: Directory the experiment folder is created under.
          Defaults to the config's `output_dir`.
    """
    try:
        run_config = parse_run_config(config)
    except SkillchainError as e:
        raise as_tool_error(e) from e
    result = await run_blocking(_run_experiment, run_config, output_root)
    return {
        "directory": str(result.directory),
        "config_hash": result.manifest["config_hash"],
        "results": [s.row() for s in result.table.summary()],
    }


@mcp.tool()
async def get_config_schema() -> Dict[str, Any]:
    """Returns the JSON schema that run configs are validated against."""
    return {"version": package_version(), "schema": config_schema()}
