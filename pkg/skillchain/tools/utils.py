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


"""Common utilities used by the MCP tools."""

import json
from importlib import metadata
from pathlib import Path
from typing import Any, Callable, Dict, Sequence, TypeVar

import anyio
from mcp.server.fastmcp.exceptions import ToolError

from skillchain.chaining.state import ChainState
from skillchain.errors import SkillchainError
from skillchain.executor.runner import EpisodeReport, stage_success_rates
from skillchain.harness.checkpoint import load_chain

T = TypeVar("T")


def package_version() -> str:
    """Returns the version of the package.

    Falls back to 'unknown' if the version can't be resolved.
    """
    try:
        return metadata.version("skillchain")
    except metadata.PackageNotFoundError:
        return "unknown"


def as_tool_error(e: SkillchainError) -> ToolError:
    """Wraps a framework error so the client receives its JSON payload."""
    return ToolError(json.dumps(e.to_dict(), sort_keys=True, default=str))


async def run_blocking(fn: Callable[..., T], *args: Any) -> T:
    """Runs CPU-bound work off the event loop.

    Framework errors are re-raised as tool errors.
    """
    try:
        return await anyio.to_thread.run_sync(fn, *args)
    except SkillchainError as e:
        raise as_tool_error(e) from e


def open_chain(checkpoint: str) -> ChainState:
    return load_chain(Path(checkpoint).expanduser())


def summarize_reports(reports: Sequence[EpisodeReport]) -> Dict[str, Any]:
    """Success rate, per-stage rates and switch counts of an evaluation."""
    n = len(reports)
    switches = [r.switches for r in reports]
    return {
        "episodes": n,
        "success_rate": sum(r.success for r in reports) / n if n else 0.0,
        "stage_success_rates": stage_success_rates(reports),
        "mean_switches": sum(switches) / n if n else 0.0,
        "max_switches": max(switches, default=0),
        "restarts": sum(r.restarts for r in reports),
        "perturbed": sum(r.perturbed for r in reports),
    }
