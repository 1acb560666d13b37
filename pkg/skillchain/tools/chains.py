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


"""Tools that operate on a trained chain checkpoint."""

from typing import Any, Dict, Optional

from skillchain.config import ExecConfig, NoiseConfig, PerturbationConfig
from skillchain.coordinator import mcp
from skillchain.executor.runner import evaluate_chain as _evaluate_chain
from skillchain.harness.experiment import (
    export_feasibility_landscape as _export_landscape,
)
from skillchain.tools.utils import open_chain, run_blocking, summarize_reports


@mcp.tool()
async def evaluate_chain(
    checkpoint: str,
    episodes: int = 200,
    switch_budget: int = 3,
    seed: int = 0,
    perturb: bool = False,
    auto_approach: bool = False,
) -> Dict[str, Any]:
    """Evaluates a trained chain with feasibility-based switching.

    Args:
        checkpoint: Path of a `chain.ckpt` file written by an experiment.
        episodes: Number of evaluation episodes.
        switch_budget: Non-sequential transitions allowed per episode.
        seed: Evaluation seed.
        perturb: Drop the held object once per episode.
        auto_approach: Move the hand next to the object at stage starts.
    """
    executor = ExecConfig(
        switch_budget=switch_budget, auto_approach=auto_approach
    )
    perturbation = PerturbationConfig(enabled=perturb)

    def work():
        chain = open_chain(checkpoint)
        return _evaluate_chain(
            chain, executor, episodes, seed, NoiseConfig(), perturbation
        )

    reports = await run_blocking(work)
    return {"checkpoint": checkpoint, **summarize_reports(reports)}


@mcp.tool()
async def export_feasibility_landscape(
    checkpoint: str,
    output_csv: str,
    stage: Optional[int] = None,
    resolution: int = 21,
    angles: int = 8,
    extent: float = 0.2,
) -> Dict[str, Any]:
    """Writes feasibility scores over a grid of object poses to CSV.

    Columns are theta, x, y, F, c and feasible (c > 1), with x and y
    relative to the goal.

    Args:
        checkpoint: Path of a `chain.ckpt` file.
        output_csv: Destination CSV path.
        stage: Stage whose feasibility model is scored; defaults to the
          last stage.
        resolution: Grid points per position axis.
        angles: Number of object angles.
        extent: Half-width of the position grid in meters.
    """

    def work():
        chain = open_chain(checkpoint)
        return _export_landscape(
            chain, output_csv, stage, resolution, angles, extent
        )

    rows = await run_blocking(work)
    return {"output_csv": output_csv, "rows": rows}
