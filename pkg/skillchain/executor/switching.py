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

"""Feasibility-scored policy switching and stage estimation."""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

from skillchain.feasibility.model import TransitionModel, feasibility_score

REASON_FEASIBLE = "feasible"
REASON_RESTART = "restart"


@dataclass(frozen=True)
class SwitchDecision:
    """Outcome of a stage-estimation scan.

    `stage` is the zero-based sub-policy to run next; a restart is stage 0
    with `restart` set. `scores` maps each scanned stage to its score.
    """

    stage: int
    restart: bool = False
    scores: Dict[int, float] = field(default_factory=dict)
    reason: str = REASON_FEASIBLE


def should_switch(model: TransitionModel, window) -> bool:
    """True when the successor's score strictly exceeds 1.

    Raises:
        CalibrationError: if the model is not calibrated.
    """
    return feasibility_score(model, window) > 1.0


def select_policy(
    models: Sequence[Optional[TransitionModel]], window
) -> SwitchDecision:
    """Scans stages from the last down to the second.

    The first stage whose score exceeds 1 is chosen; when none does the
    decision is a restart. Entries that are None or uncalibrated are
    skipped.
    """
    scores: Dict[int, float] = {}
    for stage in range(len(models) - 1, 0, -1):
        model = models[stage]
        if model is None or model.threshold is None:
            continue
        score = feasibility_score(model, window)
        scores[stage] = score
        if score > 1.0:
            return SwitchDecision(stage=stage, scores=scores)
    return SwitchDecision(
        stage=0, restart=True, scores=scores, reason=REASON_RESTART
    )
