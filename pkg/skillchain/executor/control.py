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

"""Action smoothing, approach macro and the drop perturbation."""

import math
from typing import Optional, Tuple

import numpy as np

from skillchain.config import PerturbationConfig
from skillchain.envs.state import EnvState, wrap_angle
from skillchain.errors import InputError


def smooth_action(prev_action, raw_action, ema: float) -> np.ndarray:
    """Exponential moving average: ema * raw + (1 - ema) * prev."""
    prev = np.asarray(prev_action, dtype=np.float64)
    raw = np.asarray(raw_action, dtype=np.float64)
    if prev.shape != raw.shape:
        raise InputError(
            f"Action shapes differ: {prev.shape} and {raw.shape}."
        )
    return ema * raw + (1.0 - ema) * prev


def auto_approach(
    state: EnvState, target: Tuple[float, float], radius: float
) -> EnvState:
    """Moves the hand to `radius` from `target` along the line between them.

    Hands already within the radius are left alone. The macro zeroes the
    object velocities and earns no reward.
    """
    tx, ty = target
    dx, dy = state.hand_x - tx, state.hand_y - ty
    dist = math.hypot(dx, dy)
    if dist <= radius:
        return state
    scale = radius / dist
    return state.replace(
        hand_x=tx + dx * scale,
        hand_y=ty + dy * scale,
        obj_vx=0.0,
        obj_vy=0.0,
        obj_omega=0.0,
    )


def drop_object(
    state: EnvState, rng: np.random.Generator, knock_angle: float
) -> EnvState:
    """Releases a held object onto the table and knocks it around."""
    knock = rng.uniform(-knock_angle, knock_angle) if knock_angle else 0.0
    return state.replace(
        held=False,
        dropped=False,
        grip=0.0,
        grip_armed=True,
        obj_angle=wrap_angle(state.obj_angle + knock),
        obj_vx=0.0,
        obj_vy=0.0,
        obj_omega=0.0,
    )


class Perturber:
    """Schedules at most one drop per episode.

    The episode is selected with the configured probability. The drop then
    fires a random 1 to 10 steps after the object is first held in one of
    the configured stages.
    """

    def __init__(
        self,
        config: PerturbationConfig,
        stage_names,
        rng: np.random.Generator,
    ):
        self.config = config
        self.stage_names = list(stage_names)
        self.rng = rng
        self.armed = config.enabled and rng.random() < config.probability
        self._delay = int(rng.integers(1, 11)) if self.armed else 0
        self._countdown: Optional[int] = None
        self.fired = False

    def __call__(self, state: EnvState) -> EnvState:
        if not self.armed or self.fired:
            return state
        eligible = self.stage_names[state.stage] in self.config.stages
        if self._countdown is None:
            if state.held and eligible:
                self._countdown = self._delay
            return state
        self._countdown -= 1
        if self._countdown > 0 or not state.held:
            return state
        self.fired = True
        return drop_object(state, self.rng, self.config.knock_angle)
