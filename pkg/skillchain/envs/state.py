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

"""World state of the planar suites and its observation encoding."""

import dataclasses
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Tuple

import numpy as np

from skillchain.errors import InvalidStateError

WORKSPACE = 0.5
ACTION_DIM = 4
HANDLE_LENGTH = 0.3

OBS_FIELDS = (
    "hand_x",
    "hand_y",
    "hand_sin",
    "hand_cos",
    "grip",
    "hand_z",
    "rel_obj_x",
    "rel_obj_y",
    "obj_sin",
    "obj_cos",
    "obj_vx",
    "obj_vy",
    "obj_omega",
    "visibility",
    "held",
    "rel_goal_x",
    "rel_goal_y",
    "goal_err_sin",
    "goal_err_cos",
    "prev_dx",
    "prev_dy",
    "prev_dtheta",
    "prev_dgrip",
)
TOOLFLIP_OBS_FIELDS = OBS_FIELDS + ("grasp_offset",)
ACTION_FIELDS = ("dx", "dy", "dtheta", "dgrip")


def wrap_angle(angle: float) -> float:
    """Wraps to (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True)
class EnvState:
    """Full simulator state; enough to reset an environment exactly.

    Lengths are meters, angles radians, velocities per second. `step` counts
    steps within the current stage. `grasp_rel_angle` is the object angle
    relative to the hand while held; `grasp_hand_angle` is the hand angle at
    the moment of grasping.
    """

    suite: str
    hand_x: float
    hand_y: float
    hand_angle: float
    grip: float
    obj_x: float
    obj_y: float
    obj_angle: float
    goal_x: float
    goal_y: float
    goal_angle: float
    hand_z: float = 0.0
    obj_vx: float = 0.0
    obj_vy: float = 0.0
    obj_omega: float = 0.0
    depth: float = 0.0
    held: bool = False
    dropped: bool = False
    grip_armed: bool = True
    grasp_rel_angle: float = 0.0
    grasp_hand_angle: float = 0.0
    grasp_offset: float = 0.0
    stage: int = 0
    step: int = 0
    start_angle: float = 0.0
    prev_action: Tuple[float, ...] = (0.0,) * ACTION_DIM
    obs_bias: Tuple[float, ...] = ()
    action_bias: Tuple[float, ...] = ()

    @property
    def visibility(self) -> float:
        return 1.0 - self.depth

    @property
    def obj_z(self) -> float:
        return self.hand_z if self.held else 0.0

    def replace(self, **changes) -> "EnvState":
        return dataclasses.replace(self, **changes)


class StepResult(NamedTuple):
    state: EnvState
    observation: np.ndarray
    reward: float
    success: bool
    done: bool


def state_diagnostics(state: EnvState) -> List[str]:
    """Lists every violated state invariant; empty means valid."""
    problems = []
    for f in dataclasses.fields(state):
        value = getattr(state, f.name)
        if isinstance(value, float) and not math.isfinite(value):
            problems.append(f"{f.name} is not finite ({value}).")
    for name in ("prev_action", "obs_bias", "action_bias"):
        if not all(math.isfinite(v) for v in getattr(state, name)):
            problems.append(f"{name} has non-finite entries.")
    if len(state.prev_action) != ACTION_DIM:
        problems.append(f"prev_action must have {ACTION_DIM} entries.")
    if not 0.0 <= state.depth <= 1.0:
        problems.append(f"depth {state.depth} outside [0, 1].")
    if not 0.0 <= state.grip <= 1.0:
        problems.append(f"grip {state.grip} outside [0, 1].")
    if state.hand_z < 0.0:
        problems.append(f"hand_z {state.hand_z} is negative.")
    for name in ("hand_angle", "obj_angle", "goal_angle"):
        angle = getattr(state, name)
        if math.isfinite(angle) and not -math.pi < angle <= math.pi:
            problems.append(f"{name} {angle} not wrapped to (-pi, pi].")
    if state.held and state.dropped:
        problems.append("held and dropped are both set.")
    if state.held:
        expected = wrap_angle(state.hand_angle + state.grasp_rel_angle)
        if abs(wrap_angle(expected - state.obj_angle)) > 1e-6:
            problems.append("held object angle is not bound to the hand.")
        if state.suite == "blockchain":
            dist = math.hypot(
                state.obj_x - state.hand_x, state.obj_y - state.hand_y
            )
            if dist > 1e-6:
                problems.append("held object is not at the hand.")
    if state.step < 0 or state.stage < 0:
        problems.append("stage and step must be non-negative.")
    return problems


def check_state(state: EnvState, suite: str) -> EnvState:
    """Returns `state` if it is valid for `suite`.

    Raises:
        InvalidStateError: listing every violated invariant.
    """
    problems = state_diagnostics(state)
    if state.suite != suite:
        problems.insert(0, f"state is for suite '{state.suite}'.")
    if problems:
        raise InvalidStateError(
            f"Invalid {suite} state: {problems[0]}", diagnostics=problems
        )
    return state


def observe(state: EnvState) -> np.ndarray:
    """Encodes a state in the documented `OBS_FIELDS` layout, noise-free."""
    g_err = state.goal_angle - state.obj_angle
    obs = [
        state.hand_x,
        state.hand_y,
        math.sin(state.hand_angle),
        math.cos(state.hand_angle),
        state.grip,
        state.hand_z,
        state.obj_x - state.hand_x,
        state.obj_y - state.hand_y,
        math.sin(state.obj_angle),
        math.cos(state.obj_angle),
        state.obj_vx,
        state.obj_vy,
        state.obj_omega,
        state.visibility,
        1.0 if state.held else 0.0,
        state.goal_x - state.obj_x,
        state.goal_y - state.obj_y,
        math.sin(g_err),
        math.cos(g_err),
        *state.prev_action,
    ]
    if state.suite == "toolflip":
        obs.append(state.grasp_offset / (HANDLE_LENGTH / 2.0))
    return np.asarray(obs, dtype=np.float64)


def obs_fields(suite: str) -> Tuple[str, ...]:
    return TOOLFLIP_OBS_FIELDS if suite == "toolflip" else OBS_FIELDS
