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

"""Hand-written controllers for every stage template.

They read noise-free observations only, so they can stand in for trained
policies in the executor and serve as reference solutions in tests.
"""

import math

import numpy as np

from skillchain.envs.state import HANDLE_LENGTH, OBS_FIELDS, wrap_angle
from skillchain.envs.suites import GRASP_HEIGHT, MAX_STEP, MAX_TURN

IDX = {name: i for i, name in enumerate(OBS_FIELDS)}
GRASP_POINT = 0.1


def _angle(obs, sin_key: str, cos_key: str) -> float:
    return math.atan2(obs[IDX[sin_key]], obs[IDX[cos_key]])


def _toward(dx: float, dy: float):
    return (
        float(np.clip(dx / MAX_STEP, -1.0, 1.0)),
        float(np.clip(dy / MAX_STEP, -1.0, 1.0)),
    )


def _align(hand_angle: float, obj_angle: float) -> float:
    """Wrist turn that aligns with the object modulo pi."""
    err = wrap_angle(2.0 * (obj_angle - hand_angle)) / 2.0
    return float(np.clip(err / MAX_TURN, -1.0, 1.0))


class ScriptedPolicy:
    """Reference controller for one stage template.

    Args:
        template: 'search', 'orient', 'grasp' or 'insert'.
        suite: Suite name; ToolFlip grasps the handle off-center.
        target_angle: Orientation the orient controller turns toward.
    """

    def __init__(
        self, template: str, suite: str = "blockchain", target_angle=0.0
    ):
        self.template = template
        self.suite = suite
        self.target_angle = target_angle

    def act(self, obs: np.ndarray) -> np.ndarray:
        fn = getattr(self, f"_{self.template}")
        return np.asarray(fn(np.asarray(obs, dtype=np.float64)))

    def _search(self, obs):
        dx, dy = obs[IDX["rel_obj_x"]], obs[IDX["rel_obj_y"]]
        if math.hypot(dx, dy) > 0.02:
            ax, ay = _toward(dx, dy)
            return [ax, ay, 0.0, -1.0]
        prev = obs[IDX["prev_dx"]]
        return [-1.0 if prev > 0.0 else 1.0, 0.0, 0.0, -1.0]

    def _orient(self, obs):
        dx, dy = obs[IDX["rel_obj_x"]], obs[IDX["rel_obj_y"]]
        ax, ay = _toward(dx, dy)
        obj_angle = _angle(obs, "obj_sin", "obj_cos")
        err = wrap_angle(self.target_angle - obj_angle)
        spin = float(np.clip(2.0 * err, -1.0, 1.0))
        return [ax, ay, spin, -1.0]

    def _grasp(self, obs):
        if obs[IDX["held"]] > 0.5:
            return [0.0, 0.0, 0.0, 1.0]
        dx, dy = obs[IDX["rel_obj_x"]], obs[IDX["rel_obj_y"]]
        obj_angle = _angle(obs, "obj_sin", "obj_cos")
        hand_angle = _angle(obs, "hand_sin", "hand_cos")
        if self.suite == "toolflip":
            # grasp toward the end of the handle nearest the hand
            ux, uy = math.cos(obj_angle), math.sin(obj_angle)
            side = -1.0 if dx * ux + dy * uy > 0.0 else 1.0
            side *= min(GRASP_POINT, HANDLE_LENGTH / 2.0)
            dx, dy = dx + side * ux, dy + side * uy
        turn = _align(hand_angle, obj_angle)
        misalign = abs(wrap_angle(2.0 * (obj_angle - hand_angle))) / 2.0
        ax, ay = _toward(dx, dy)
        ready = (
            math.hypot(dx, dy) < 0.03
            and misalign < 0.2
            and obs[IDX["hand_z"]] < GRASP_HEIGHT
        )
        return [ax, ay, turn, 1.0 if ready else -1.0]

    def _insert(self, obs):
        if obs[IDX["held"]] < 0.5:
            return [0.0, 0.0, 0.0, 0.0]
        ax, ay = _toward(obs[IDX["rel_goal_x"]], obs[IDX["rel_goal_y"]])
        err = _angle(obs, "goal_err_sin", "goal_err_cos")
        turn = float(np.clip(err / MAX_TURN, -1.0, 1.0))
        return [ax, ay, turn, 1.0]
